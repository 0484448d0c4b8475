"""Player buffer event logs, stall summaries and the impairment-scenario corpus.

Session logs are JSON Lines. An optional header record comes first::

    {"session_id": "s1", "audio_id": "a1", "category": "music",
     "codec": "AAC-LC", "bitrate_kbps": 576, "media_len": 60}
    {"kind": "initial_buffering", "wall_start": 0, "wall_end": 2.5, "media_position_at_start": 0}
    {"kind": "playing", "wall_start": 2.5, "wall_end": 12.5, "media_position_at_start": 0}
    {"kind": "rebuffering", "wall_start": 12.5, "wall_end": 15.5, "media_position_at_start": 10}
    ...
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, PlacementError, SessionParseError, SessionRangeError
from .model import StallSummary

INITIAL_BUFFERING = "initial_buffering"
PLAYING = "playing"
REBUFFERING = "rebuffering"
EVENT_KINDS = (INITIAL_BUFFERING, PLAYING, REBUFFERING)

# wall-clock slack allowed between consecutive events
CONTIGUITY_TOL = 1e-6

HEADER_FIELDS = ("session_id", "audio_id", "category", "codec", "bitrate_kbps", "media_len")
EVENT_FIELDS = ("kind", "wall_start", "wall_end", "media_position_at_start")


@dataclass(frozen=True)
class BufferEvent:
    kind: str
    wall_start: float
    wall_end: float
    media_position_at_start: float

    @property
    def duration(self) -> float:
        return self.wall_end - self.wall_start


@dataclass(frozen=True)
class SessionHeader:
    session_id: str
    audio_id: str
    category: str
    codec: str
    bitrate_kbps: float
    media_len: float


@dataclass(frozen=True)
class Session:
    header: SessionHeader | None
    events: tuple[BufferEvent, ...]


def _number(record: dict, key: str, line: int) -> float:
    value = record.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SessionParseError(f"field {key!r} must be a number, got {value!r}", line)
    value = float(value)
    if not math.isfinite(value):
        raise SessionParseError(f"field {key!r} must be finite", line)
    return value


def load_session(text: str) -> Session:
    """Parse and validate a session log document."""
    header = None
    events: list[BufferEvent] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SessionParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(record, dict):
            raise SessionParseError("record must be a JSON object", lineno)
        if "kind" not in record:
            if "session_id" not in record:
                raise SessionParseError("record is neither a header nor an event", lineno)
            if header is not None or events:
                raise SessionParseError("header record must be the first record", lineno)
            missing = [f for f in HEADER_FIELDS if f not in record]
            if missing:
                raise SessionParseError(f"header missing fields: {', '.join(missing)}", lineno)
            media_len = _number(record, "media_len", lineno)
            if media_len <= 0:
                raise SessionParseError("media_len must be positive", lineno)
            header = SessionHeader(str(record["session_id"]), str(record["audio_id"]),
                                   str(record["category"]), str(record["codec"]),
                                   _number(record, "bitrate_kbps", lineno), media_len)
            continue
        kind = record["kind"]
        if kind not in EVENT_KINDS:
            raise SessionParseError(f"unknown event kind {kind!r}", lineno)
        missing = [f for f in EVENT_FIELDS if f not in record]
        if missing:
            raise SessionParseError(f"event missing fields: {', '.join(missing)}", lineno)
        events.append(BufferEvent(kind, _number(record, "wall_start", lineno),
                                  _number(record, "wall_end", lineno),
                                  _number(record, "media_position_at_start", lineno)))
        lines.append(lineno)
    validate_events(events, lines)
    return Session(header, tuple(events))


def parse_session(text: str) -> list[BufferEvent]:
    return list(load_session(text).events)


def validate_events(events: Sequence[BufferEvent], lines: Sequence[int] | None = None) -> None:
    """Check the buffer-state machine: initial buffering first, stalls only after playback."""
    if not events:
        raise SessionParseError("session contains no events")
    line = (lambda i: lines[i]) if lines else (lambda i: None)
    prev = None
    for i, ev in enumerate(events):
        if ev.kind not in EVENT_KINDS:
            raise SessionParseError(f"unknown event kind {ev.kind!r}", line(i))
        if ev.wall_end < ev.wall_start:
            raise SessionParseError("wall_end precedes wall_start", line(i))
        if ev.wall_start < 0 or ev.media_position_at_start < 0:
            raise SessionParseError("times and media positions must be non-negative", line(i))
        if i == 0:
            if ev.kind != INITIAL_BUFFERING:
                raise SessionParseError("first event must be initial_buffering", line(i))
        else:
            if ev.kind == INITIAL_BUFFERING:
                raise SessionParseError("initial_buffering may only appear once, first", line(i))
            if ev.kind == REBUFFERING and prev.kind != PLAYING:
                raise SessionParseError("rebuffering must follow a playing period", line(i))
            if abs(ev.wall_start - prev.wall_end) > CONTIGUITY_TOL:
                raise SessionParseError(
                    f"events not contiguous: gap from {prev.wall_end} to {ev.wall_start}", line(i))
            if ev.media_position_at_start < prev.media_position_at_start - CONTIGUITY_TOL:
                raise SessionParseError("media position moved backwards", line(i))
        prev = ev


def dump_session(events: Iterable[BufferEvent], header: SessionHeader | None = None) -> str:
    out = []
    if header is not None:
        out.append(json.dumps(asdict(header)))
    out.extend(json.dumps(asdict(ev)) for ev in events)
    return "\n".join(out) + "\n"


def segment_of(position: float, media_len: float) -> int:
    """Index (0=A, 1=B, 2=C) of the media-timeline third containing ``position``."""
    return min(int(position * 3.0 / media_len), 2)


def summarize(events: Sequence[BufferEvent], media_len: float) -> StallSummary:
    media_len = float(media_len)
    if not media_len > 0:
        raise SessionRangeError(f"media length must be positive, got {media_len}")
    validate_events(events)
    durations: list[list[float]] = [[], [], []]
    for ev in events:
        if ev.media_position_at_start > media_len + 1e-9:
            raise SessionRangeError(
                f"media position {ev.media_position_at_start} beyond media length {media_len}")
        # zero-length rebuffering records carry no interruption
        if ev.kind == REBUFFERING and ev.duration > 0:
            durations[segment_of(ev.media_position_at_start, media_len)].append(ev.duration)
    stalls = tuple(len(d) for d in durations)
    mean_len = tuple(math.fsum(d) / len(d) if d else 0.0 for d in durations)
    third = media_len / 3.0
    return StallSummary(stalls, mean_len, (third, third, media_len - 2 * third),
                        events[0].duration, media_len)


# ---------------------------------------------------------------------------
# Impairment groups and models

INITIAL_DELAY_RANGES = {"L": (1, 3), "M": (4, 6), "H": (7, 9)}
STALL_COUNT_RANGES = {"L": (1, 4), "M": (5, 8), "H": (9, 12)}
STALL_LENGTH_RANGES = {"L": (1, 2), "M": (3, 5), "H": (6, 7)}

_ = None
# model: (segment A, segment B, segment C); each "count/length" level or None
IMPAIRMENT_MODELS = {
    "M1": ("L/L", _, _), "M2": (_, "L/L", _), "M3": (_, _, "L/L"),
    "M4": ("L/M", _, _), "M5": (_, "L/M", _), "M6": (_, _, "L/M"),
    "M7": ("L/H", _, _), "M8": (_, "L/H", _), "M9": (_, _, "L/H"),
    "M10": ("M/L", _, _), "M11": (_, "M/L", _), "M12": (_, _, "M/L"),
    "M13": ("M/M", _, _), "M14": (_, "M/M", _), "M15": (_, _, "M/M"),
    "M16": ("M/H", _, _), "M17": (_, "M/H", _), "M18": (_, _, "M/H"),
    "M19": ("H/L", _, _), "M20": (_, "H/L", _), "M21": (_, _, "H/L"),
    "M22": ("H/M", _, _), "M23": (_, "H/M", _), "M24": (_, _, "H/M"),
    "M25": ("H/H", _, _), "M26": (_, "H/H", _), "M27": (_, _, "H/H"),
    "M28": ("L/L", _, _), "M29": (_, "L/L", _), "M30": (_, _, "L/L"),
    "M31": ("M/M", _, _), "M32": (_, "M/M", _), "M33": (_, _, "M/M"),
    "M34": ("H/H", _, _), "M35": (_, "H/H", _), "M36": (_, _, "H/H"),
    "M37": ("L/L", "M/M", "H/H"),
    "M38": ("H/H", "M/M", "L/L"),
    "M39": ("M/M", "L/L", _),
    "M40": ("M/M", "H/H", _),
    "M41": (_, "M/M", "L/L"),
    "M42": (_, "M/M", "H/H"),
    "M43": ("L/L", "L/L", "L/L"),
    "M44": ("M/M", "M/M", "M/M"),
    "M45": ("H/H", "H/H", "H/H"),
    "M46": ("H/L", "H/L", "H/L"),
    "M47": ("L/H", "L/H", "L/H"),
    "M48": ("L/M", "L/H", _),
    "M49": (_, "L/M", "L/H"),
    "M50": (_, "H/M", "H/M"),
    "M51": ("H/M", "H/M", _),
    "M52": ("H/L", "H/L", _),
    "M53": (_, "H/L", "H/L"),
}
del _

MODEL_IDS = tuple(IMPAIRMENT_MODELS)


def model_levels(model_id: str) -> tuple[tuple[str, str] | None, ...]:
    """Per-segment (count level, length level) pairs of one impairment model (M1..M53)."""
    key = model_id.strip().upper()
    if key not in IMPAIRMENT_MODELS:
        raise InvalidInputError(f"unknown impairment model {model_id!r}")
    return tuple(tuple(cell.split("/")) if cell else None for cell in IMPAIRMENT_MODELS[key])


def impairment_model_rows() -> list[tuple[str, ...]]:
    """The impairment-model table in its printed layout: model, then Ns/Sl labels per segment ('-' when empty)."""
    rows = []
    for model_id in MODEL_IDS:
        cells = [model_id]
        for pair in model_levels(model_id):
            cells += [f"Ns-{pair[0]}", f"Sl-{pair[1]}"] if pair else ["-", "-"]
        rows.append(tuple(cells))
    return rows


def parse_model_selection(spec: str | Iterable[str] | None) -> list[str]:
    """Expand ``"M1,M5-M7"`` style selections; ``None`` or ``"all"`` means every model."""
    if spec is None:
        return list(MODEL_IDS)
    items = spec.replace(" ", "").split(",") if isinstance(spec, str) else list(spec)
    if items == ["all"]:
        return list(MODEL_IDS)
    out: list[str] = []
    for item in items:
        if not item:
            continue
        item = item.upper()
        if "-" in item or ".." in item:
            try:
                lo, hi = item.replace("..", "-").split("-")
                lo_n, hi_n = int(lo.lstrip("M")), int(hi.lstrip("M"))
            except ValueError:
                raise InvalidInputError(f"bad model range {item!r}") from None
            picked = [f"M{n}" for n in range(lo_n, hi_n + 1)]
        else:
            picked = [item if item.startswith("M") else f"M{item}"]
        for m in picked:
            model_levels(m)
            if m not in out:
                out.append(m)
    if not out:
        raise InvalidInputError("model selection is empty")
    return out


@dataclass(frozen=True)
class ImpairmentScenario:
    """One sampled realization of an impairment model.

    ``stalls[i]`` lists ``(media_position, duration)`` pairs of segment i.
    """

    model_id: str
    levels: tuple[tuple[str, str] | None, ...]
    initial_delay_level: str | None
    stalls: tuple[tuple[tuple[float, float], ...], ...]
    initial_delay: float
    media_len: float
    seed: int = field(default=0, compare=False)

    @property
    def counts(self) -> tuple[int, int, int]:
        return tuple(len(s) for s in self.stalls)

    @property
    def mean_lens(self) -> tuple[float, float, float]:
        return tuple(math.fsum(d for _, d in s) / len(s) if s else 0.0 for s in self.stalls)

    def summary(self) -> StallSummary:
        third = self.media_len / 3.0
        return StallSummary(self.counts, self.mean_lens,
                            (third, third, self.media_len - 2 * third),
                            self.initial_delay, self.media_len)


def _deciseconds(lo: float, hi: float, rng: np.random.Generator) -> float:
    return int(rng.integers(round(lo * 10), round(hi * 10), endpoint=True)) / 10.0


def _segment_grid(media_len: float) -> list[list[int]]:
    """Stall-position candidates on a 0.1 s grid, split by segment; excludes 0 and the end."""
    grid: list[list[int]] = [[], [], []]
    top = math.ceil(media_len * 10 - 1e-9)
    for g in range(1, top):
        pos = g / 10.0
        if pos < media_len:
            grid[segment_of(pos, media_len)].append(g)
    return grid


def _place(candidates: list[int], k: int, gap: int, rng: np.random.Generator) -> list[int] | None:
    """Choose k candidates at least ``gap`` grid steps apart, uniformly over valid placements."""
    slack = len(candidates) - (k - 1) * (gap - 1)
    if slack < k:
        return None
    picks = np.sort(rng.choice(slack, size=k, replace=False))
    return [candidates[int(p) + j * (gap - 1)] for j, p in enumerate(picks)]


def realize_scenario(model_id: str, media_len: float, rng: np.random.Generator,
                     initial_delay_level: str | None = None, min_gap: float = 0.5,
                     max_retries: int = 50, seed: int = 0) -> ImpairmentScenario:
    levels = model_levels(model_id)
    grid = _segment_grid(media_len)
    gap = max(1, round(min_gap * 10))
    for _attempt in range(max_retries):
        stalls = []
        for seg, pair in enumerate(levels):
            if pair is None:
                stalls.append(())
                continue
            count = int(rng.integers(*STALL_COUNT_RANGES[pair[0]], endpoint=True))
            positions = _place(grid[seg], count, gap, rng)
            if positions is None:
                break
            stalls.append(tuple((g / 10.0, _deciseconds(*STALL_LENGTH_RANGES[pair[1]], rng))
                                for g in positions))
        else:
            delay = 0.0
            if initial_delay_level is not None:
                delay = _deciseconds(*INITIAL_DELAY_RANGES[initial_delay_level], rng)
            return ImpairmentScenario(model_id.upper(), levels, initial_delay_level,
                                      tuple(stalls), delay, float(media_len), seed)
    raise PlacementError(
        f"{model_id}: cannot place stalls {min_gap} s apart in {media_len} s of media "
        f"after {max_retries} attempts")


def generate_scenarios(seed: int, media_len: float, models: Iterable[str] | None = None,
                       initial_delay_level: str | None = None, min_gap: float = 0.5,
                       max_retries: int = 50) -> list[ImpairmentScenario]:
    """Sample one realization per model.

    Each model draws from its own stream keyed by (seed, model number), so a
    model's realization does not depend on which other models are selected.
    """
    if not media_len > 0:
        raise InvalidInputError(f"media length must be positive, got {media_len}")
    if initial_delay_level is not None and initial_delay_level not in INITIAL_DELAY_RANGES:
        raise InvalidInputError(f"unknown initial delay level {initial_delay_level!r}")
    selected = parse_model_selection(models)
    out = []
    for model_id in selected:
        rng = np.random.default_rng([seed, int(model_id[1:])])
        out.append(realize_scenario(model_id, media_len, rng, initial_delay_level,
                                    min_gap, max_retries, seed))
    return out


def scenario_to_session(scenario: ImpairmentScenario) -> list[BufferEvent]:
    """Synthesize a buffer-event log that realizes ``scenario`` exactly."""
    events = [BufferEvent(INITIAL_BUFFERING, 0.0, scenario.initial_delay, 0.0)]
    wall, media = scenario.initial_delay, 0.0
    ordered = sorted(p for seg in scenario.stalls for p in seg)
    for position, duration in ordered:
        end = wall + (position - media)
        events.append(BufferEvent(PLAYING, wall, end, media))
        events.append(BufferEvent(REBUFFERING, end, end + duration, position))
        wall, media = end + duration, position
    events.append(BufferEvent(PLAYING, wall, wall + (scenario.media_len - media), media))
    return events


def stall_events(events: Sequence[BufferEvent]) -> list[BufferEvent]:
    return [ev for ev in events if ev.kind == REBUFFERING]

