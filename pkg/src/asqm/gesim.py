"""Gilbert-Elliott packet loss and a fluid playout-buffer model.

The channel is a two-state Markov chain: ``p`` = P(bad | good) and
``r`` = P(good | bad); a packet sent while the chain is in the bad state is
lost. The playout model turns a loss trace plus a bandwidth throttle into
the initial delay and the stall events a player would have logged.
"""
from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SimulationTimeoutError, UndefinedStationaryError
from .telemetry import INITIAL_BUFFERING, PLAYING, REBUFFERING, BufferEvent

# Bandwidth scenarios used for the stall-pattern emulation, as percent of
# the media bitrate.
BANDWIDTH_SCENARIOS = (200, 100, 90, 80, 70, 50)

# Parameter pairs that both give a 1 % stationary loss rate: long rare bursts
# and short frequent ones.
LONG_BURST_PARAMS = (0.0010101, 0.10)
SHORT_BURST_PARAMS = (0.0075758, 0.75)

_EPS = 1e-9


def ge_plr(p: float, r: float) -> float:
    """Stationary loss rate p / (p + r)."""
    if not (0 <= p <= 1 and 0 <= r <= 1):
        raise InvalidInputError(f"transition probabilities must lie in [0, 1], got p={p}, r={r}")
    if p + r == 0:
        raise UndefinedStationaryError("p + r = 0: the chain has no unique stationary distribution")
    return p / (p + r)


@dataclass(frozen=True)
class GEChannel:
    p: float
    r: float
    seed: int = 0
    start: str = "good"  # or "stationary"

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.r <= 1):
            raise InvalidInputError(f"transition probabilities must lie in [0, 1], got p={self.p}, r={self.r}")
        if self.start not in ("good", "stationary"):
            raise InvalidInputError(f"unknown start state {self.start!r}")

    @property
    def plr(self) -> float:
        return ge_plr(self.p, self.r)


def ge_trace(channel: GEChannel, n: int) -> np.ndarray:
    """Boolean loss trace of ``n`` packets (True = lost).

    The chain sits in the good state before the first packet (or is drawn
    from the stationary distribution) and takes one transition per packet.
    """
    if n < 1:
        raise InvalidInputError(f"packet count must be >= 1, got {n}")
    rng = np.random.default_rng(channel.seed)
    p, r = channel.p, channel.r
    bad = False
    if channel.start == "stationary" and p + r > 0:
        bad = bool(rng.random() < p / (p + r))
    out = bytearray(n)
    for i, u in enumerate(rng.random(n).tolist()):
        bad = (u >= r) if bad else (u < p)
        out[i] = bad
    return np.frombuffer(bytes(out), dtype=np.bool_).copy()


def burst_lengths(trace: np.ndarray) -> np.ndarray:
    """Lengths of maximal runs of consecutive losses."""
    padded = np.concatenate(([0], np.asarray(trace, dtype=np.int8), [0]))
    edges = np.flatnonzero(np.diff(padded))
    return edges[1::2] - edges[::2]


@dataclass(frozen=True)
class LossStats:
    packets: int
    losses: int
    empirical_plr: float
    burst_histogram: dict[int, int]

    @property
    def mean_burst(self) -> float:
        bursts = sum(self.burst_histogram.values())
        if not bursts:
            return 0.0
        return sum(k * v for k, v in self.burst_histogram.items()) / bursts

    @classmethod
    def from_trace(cls, trace: np.ndarray) -> "LossStats":
        trace = np.asarray(trace, dtype=bool)
        losses = int(trace.sum())
        hist = dict(sorted(Counter(burst_lengths(trace).tolist()).items()))
        return cls(len(trace), losses, losses / len(trace), hist)


def trace_to_text(trace: np.ndarray, width: int = 100) -> str:
    """One character per packet ('.' delivered, 'x' lost), ``width`` per line."""
    chars = "".join("x" if lost else "." for lost in np.asarray(trace, dtype=bool).tolist())
    return "\n".join(chars[i:i + width] for i in range(0, len(chars), width)) + "\n"


def trace_from_text(text: str) -> np.ndarray:
    chars = "".join(text.split())
    if set(chars) - {".", "x"}:
        raise InvalidInputError("loss trace text may contain only '.' and 'x'")
    return np.array([c == "x" for c in chars], dtype=bool)


@dataclass(frozen=True)
class StreamConfig:
    media_bitrate: float  # kbps
    media_len: float  # s
    bandwidth_pct: float = 100.0
    packet_size: int = 1316  # bytes
    loss_penalty: float = 0.2  # s of stalled download per lost packet
    startup_threshold: float = 2.0  # s of media
    rebuffer_threshold: float = 2.0  # s of media
    startup_timeout: float = 3600.0  # s of wall clock

    def __post_init__(self):
        for name in ("media_bitrate", "media_len", "bandwidth_pct", "packet_size",
                     "startup_threshold", "rebuffer_threshold", "startup_timeout"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be positive, got {value}")
        if not (math.isfinite(self.loss_penalty) and self.loss_penalty >= 0):
            raise InvalidInputError(f"loss_penalty must be non-negative, got {self.loss_penalty}")

    @property
    def bandwidth(self) -> float:
        """Link rate in kbps."""
        return self.bandwidth_pct / 100.0 * self.media_bitrate

    @property
    def packet_media(self) -> float:
        """Media seconds carried by one full packet."""
        return self.packet_size * 8 / (self.media_bitrate * 1000.0)

    @property
    def packet_count(self) -> int:
        return max(1, math.ceil(self.media_len / self.packet_media - _EPS))


@dataclass(frozen=True)
class StallEvent:
    media_position: float
    wall_start: float
    duration: float


@dataclass(frozen=True)
class PlayoutTrace:
    initial_delay: float
    stalls: tuple[StallEvent, ...]
    loss_stats: LossStats
    media_len: float
    end_time: float
    downloaded_at_stalls: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def total_stall_time(self) -> float:
        return math.fsum(s.duration for s in self.stalls)

    def to_events(self) -> list[BufferEvent]:
        """Render as a buffer event log (initial buffering, playing, rebuffering, ...)."""
        events = [BufferEvent(INITIAL_BUFFERING, 0.0, self.initial_delay, 0.0)]
        wall, media = self.initial_delay, 0.0
        for s in self.stalls:
            events.append(BufferEvent(PLAYING, wall, s.wall_start, media))
            events.append(BufferEvent(REBUFFERING, s.wall_start, s.wall_start + s.duration,
                                      s.media_position))
            wall, media = s.wall_start + s.duration, s.media_position
        events.append(BufferEvent(PLAYING, wall, self.end_time, media))
        return events


class _DownloadCurve:
    """Downloaded media seconds as a piecewise-linear function of wall time.

    Data arrives at ``rate`` media-seconds per wall-second; each lost packet
    freezes the download for ``penalty`` seconds before that packet arrives.
    """

    def __init__(self, loss_levels: list[float], rate: float, penalty: float, total: float):
        self.rate = rate
        self.total = total
        ts, ds, slopes = [], [], []
        t = d = 0.0
        for j, level in enumerate(loss_levels):
            if penalty <= 0:
                break
            start = level / rate + penalty * j
            if start > t:
                ts.append(t), ds.append(d), slopes.append(rate)
            ts.append(start), ds.append(level), slopes.append(0.0)
            t, d = start + penalty, level
        ts.append(t), ds.append(d), slopes.append(rate)
        self.done = t + (total - d) / rate
        self.t0, self.d0, self.slope = ts, ds, slopes

    def level(self, t: float) -> float:
        if t >= self.done:
            return self.total
        k = bisect.bisect_right(self.t0, t) - 1
        return min(self.d0[k] + self.slope[k] * (t - self.t0[k]), self.total)

    def time_to_reach(self, level: float) -> float:
        """Earliest wall time at which ``level`` media seconds are downloaded."""
        level = min(level, self.total)
        k = bisect.bisect_left(self.d0, level) - 1
        if k < 0:
            return 0.0
        while self.slope[k] == 0.0:
            k -= 1
        return self.t0[k] + (level - self.d0[k]) / self.slope[k]

    def piece_end(self, k: int) -> float:
        return self.t0[k + 1] if k + 1 < len(self.t0) else self.done

    def first_drain(self, t: float, m: float) -> float | None:
        """First time >= t at which playback from media ``m`` catches the download, if any."""
        k = max(bisect.bisect_right(self.t0, t) - 1, 0)
        while True:
            start, end = max(t, self.t0[k]), self.piece_end(k)
            buffer = self.level(start) - (m + start - t)
            net = self.slope[k] - 1.0
            if buffer <= _EPS and net <= 0:
                return start
            if net < 0:
                hit = start + buffer / -net
                if hit <= end:
                    return hit
            if end >= self.done:
                return None
            k += 1


def simulate_playout(cfg: StreamConfig, channel: GEChannel) -> PlayoutTrace:
    """Deterministic playout reconstruction for one (config, channel seed) pair."""
    trace = ge_trace(channel, cfg.packet_count)
    stats = LossStats.from_trace(trace)
    pm = cfg.packet_media
    curve = _DownloadCurve([i * pm for i in np.flatnonzero(trace).tolist()],
                           cfg.bandwidth_pct / 100.0, cfg.loss_penalty, cfg.media_len)

    t = curve.time_to_reach(min(cfg.startup_threshold, cfg.media_len))
    if t > cfg.startup_timeout:
        raise SimulationTimeoutError(
            f"startup needs {t:.1f} s of wall clock, above the {cfg.startup_timeout} s cap")
    initial_delay, m = t, 0.0
    stalls, downloaded = [], []
    while True:
        hit = curve.first_drain(t, m)
        position = m + (hit - t) if hit is not None else cfg.media_len
        if hit is None or position >= cfg.media_len - _EPS:
            end = t + (cfg.media_len - m)
            break
        resume = curve.time_to_reach(min(position + cfg.rebuffer_threshold, cfg.media_len))
        stalls.append(StallEvent(position, hit, resume - hit))
        downloaded.append(curve.level(hit))
        t, m = resume, position
    return PlayoutTrace(initial_delay, tuple(stalls), stats, cfg.media_len, end, tuple(downloaded))
