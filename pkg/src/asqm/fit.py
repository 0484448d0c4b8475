"""Least-squares recovery of the stall-model weights.

Each observation contributes one row of the over-determined system

    [1, x_A, x_B, x_C] . [ln C, D_A, D_B, D_C] = ln(observed MOS)

with ``x_i = S_i * L_i / T_i``. The system is solved in the minimum-norm
least-squares sense (pseudo-inverse).
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, RankDeficientWarning, UnderdeterminedError
from .model import SegmentWeights, StallSummary

N_UNKNOWNS = 4

DATASET_COLUMNS = ("model_id", "s_a", "l_a", "t_a", "s_b", "l_b", "t_b",
                   "s_c", "l_c", "t_c", "q_a", "mos")


@dataclass(frozen=True)
class FitObservation:
    features: tuple[float, float, float]
    q_a: float
    observed_mos: float
    model_id: str = ""

    def __post_init__(self):
        feats = tuple(float(x) for x in self.features)
        if len(feats) != 3 or not all(math.isfinite(x) and x >= 0 for x in feats):
            raise DatasetError(f"{self.model_id or 'observation'}: features must be three finite values >= 0")
        object.__setattr__(self, "features", feats)

    @property
    def impairment(self) -> float:
        """Observed stall impairment I_S = Q_A - MOS."""
        return self.q_a - self.observed_mos

    @classmethod
    def from_summary(cls, summary: StallSummary, q_a: float, observed_mos: float,
                     model_id: str = "") -> "FitObservation":
        return cls(summary.features, q_a, observed_mos, model_id)


@dataclass(frozen=True)
class FitReport:
    weights: SegmentWeights
    residual_rms: float  # MOS units
    log_residual_rms: float
    rank: int
    condition_estimate: float
    n_observations: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < N_UNKNOWNS

    def to_dict(self) -> dict:
        w = self.weights
        return {
            "ln_c": w.ln_c, "d_a": w.d_a, "d_b": w.d_b, "d_c": w.d_c,
            "calibrated": w.calibrated,
            "residual_rms": self.residual_rms,
            "log_residual_rms": self.log_residual_rms,
            "rank": self.rank,
            "condition_estimate": self.condition_estimate,
            "n_observations": self.n_observations,
        }


def build_system(observations: Sequence[FitObservation]) -> tuple[np.ndarray, np.ndarray]:
    if len(observations) < N_UNKNOWNS:
        raise UnderdeterminedError(
            f"need at least {N_UNKNOWNS} observations, got {len(observations)}"
        )
    design = np.empty((len(observations), N_UNKNOWNS))
    rhs = np.empty(len(observations))
    for j, obs in enumerate(observations):
        mos = float(obs.observed_mos)
        if not (math.isfinite(mos) and mos > 0):
            label = f" ({obs.model_id})" if obs.model_id else ""
            raise DatasetError(f"observed MOS must be positive, got {mos}{label}", row=j + 1)
        design[j] = (1.0, *obs.features)
        rhs[j] = math.log(mos)
    return design, rhs


def solve_weights(design, rhs) -> FitReport:
    design = np.asarray(design, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if design.ndim != 2 or design.shape[1] != N_UNKNOWNS:
        raise DatasetError(f"design matrix must have {N_UNKNOWNS} columns, got shape {design.shape}")
    if design.shape[0] < N_UNKNOWNS:
        raise UnderdeterminedError(f"need at least {N_UNKNOWNS} rows, got {design.shape[0]}")
    if rhs.shape != (design.shape[0],):
        raise DatasetError(f"rhs length {rhs.shape} does not match {design.shape[0]} rows")
    if not (np.isfinite(design).all() and np.isfinite(rhs).all()):
        raise DatasetError("design and rhs must be finite")

    solution, _, rank, sv = np.linalg.lstsq(design, rhs, rcond=None)
    rank = int(rank)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if rank < N_UNKNOWNS:
        warnings.warn(
            f"design matrix has rank {rank} < {N_UNKNOWNS}; returning the minimum-norm solution",
            RankDeficientWarning, stacklevel=2,
        )
    fitted = design @ solution
    log_rms = float(np.sqrt(np.mean((fitted - rhs) ** 2)))
    mos_rms = float(np.sqrt(np.mean((np.exp(fitted) - np.exp(rhs)) ** 2)))
    weights = SegmentWeights(*(float(v) for v in solution), calibrated=True)
    return FitReport(weights, mos_rms, log_rms, rank, cond, design.shape[0])


def fit(observations: Sequence[FitObservation]) -> FitReport:
    return solve_weights(*build_system(observations))


def aggregate_observations(observations: Iterable[FitObservation]) -> list[FitObservation]:
    """Average observations sharing (model_id, q_a) into one row.

    Mirrors averaging the MOS of every content category rated under the same
    impairment model and codec. Features are averaged too.
    """
    groups: dict[tuple[str, float], list[FitObservation]] = defaultdict(list)
    for obs in observations:
        groups[(obs.model_id, obs.q_a)].append(obs)
    out = []
    for (model_id, q_a), members in groups.items():
        n = len(members)
        feats = tuple(sum(m.features[i] for m in members) / n for i in range(3))
        out.append(FitObservation(feats, q_a, sum(m.observed_mos for m in members) / n, model_id))
    return out


@dataclass(frozen=True)
class DatasetRow:
    model_id: str
    stalls: tuple[int, int, int]
    mean_len: tuple[float, float, float]
    seg_len: tuple[float, float, float]
    q_a: float
    mos: float | None

    def to_observation(self, row: int | None = None) -> FitObservation:
        if self.mos is None:
            raise DatasetError(f"{self.model_id}: no MOS value", row=row)
        feats = []
        for s, l, t in zip(self.stalls, self.mean_len, self.seg_len):
            if s == 0:
                feats.append(0.0)
            elif t <= 0:
                raise DatasetError(f"{self.model_id}: segment length must be positive", row=row)
            else:
                feats.append(s * l / t)
        return FitObservation(tuple(feats), self.q_a, self.mos, self.model_id)

    @classmethod
    def from_summary(cls, model_id: str, summary: StallSummary, q_a: float,
                     mos: float | None) -> "DatasetRow":
        return cls(model_id, summary.stalls, summary.mean_len, summary.seg_len, q_a, mos)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(rows: Iterable[DatasetRow], path: str | os.PathLike | None = None,
                  delimiter: str = ",") -> str:
    """Serialize rows in the fit-dataset format; returns the text and writes it when ``path`` is given."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(DATASET_COLUMNS)
    for r in rows:
        cells = [r.model_id]
        for s, l, t in zip(r.stalls, r.mean_len, r.seg_len):
            cells += [str(int(s)), _fmt(l), _fmt(t)]
        cells += [_fmt(r.q_a), "" if r.mos is None else _fmt(r.mos)]
        writer.writerow(cells)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_dataset(text: str) -> list[DatasetRow]:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DatasetError("dataset is empty; a header row is required")
    delimiter = "\t" if "\t" in lines[0] else ","
    reader = csv.reader(lines, delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    missing = [c for c in DATASET_COLUMNS if c not in header]
    if missing:
        raise DatasetError(f"dataset header missing columns: {', '.join(missing)}")
    idx = {c: header.index(c) for c in DATASET_COLUMNS}
    rows = []
    for n, cells in enumerate(reader, start=1):
        if not any(c.strip() for c in cells):
            continue
        try:
            get = lambda c: cells[idx[c]].strip()  # noqa: E731
            stalls = tuple(int(get(f"s_{s}")) for s in "abc")
            mean_len = tuple(float(get(f"l_{s}")) for s in "abc")
            seg_len = tuple(float(get(f"t_{s}")) for s in "abc")
            mos_cell = get("mos")
            rows.append(DatasetRow(get("model_id"), stalls, mean_len, seg_len,
                                   float(get("q_a")), float(mos_cell) if mos_cell else None))
        except (IndexError, ValueError) as exc:
            raise DatasetError(f"malformed row ({exc})", row=n) from None
        if any(s < 0 for s in stalls) or any(not math.isfinite(x) or x < 0 for x in mean_len + seg_len):
            raise DatasetError("stall counts, lengths and segment lengths must be non-negative", row=n)
    return rows


def read_dataset(path: str | os.PathLike) -> list[DatasetRow]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from None
    return parse_dataset(text)


def observations_from_rows(rows: Sequence[DatasetRow]) -> list[FitObservation]:
    return [r.to_observation(row=n) for n, r in enumerate(rows, start=1)]
