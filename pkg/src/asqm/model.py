"""Parametric audio-streaming quality model.

Pure functions that turn codec settings, buffering events and a user's
content preference into a 5-point MOS estimate:

    AsQM1 = Q_A - I_D - I_S
    AsQM  = AsQM1 * PF

All inputs are immutable dataclasses; nothing here touches I/O.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    BitrateRangeError,
    ConfigError,
    InvalidInputError,
    ModelDomainError,
)

SEGMENTS = ("A", "B", "C")

# Final AsQM is reported on the 5-point ACR range.
ACR_MIN = 1.0
ACR_MAX = 5.0

PF_MODES = ("consistent", "literal")


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def normalize_category(category: str) -> str:
    """Canonical (case-folded, stripped) form of a content category name."""
    if not isinstance(category, str) or not category.strip():
        raise ConfigError(f"invalid content category {category!r}")
    return category.strip().casefold()


@dataclass(frozen=True)
class CodecProfile:
    """Coefficients of the exponential codec-impairment curve for one codec."""

    name: str
    alpha1: float
    alpha2: float
    alpha3: float
    br_min: float
    br_max: float

    def __post_init__(self):
        for attr in ("alpha1", "alpha2", "alpha3", "br_min", "br_max"):
            if not math.isfinite(getattr(self, attr)):
                raise ConfigError(f"codec {self.name!r}: {attr} must be finite")
        if not (0 < self.br_min < self.br_max):
            raise ConfigError(
                f"codec {self.name!r}: need 0 < br_min < br_max, got {self.br_min}, {self.br_max}"
            )


AAC_LC = CodecProfile("AAC-LC", 100, -0.05, 14.6, 32, 576)
HE_AAC_V2 = CodecProfile("HE-AAC-v2", 100, -0.11, 20.06, 16, 96)

BUILTIN_CODECS: Mapping[str, CodecProfile] = MappingProxyType(
    {AAC_LC.name: AAC_LC, HE_AAC_V2.name: HE_AAC_V2}
)


@dataclass(frozen=True)
class MosScale:
    m_min: float = 1.05
    m_max: float = 4.9

    def __post_init__(self):
        if not (math.isfinite(self.m_min) and math.isfinite(self.m_max) and self.m_min < self.m_max):
            raise ConfigError(f"MOS scale needs m_min < m_max, got {self.m_min}, {self.m_max}")


@dataclass(frozen=True)
class InitialDelayModel:
    k: float = 0.824
    c: float = 1.017

    def __post_init__(self):
        if not (self.k > 0 and self.c > 0 and math.isfinite(self.k) and math.isfinite(self.c)):
            raise ConfigError(f"initial-delay model needs k > 0 and c > 0, got {self.k}, {self.c}")


@dataclass(frozen=True)
class StallSummary:
    """Per-segment stall statistics of one playback session.

    ``stalls``, ``mean_len`` and ``seg_len`` are indexed by segment A, B, C.
    """

    stalls: tuple[int, int, int]
    mean_len: tuple[float, float, float]
    seg_len: tuple[float, float, float]
    initial_delay: float = 0.0
    media_len: float = 0.0

    def __post_init__(self):
        if not (len(self.stalls) == len(self.mean_len) == len(self.seg_len) == 3):
            raise InvalidInputError("stall summary needs exactly three segments")
        object.__setattr__(self, "stalls", tuple(int(s) for s in self.stalls))
        object.__setattr__(self, "mean_len", tuple(_finite("mean_len", x) for x in self.mean_len))
        object.__setattr__(self, "seg_len", tuple(_finite("seg_len", x) for x in self.seg_len))
        _finite("initial_delay", self.initial_delay)
        _finite("media_len", self.media_len)
        for seg, s, l, t in zip(SEGMENTS, self.stalls, self.mean_len, self.seg_len):
            if s < 0 or l < 0:
                raise InvalidInputError(f"segment {seg}: negative stall count or length")
            if (l == 0) != (s == 0):
                raise InvalidInputError(
                    f"segment {seg}: mean stall length must be zero exactly when there are no stalls"
                )
            if t <= 0:
                raise InvalidInputError(f"segment {seg}: segment length must be positive, got {t}")
        if self.initial_delay < 0:
            raise InvalidInputError("initial delay must be non-negative")
        if abs(sum(self.seg_len) - self.media_len) > 1e-9:
            raise InvalidInputError(
                f"segment lengths sum to {sum(self.seg_len)}, media length is {self.media_len}"
            )

    @classmethod
    def from_segments(cls, media_len: float, stalls=(0, 0, 0), mean_len=(0.0, 0.0, 0.0),
                      initial_delay: float = 0.0) -> "StallSummary":
        """Build a summary over three equal segments of ``media_len``."""
        third = media_len / 3.0
        return cls(tuple(stalls), tuple(mean_len), (third, third, media_len - 2 * third),
                   initial_delay, media_len)

    @property
    def has_stalls(self) -> bool:
        return any(self.stalls)

    @property
    def features(self) -> tuple[float, float, float]:
        """Per-segment stall rate S_i * L_i / T_i."""
        return tuple(s * l / t for s, l, t in zip(self.stalls, self.mean_len, self.seg_len))


@dataclass(frozen=True)
class SegmentWeights:
    """Log-intercept ``ln_c`` and per-segment degradation weights."""

    ln_c: float
    d_a: float
    d_b: float
    d_c: float
    calibrated: bool = False

    def __post_init__(self):
        for attr in ("ln_c", "d_a", "d_b", "d_c"):
            if not math.isfinite(getattr(self, attr)):
                raise ConfigError(f"segment weight {attr} must be finite")

    @property
    def degradation(self) -> tuple[float, float, float]:
        return (self.d_a, self.d_b, self.d_c)

    def as_vector(self) -> tuple[float, float, float, float]:
        return (self.ln_c, self.d_a, self.d_b, self.d_c)


# No published numeric weights exist; these uncalibrated defaults keep the
# qualitative ordering (early stalls hurt most) and C close to the best Q_A.
DEFAULT_WEIGHTS = SegmentWeights(ln_c=math.log(4.56), d_a=-0.30, d_b=-0.20, d_c=-0.15)


PF_COEFFICIENTS = MappingProxyType({
    "music": (0.423, 0.197),
    "sport": (0.699, 0.428),
    "news": (0.481, 0.256),
})


@dataclass(frozen=True)
class PreferenceModel:
    """Per-category (alpha, beta) coefficients of the preference factor."""

    coefficients: Mapping[str, tuple[float, float]] = field(default_factory=lambda: PF_COEFFICIENTS)
    mode: str = "consistent"

    def __post_init__(self):
        if self.mode not in PF_MODES:
            raise ConfigError(f"unknown preference-factor mode {self.mode!r}; expected one of {PF_MODES}")
        coeffs = {}
        for name, pair in dict(self.coefficients).items():
            alpha, beta = (float(v) for v in pair)
            if not (math.isfinite(alpha) and math.isfinite(beta)):
                raise ConfigError(f"category {name!r}: alpha/beta must be finite")
            coeffs[normalize_category(name)] = (alpha, beta)
        object.__setattr__(self, "coefficients", MappingProxyType(coeffs))

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    def coefficient(self, category: str) -> tuple[float, float]:
        key = normalize_category(category)
        try:
            return self.coefficients[key]
        except KeyError:
            raise ConfigError(
                f"unknown content category {category!r}; configured: {', '.join(self.categories)}"
            ) from None

    def with_mode(self, mode: str) -> "PreferenceModel":
        return PreferenceModel(self.coefficients, mode)


def mos_from_r(x: float, scale: MosScale = MosScale()) -> float:
    """Map an R-scale score (0..100) onto the MOS range of ``scale``."""
    x = _clamp(_finite("R-scale score", x), 0.0, 100.0)
    mos = scale.m_min + (scale.m_max - scale.m_min) * x / 100.0 + x * (x - 60.0) * (100.0 - x) * 7e-6
    return _clamp(mos, scale.m_min, scale.m_max)


def codec_impairment(profile: CodecProfile, br: float) -> float:
    br = _finite("bitrate", br)
    if not (profile.br_min <= br <= profile.br_max):
        raise BitrateRangeError(profile.name, br, profile.br_min, profile.br_max)
    return profile.alpha1 * math.exp(profile.alpha2 * br) + profile.alpha3


def codec_quality(profile: CodecProfile, br: float, scale: MosScale = MosScale()) -> float:
    """Best attainable MOS for ``profile`` at ``br`` kbps (Q_A)."""
    return mos_from_r(100.0 - codec_impairment(profile, br), scale)


def _check_quality(q_a: float, scale: MosScale) -> float:
    q_a = _finite("q_a", q_a)
    if not (scale.m_min <= q_a <= scale.m_max):
        raise InvalidInputError(f"q_a={q_a} outside MOS scale [{scale.m_min}, {scale.m_max}]")
    return q_a


def initial_delay_impairment(model: InitialDelayModel, d_l: float, t_l: float, q_a: float,
                             scale: MosScale = MosScale()) -> float:
    """Impairment from an initial buffering delay of ``d_l`` s on ``t_l`` s of media.

    Zero delay gives zero impairment. Otherwise the log-ratio term is clamped
    into ``[0, q_a - m_min]``.
    """
    d_l = _finite("initial delay", d_l)
    t_l = _finite("media length", t_l)
    q_a = _check_quality(q_a, scale)
    if t_l <= 0:
        raise InvalidInputError(f"media length must be positive, got {t_l}")
    if d_l < 0:
        raise InvalidInputError(f"initial delay must be non-negative, got {d_l}")
    if d_l == 0:
        return 0.0
    raw = -model.k * math.log(model.c * d_l / t_l)
    return _clamp(raw, 0.0, q_a - scale.m_min)


def stall_impairment(summary: StallSummary, weights: SegmentWeights, q_a: float,
                     scale: MosScale = MosScale()) -> float:
    q_a = _check_quality(q_a, scale)
    if not summary.has_stalls:
        return 0.0
    exponent = 0.0
    for seg, s, l, t, d in zip(SEGMENTS, summary.stalls, summary.mean_len, summary.seg_len,
                               weights.degradation):
        if s == 0:
            continue
        if t <= 0:
            raise InvalidInputError(f"segment {seg} has stalls but non-positive length {t}")
        exponent += s * l * d / t
    # exp overflow is harmless here, the clamp absorbs it
    predicted = math.exp(min(weights.ln_c + exponent, 700.0))
    predicted = _clamp(predicted, scale.m_min, q_a)
    return q_a - predicted


def asqm1(q_a: float, i_d: float, i_s: float, scale: MosScale = MosScale()) -> float:
    q_a, i_d, i_s = _finite("q_a", q_a), _finite("i_d", i_d), _finite("i_s", i_s)
    if i_d < 0 or i_s < 0:
        raise InvalidInputError(f"impairments must be non-negative, got I_D={i_d}, I_S={i_s}")
    return _clamp(q_a - i_d - i_s, scale.m_min, scale.m_max)


def preference_factor(model: PreferenceModel, category: str, mos: float,
                      has_preference: bool) -> float:
    """Multiplicative preference adjustment for ``category`` at quality ``mos``.

    In ``consistent`` mode the non-preferring factor is ``2 - PF_p``; ``literal``
    mode evaluates ``2 - alpha*ln(mos) + beta``.
    """
    alpha, beta = model.coefficient(category)
    mos = _finite("mos", mos)
    if mos <= 0:
        raise InvalidInputError(f"mos must be positive for the preference factor, got {mos}")
    log_term = alpha * math.log(mos)
    pf_p = log_term + beta
    if has_preference:
        pf = pf_p
    elif model.mode == "consistent":
        pf = 2.0 - pf_p
    else:
        pf = 2.0 - log_term + beta
    if not pf > 0:
        raise ModelDomainError(
            f"non-positive preference factor {pf} for category {category!r} at mos={mos}"
        )
    return pf


@dataclass(frozen=True)
class ScoreReport:
    q_a: float
    i_d: float
    i_s: float
    asqm1: float
    pf_branch: str  # "preferred", "not_preferred" or "unknown"
    pf: float
    asqm: float


def evaluate(profile: CodecProfile, br: float, summary: StallSummary, weights: SegmentWeights,
             pref_model: PreferenceModel | None = None, user_prefs: Iterable[str] | None = None,
             content_ct: str | None = None, *, delay_model: InitialDelayModel = InitialDelayModel(),
             scale: MosScale = MosScale()) -> ScoreReport:
    """Run the full model and keep every intermediate.

    ``user_prefs=None`` means the user's preferences are unknown: PF is then 1
    and the result equals AsQM1.
    """
    q_a = codec_quality(profile, br, scale)
    i_d = initial_delay_impairment(delay_model, summary.initial_delay, summary.media_len, q_a, scale)
    i_s = stall_impairment(summary, weights, q_a, scale)
    base = asqm1(q_a, i_d, i_s, scale)
    if user_prefs is None:
        branch, pf = "unknown", 1.0
    else:
        if pref_model is None:
            pref_model = PreferenceModel()
        if content_ct is None:
            raise ConfigError("content category is required when user preferences are given")
        preferred = normalize_category(content_ct) in {normalize_category(c) for c in user_prefs}
        branch = "preferred" if preferred else "not_preferred"
        pf = preference_factor(pref_model, content_ct, base, preferred)
    return ScoreReport(q_a, i_d, i_s, base, branch, pf, _clamp(base * pf, ACR_MIN, ACR_MAX))


def score(profile: CodecProfile, br: float, summary: StallSummary, weights: SegmentWeights,
          pref_model: PreferenceModel | None = None, user_prefs: Iterable[str] | None = None,
          content_ct: str | None = None, **kwargs) -> float:
    return evaluate(profile, br, summary, weights, pref_model, user_prefs, content_ct, **kwargs).asqm
