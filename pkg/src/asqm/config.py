"""Model constants and weights documents (JSON).

A constants document may override any subset of the built-in values::

    {
      "mos_scale": {"m_min": 1.05, "m_max": 4.9},
      "initial_delay": {"k": 0.824, "c": 1.017},
      "codecs": {"AAC-LC": {"alpha1": 100, "alpha2": -0.05, "alpha3": 14.6,
                            "br_min": 32, "br_max": 576}},
      "preference": {"mode": "consistent",
                     "categories": {"music": {"alpha": 0.423, "beta": 0.197}}},
      "weights": {"ln_c": 1.5, "d_a": -0.3, "d_b": -0.2, "d_c": -0.15}
    }

Missing sections fall back to the built-ins; codec and category entries are
merged by name.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .model import (
    BUILTIN_CODECS,
    DEFAULT_WEIGHTS,
    CodecProfile,
    InitialDelayModel,
    MosScale,
    PreferenceModel,
    SegmentWeights,
)

CONFIG_ENV_VAR = "ASQM_CONFIG"


@dataclass(frozen=True)
class ModelConstants:
    codecs: Mapping[str, CodecProfile] = field(default_factory=lambda: dict(BUILTIN_CODECS))
    scale: MosScale = MosScale()
    delay: InitialDelayModel = InitialDelayModel()
    preference: PreferenceModel = field(default_factory=PreferenceModel)
    weights: SegmentWeights = DEFAULT_WEIGHTS

    def codec(self, name: str) -> CodecProfile:
        for key, profile in self.codecs.items():
            if key.casefold() == name.casefold():
                return profile
        raise ConfigError(f"unknown codec {name!r}; configured: {', '.join(self.codecs)}")

    def to_dict(self) -> dict:
        return {
            "mos_scale": asdict(self.scale),
            "initial_delay": asdict(self.delay),
            "codecs": {n: {k: v for k, v in asdict(p).items() if k != "name"}
                       for n, p in self.codecs.items()},
            "preference": {
                "mode": self.preference.mode,
                "categories": {c: {"alpha": a, "beta": b}
                               for c, (a, b) in self.preference.coefficients.items()},
            },
            "weights": weights_to_dict(self.weights),
        }


def _section(doc: Mapping, key: str) -> Mapping:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"config section {key!r} must be an object")
    return value


def _build(cls, values: Mapping, where: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def constants_from_dict(doc: Mapping[str, Any]) -> ModelConstants:
    if not isinstance(doc, Mapping):
        raise ConfigError("constants document must be a JSON object")
    base = ModelConstants()
    scale = _build(MosScale, {**asdict(base.scale), **_section(doc, "mos_scale")}, "mos_scale")
    delay = _build(InitialDelayModel, {**asdict(base.delay), **_section(doc, "initial_delay")},
                   "initial_delay")

    codecs = dict(base.codecs)
    for name, entry in _section(doc, "codecs").items():
        previous = {k: v for k, v in asdict(codecs[name]).items() if k != "name"} if name in codecs else {}
        codecs[name] = _build(CodecProfile, {**previous, **entry, "name": name}, f"codec {name}")

    pref_doc = _section(doc, "preference")
    coeffs = dict(base.preference.coefficients)
    for name, entry in _section(pref_doc, "categories").items():
        try:
            coeffs[name.casefold()] = (float(entry["alpha"]), float(entry["beta"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"category {name!r} needs numeric alpha and beta") from None
    preference = PreferenceModel(coeffs, pref_doc.get("mode", base.preference.mode))

    weights = base.weights
    if "weights" in doc:
        weights = weights_from_dict(_section(doc, "weights"), default_calibrated=False)
    return ModelConstants(codecs, scale, delay, preference, weights)


def load_constants(path: str | os.PathLike | None = None) -> ModelConstants:
    """Load a constants document; ``None`` falls back to ``$ASQM_CONFIG`` then the built-ins."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return ModelConstants()
    return constants_from_dict(_read_json(path))


def weights_to_dict(weights: SegmentWeights) -> dict:
    return asdict(weights)


def weights_from_dict(doc: Mapping[str, Any], default_calibrated: bool = True) -> SegmentWeights:
    try:
        values = {k: float(doc[k]) for k in ("ln_c", "d_a", "d_b", "d_c")}
    except KeyError as exc:
        raise ConfigError(f"weights document missing {exc.args[0]!r}") from None
    except (TypeError, ValueError):
        raise ConfigError("weights must be numeric") from None
    if not all(math.isfinite(v) for v in values.values()):
        raise ConfigError("weights must be finite")
    return SegmentWeights(**values, calibrated=bool(doc.get("calibrated", default_calibrated)))


def load_weights(path: str | os.PathLike) -> SegmentWeights:
    return weights_from_dict(_read_json(path))


def _read_json(path: str | os.PathLike) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
