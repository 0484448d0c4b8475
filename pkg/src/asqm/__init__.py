"""Parametric QoE model for audio streaming with stall and preference terms."""
from .model import (
    AAC_LC,
    BUILTIN_CODECS,
    DEFAULT_WEIGHTS,
    HE_AAC_V2,
    CodecProfile,
    InitialDelayModel,
    MosScale,
    PreferenceModel,
    ScoreReport,
    SegmentWeights,
    StallSummary,
    asqm1,
    codec_impairment,
    codec_quality,
    evaluate,
    initial_delay_impairment,
    mos_from_r,
    preference_factor,
    score,
    stall_impairment,
)

__version__ = "0.1.0"
