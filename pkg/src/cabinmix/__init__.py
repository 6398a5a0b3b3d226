"""Calibrated synthesis of multichannel in-car microphone signals.

User-supplied dry speech is convolved with measured (or synthetic) cabin
impulse responses, combined with condition-tagged noise recordings by plain
superposition, and everything is scaled against A-weighted sound levels.
"""

from .array import ArrayGeometry, SteeringMatrix, pairwise_delays, steering_vectors
from .audio import AudioBuffer, read_wav, write_wav
from .dataset import (
    DatasetIndex,
    ImpulseResponseSet,
    NoiseClip,
    SensitivityMap,
    ValidationReport,
    estimate_sensitivity,
    load_dataset,
    validate,
)
from .dsp import (
    AWeightingFilter,
    a_weight,
    a_weighting_db,
    convolve,
    downmix,
    equivalent_level,
    resample,
)
from .errors import CabinmixError, ClippingWarning, DatasetError, ParameterError
from .fixture import generate_fixture
from .metrics import Condition, ConditionMetrics, condition_table, noise_level, snr, speech_level
from .scene import (
    DEFAULT_SEED,
    SceneResult,
    SceneSpec,
    build_audio_program,
    build_noise,
    build_speech,
    build_ventilation,
    recycle,
    scenario_irs,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "AudioBuffer",
    "AWeightingFilter",
    "CabinmixError",
    "ClippingWarning",
    "Condition",
    "ConditionMetrics",
    "DatasetError",
    "DatasetIndex",
    "DEFAULT_SEED",
    "ImpulseResponseSet",
    "NoiseClip",
    "ParameterError",
    "SceneResult",
    "SceneSpec",
    "SensitivityMap",
    "SteeringMatrix",
    "ValidationReport",
    "a_weight",
    "a_weighting_db",
    "build_audio_program",
    "build_noise",
    "build_speech",
    "build_ventilation",
    "condition_table",
    "convolve",
    "downmix",
    "equivalent_level",
    "estimate_sensitivity",
    "generate_fixture",
    "load_dataset",
    "noise_level",
    "pairwise_delays",
    "read_wav",
    "recycle",
    "resample",
    "scenario_irs",
    "snr",
    "speech_level",
    "steering_vectors",
    "synthesize",
    "validate",
    "write_wav",
]
