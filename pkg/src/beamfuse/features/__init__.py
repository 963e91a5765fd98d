"""Mel front-end: framing, spectra, filterbank, perturbations, stacking."""

from .dsp import (
    amplitude_spectrogram,
    amplitude_spectrum,
    frame_signal,
    hz_to_mel,
    mel_filter_matrix,
    mel_filterbank,
    mel_to_hz,
)
from .fileio import append_ivector, read_features, read_wav, write_features, write_wav
from .perturb import hec_clip, sem_mask, spec_augment
from .pipeline import compress, extract_pipeline, stack_and_skip, utterance_normalize
from .types import (
    LOG_FLOOR,
    NORM_SIGMA_FLOOR,
    FeatureConfig,
    FeatureMatrix,
    PerturbConfig,
    SpecAugmentConfig,
)

__all__ = [
    "LOG_FLOOR",
    "NORM_SIGMA_FLOOR",
    "FeatureConfig",
    "FeatureMatrix",
    "PerturbConfig",
    "SpecAugmentConfig",
    "amplitude_spectrogram",
    "amplitude_spectrum",
    "append_ivector",
    "compress",
    "extract_pipeline",
    "frame_signal",
    "hec_clip",
    "hz_to_mel",
    "mel_filter_matrix",
    "mel_filterbank",
    "mel_to_hz",
    "read_features",
    "read_wav",
    "sem_mask",
    "spec_augment",
    "stack_and_skip",
    "utterance_normalize",
    "write_features",
    "write_wav",
]
