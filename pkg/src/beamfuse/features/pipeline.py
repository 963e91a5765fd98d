"""Composition of the front-end: waveform in, decoder-ready features out.

Stage order is fixed: framing, amplitude spectra, Mel filterbank, SEM
masking, high-energy clipping, compression, per-utterance normalization,
SpecAugment, frame stacking/skipping.
"""

from __future__ import annotations

import numpy as np

from .dsp import amplitude_spectrogram, frame_signal, mel_filter_matrix
from .perturb import hec_clip, sem_mask, spec_augment
from .types import LOG_FLOOR, NORM_SIGMA_FLOOR, FeatureConfig, FeatureMatrix, PerturbConfig


def compress(mel: FeatureMatrix, mode: str) -> FeatureMatrix:
    """Amplitude compression: natural log with a floor, or 7th root."""
    if mel.kind != "amplitude_mel":
        raise ValueError("compress expects amplitude Mel features")
    if mode == "log":
        out = np.log(np.maximum(mel.data, LOG_FLOOR))
    elif mode == "root7":
        out = np.power(mel.data, 1.0 / 7.0)
    else:
        raise ValueError(f"unknown compression mode {mode!r}")
    return FeatureMatrix(out, mel.frame_step_ms, "compressed")


def utterance_normalize(features: FeatureMatrix) -> FeatureMatrix:
    """Per-channel zero-mean, unit-variance normalization over the utterance."""
    if features.kind != "compressed":
        raise ValueError("utterance_normalize expects compressed features")
    mu = features.data.mean(axis=0)
    sigma = np.maximum(features.data.std(axis=0), NORM_SIGMA_FLOOR)
    return FeatureMatrix((features.data - mu) / sigma, features.frame_step_ms, "compressed")


def stack_and_skip(features: FeatureMatrix, stack: int, skip: int) -> FeatureMatrix:
    """Concatenate `stack` consecutive frames, advancing by `skip`.

    Output frame j is the concatenation of input frames j*skip ..
    j*skip+stack-1; the tail is padded by repeating the last input frame.
    The output frame step is skip times the input step.
    """
    if stack < 1 or skip < 1:
        raise ValueError("stack and skip must be >= 1")
    data = features.data
    n = data.shape[0]
    n_out = -(-n // skip)  # ceil(n / skip)
    idx = np.minimum(np.arange(n_out)[:, None] * skip + np.arange(stack)[None, :], n - 1)
    out = data[idx].reshape(n_out, stack * data.shape[1])
    return FeatureMatrix(out, features.frame_step_ms * skip, "stacked")


def extract_pipeline(
    samples: np.ndarray,
    cfg: FeatureConfig,
    perturb: PerturbConfig | None = None,
    rng: np.random.Generator | None = None,
    window: str = "hann",
) -> FeatureMatrix:
    """Run the full front-end on one utterance waveform.

    samples must already be at cfg.sample_rate_hz.  With perturb=None or all
    perturbation probabilities and mask counts at zero, the result is a pure
    function of (samples, cfg).
    """
    frames = frame_signal(samples, cfg)
    spectra = amplitude_spectrogram(frames, window=window)
    weights = mel_filter_matrix(cfg, spectra.shape[1])
    mel = FeatureMatrix(spectra @ weights.T, cfg.step_ms, "amplitude_mel")
    if perturb is not None:
        if rng is None:
            rng = np.random.default_rng(perturb.seed)
        mel = sem_mask(mel, perturb, rng)
        mel = hec_clip(mel, perturb, rng)
    feats = compress(mel, cfg.compression)
    if cfg.normalize:
        feats = utterance_normalize(feats)
    if perturb is not None:
        feats = spec_augment(feats, perturb, rng)
    return stack_and_skip(feats, cfg.stack, cfg.skip)
