"""Randomized perturbations of the Mel front-end.

Each operation short-circuits before consuming any randomness when its
probability (or mask count) is zero, so a fully disabled configuration is
seed-independent.  Draw order is fixed: one uniform for the fire decision,
then the operation's own parameters.
"""

from __future__ import annotations

import numpy as np

from .types import FeatureMatrix, PerturbConfig


def _copy(mel: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(mel.data.copy(), mel.frame_step_ms, mel.kind)


def sem_mask(mel: FeatureMatrix, cfg: PerturbConfig, rng: np.random.Generator) -> FeatureMatrix:
    """Mask low-energy Mel bins, replacing them with channel means.

    With probability sem_prob: the utterance peak is the configured
    percentile of all bins, a threshold (dB below peak) is drawn uniformly
    from sem_threshold_db_range, and every bin quieter than the threshold is
    reset to its channel's utterance-level mean of the unmasked input.
    """
    if mel.kind != "amplitude_mel":
        raise ValueError("sem_mask expects amplitude Mel features")
    if cfg.sem_prob <= 0.0:
        return _copy(mel)
    if rng.random() >= cfg.sem_prob:
        return _copy(mel)
    data = mel.data
    peak = np.percentile(data, cfg.sem_peak_percentile)
    if peak <= 0.0:
        # No positive reference energy; nothing meaningful to mask.
        return _copy(mel)
    theta = rng.uniform(*cfg.sem_threshold_db_range)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(data / peak)
    channel_means = data.mean(axis=0)
    out = np.where(db < theta, channel_means[None, :], data)
    return FeatureMatrix(out, mel.frame_step_ms, mel.kind)


def hec_clip(mel: FeatureMatrix, cfg: PerturbConfig, rng: np.random.Generator) -> FeatureMatrix:
    """Clip each channel at a random percentile, preserving total energy.

    With probability hec_prob: channel c is clipped at its p_c-th percentile
    (p_c drawn uniformly from hec_percentile_range), then the whole matrix is
    rescaled by one global factor so the utterance energy sum is unchanged.
    """
    if mel.kind != "amplitude_mel":
        raise ValueError("hec_clip expects amplitude Mel features")
    if cfg.hec_prob <= 0.0:
        return _copy(mel)
    if rng.random() >= cfg.hec_prob:
        return _copy(mel)
    data = mel.data
    lo, hi = cfg.hec_percentile_range
    pcts = rng.uniform(lo, hi, size=data.shape[1])
    eta = np.array([np.percentile(data[:, c], pcts[c]) for c in range(data.shape[1])])
    clipped = np.minimum(data, eta[None, :])
    total = data.sum()
    clipped_total = clipped.sum()
    if clipped_total <= 0.0:
        return _copy(mel)
    return FeatureMatrix(clipped * (total / clipped_total), mel.frame_step_ms, mel.kind)


def spec_augment(features: FeatureMatrix, cfg: PerturbConfig, rng: np.random.Generator) -> FeatureMatrix:
    """Apply time and channel masks, filling with the utterance mean.

    Mask widths are drawn uniformly from [0, max_width]; placements are
    uniform over positions where the mask fits.  The fill value is the mean
    of the input matrix, computed before any mask is applied.
    """
    if features.kind != "compressed":
        raise ValueError("spec_augment expects compressed features")
    sa = cfg.specaugment
    out = features.data.copy()
    if sa.n_time_masks == 0 and sa.n_freq_masks == 0:
        return FeatureMatrix(out, features.frame_step_ms, features.kind)
    fill = features.data.mean()
    n_frames, n_channels = out.shape
    for _ in range(sa.n_time_masks):
        width = min(int(rng.integers(0, sa.max_time_width_frames + 1)), n_frames)
        start = int(rng.integers(0, n_frames - width + 1))
        out[start:start + width, :] = fill
    for _ in range(sa.n_freq_masks):
        width = min(int(rng.integers(0, sa.max_freq_width_channels + 1)), n_channels)
        start = int(rng.integers(0, n_channels - width + 1))
        out[:, start:start + width] = fill
    return FeatureMatrix(out, features.frame_step_ms, features.kind)
