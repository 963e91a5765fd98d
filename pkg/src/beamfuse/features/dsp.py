"""Framing, spectra, and Mel filterbank.

Conventions: frame i starts at round(i * step_samples); signals shorter than
one window produce a single zero-padded frame; spectra are magnitudes of the
real FFT after zero-padding each windowed frame to the next power of two;
Mel warping is mel(f) = 2595 * log10(1 + f / 700) with unit-peak triangular
filters centered evenly on the Mel scale.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ConfigError
from .types import FeatureConfig

WINDOW_FUNCTIONS = ("hann", "rectangular")


def window_values(name: str, n: int) -> np.ndarray:
    """Analysis window of length n (periodic Hann or all-ones)."""
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if name == "rectangular":
        return np.ones(n)
    raise ConfigError(f"unknown window {name!r}")


def frame_signal(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Slice a waveform into overlapping frames.

    Returns an (n_frames, window_samples) array.  A signal shorter than one
    window yields a single frame padded with trailing zeros.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("empty signal")
    win = cfg.window_samples
    if win < 1:
        raise ValueError("window length in samples must be >= 1")
    step = cfg.step_samples
    n = samples.size
    if n >= win:
        n_frames = int(np.floor((n - win) / step)) + 1
    else:
        n_frames = 1
    frames = np.zeros((n_frames, win))
    for i in range(n_frames):
        start = int(round(i * step))
        chunk = samples[start:start + win]
        frames[i, :chunk.size] = chunk
    return frames


def next_pow2(n: int) -> int:
    return 1 << (max(n, 1) - 1).bit_length()


def amplitude_spectrum(frame: np.ndarray, window: str = "hann") -> np.ndarray:
    """Magnitude spectrum of one windowed, power-of-two zero-padded frame."""
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if frame.size < 1:
        raise ValueError("frame must contain at least one sample")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite samples")
    nfft = next_pow2(frame.size)
    padded = np.zeros(nfft)
    padded[:frame.size] = frame * window_values(window, frame.size)
    return np.abs(np.fft.rfft(padded))


def amplitude_spectrogram(frames: np.ndarray, window: str = "hann") -> np.ndarray:
    """Batched amplitude_spectrum over an (n_frames, win) array."""
    if not np.all(np.isfinite(frames)):
        raise ValueError("frames contain non-finite samples")
    n_frames, win = frames.shape
    nfft = next_pow2(win)
    return np.abs(np.fft.rfft(frames * window_values(window, win)[None, :], n=nfft, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filter_matrix(cfg: FeatureConfig, n_bins: int) -> np.ndarray:
    """(n_mels, n_bins) matrix of unit-peak triangular filters.

    Bin k of an amplitude spectrum corresponds to frequency
    k * sample_rate / nfft with nfft = 2 * (n_bins - 1).
    """
    if cfg.fmax_hz > cfg.sample_rate_hz / 2 + 1e-9:
        raise ConfigError("fmax_hz must not exceed the Nyquist frequency")
    nfft = 2 * (n_bins - 1)
    bin_hz = np.arange(n_bins) * cfg.sample_rate_hz / nfft
    mel_pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    weights = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        left, center, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rise = (bin_hz - left) / max(center - left, 1e-12)
        fall = (right - bin_hz) / max(right - center, 1e-12)
        weights[m] = np.clip(np.minimum(rise, fall), 0.0, None)
    return weights


def mel_filterbank(spectrum: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Apply the triangular Mel filterbank to one amplitude spectrum."""
    spectrum = np.asarray(spectrum, dtype=np.float64).reshape(-1)
    return mel_filter_matrix(cfg, spectrum.size) @ spectrum
