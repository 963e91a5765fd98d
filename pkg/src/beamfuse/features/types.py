"""Configuration and container types for the Mel front-end."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

COMPRESSION_MODES = ("log", "root7")
FEATURE_KINDS = ("amplitude_mel", "compressed", "stacked")

LOG_FLOOR = 1e-10
NORM_SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end settings for one extraction pipeline.

    The defaults correspond to the conventional 80-channel log-Mel setup
    (25 ms window every 10 ms).  The high temporal resolution variant uses
    step_ms=2.5, window_ms=10, n_mels=20, compression="root7", stack=2,
    skip=2.
    """

    sample_rate_hz: int = 16000
    step_ms: float = 10.0
    window_ms: float = 25.0
    n_mels: int = 80
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0
    compression: str = "log"
    stack: int = 1
    skip: int = 1
    normalize: bool = True

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.step_ms <= 0 or self.window_ms <= 0:
            raise ConfigError("step_ms and window_ms must be positive")
        if self.window_ms < self.step_ms:
            raise ConfigError("window_ms must be >= step_ms")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if not self.fmin_hz < self.fmax_hz:
            raise ConfigError("fmin_hz must be < fmax_hz")
        if self.fmax_hz > self.sample_rate_hz / 2 + 1e-9:
            raise ConfigError("fmax_hz must not exceed the Nyquist frequency")
        if self.compression not in COMPRESSION_MODES:
            raise ConfigError(f"unknown compression mode {self.compression!r}")
        if self.stack < 1 or self.skip < 1:
            raise ConfigError("stack and skip must be >= 1")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate_hz / 1000.0))

    @property
    def step_samples(self) -> float:
        return self.step_ms * self.sample_rate_hz / 1000.0


@dataclass(frozen=True)
class SpecAugmentConfig:
    """Time/channel masking applied after compression and normalization."""

    n_time_masks: int = 0
    max_time_width_frames: int = 0
    n_freq_masks: int = 0
    max_freq_width_channels: int = 0

    def __post_init__(self):
        if min(self.n_time_masks, self.max_time_width_frames,
               self.n_freq_masks, self.max_freq_width_channels) < 0:
            raise ConfigError("mask counts and widths must be >= 0")


@dataclass(frozen=True)
class PerturbConfig:
    """Randomized front-end perturbations.

    sem_* controls masking of low-energy Mel bins relative to the utterance
    peak; hec_* controls per-channel percentile clipping of high energies
    followed by an utterance-level energy-preserving rescale.
    """

    sem_prob: float = 0.1
    sem_peak_percentile: float = 95.0
    sem_threshold_db_range: tuple[float, float] = (-30.0, -20.0)
    hec_prob: float = 0.4
    hec_percentile_range: tuple[float, float] = (80.0, 100.0)
    specaugment: SpecAugmentConfig = field(default_factory=SpecAugmentConfig)
    seed: int = 0

    def __post_init__(self):
        for name, p in (("sem_prob", self.sem_prob), ("hec_prob", self.hec_prob)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.sem_peak_percentile <= 100.0:
            raise ConfigError("sem_peak_percentile must lie in [0, 100]")
        lo, hi = self.hec_percentile_range
        if not (0.0 <= lo <= hi <= 100.0):
            raise ConfigError("hec_percentile_range must be ordered within [0, 100]")
        dlo, dhi = self.sem_threshold_db_range
        if dlo > dhi:
            raise ConfigError("sem_threshold_db_range must be ordered")


@dataclass
class FeatureMatrix:
    """A frames-by-channels grid of real values with frame-rate metadata.

    kind tracks the pipeline stage: raw Mel amplitudes ("amplitude_mel"),
    compressed/normalized values ("compressed"), or stacked output frames
    ("stacked").  Instances are treated as immutable once constructed.
    """

    data: np.ndarray
    frame_step_ms: float
    kind: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("feature data must be 2-dimensional (frames x channels)")
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature data must be finite")
        if self.kind == "amplitude_mel" and np.any(self.data < 0):
            raise ValueError("amplitude Mel energies must be non-negative")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]
