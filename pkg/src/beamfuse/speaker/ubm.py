"""Diagonal-covariance GMM background model and Baum-Welch statistics.

EM with responsibilities over a fixed component count.  The per-iteration
data log-likelihood is recorded on the returned model (one entry per
iteration plus one for the final parameters) so training curves can be
inspected and monotonicity asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

WEIGHT_FLOOR = 1e-6
VARIANCE_FLOOR_FRACTION = 1e-4
VARIANCE_FLOOR_ABS = 1e-10


@dataclass
class Ubm:
    """Mixture weights, means and per-dimension variances, K x D."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihoods: list = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class BwStats:
    """Zeroth-order soft counts and mean-centered first-order sums."""

    n: np.ndarray  # (K,)
    f: np.ndarray  # (K, D)

    def __add__(self, other: "BwStats") -> "BwStats":
        return BwStats(self.n + other.n, self.f + other.f)


def _log_gauss(frames: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Per-frame, per-component diagonal Gaussian log-densities, (N, K)."""
    const = -0.5 * np.sum(np.log(2.0 * np.pi * variances), axis=1)
    inv = 1.0 / variances
    quad = (frames ** 2) @ inv.T - 2.0 * frames @ (means * inv).T \
        + np.sum(means ** 2 * inv, axis=1)
    return const - 0.5 * quad


def _joint_log_prob(ubm: Ubm, frames: np.ndarray) -> np.ndarray:
    return np.log(ubm.weights) + _log_gauss(frames, ubm.means, ubm.variances)


def log_likelihood(ubm: Ubm, frames: np.ndarray) -> float:
    """Total data log-likelihood under the mixture."""
    if len(frames) == 0:
        return 0.0
    return float(np.sum(logsumexp(_joint_log_prob(ubm, frames), axis=1)))


def responsibilities(ubm: Ubm, frames: np.ndarray) -> np.ndarray:
    """Posterior component probabilities per frame, rows summing to 1."""
    joint = _joint_log_prob(ubm, frames)
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def _variance_floor(frames: np.ndarray) -> np.ndarray:
    return np.maximum(VARIANCE_FLOOR_FRACTION * frames.var(axis=0), VARIANCE_FLOOR_ABS)


def _init_params(frames, n_components, rng):
    """k-means++ seeding; cluster moments become the starting parameters."""
    if n_components == 1:
        labels = np.zeros(len(frames), dtype=int)
        centroids = frames.mean(axis=0, keepdims=True)
    else:
        centroids, labels = kmeans2(frames, n_components, minit="++", seed=rng)
    floor = _variance_floor(frames)
    global_var = np.maximum(frames.var(axis=0), floor)
    weights = np.zeros(n_components)
    means = np.array(centroids, dtype=np.float64)
    variances = np.tile(global_var, (n_components, 1))
    for k in range(n_components):
        members = frames[labels == k]
        weights[k] = len(members) / len(frames)
        if len(members) > 0:
            means[k] = members.mean(axis=0)
            variances[k] = np.maximum(members.var(axis=0), floor)
    weights = np.maximum(weights, WEIGHT_FLOOR)
    return weights / weights.sum(), means, variances


def train_ubm(frames: np.ndarray, n_components: int, iters: int = 10,
              seed: int = 0) -> Ubm:
    """EM training of the background mixture.

    With iters=0 the k-means++ initialization is returned as is.  Collapsed
    components are kept alive by the weight floor and the variance floor
    (a fraction of the global per-dimension variance).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError("frames must be a 2-D array")
    if n_components < 1:
        raise ValueError("need at least one component")
    if len(frames) < n_components:
        raise ValueError(f"{n_components} components but only {len(frames)} frames")

    rng = np.random.default_rng(seed)
    weights, means, variances = _init_params(frames, n_components, rng)
    floor = _variance_floor(frames)
    model = Ubm(weights, means, variances)
    history = model.log_likelihoods

    for _ in range(iters):
        joint = _joint_log_prob(model, frames)
        per_frame = logsumexp(joint, axis=1, keepdims=True)
        history.append(float(per_frame.sum()))
        resp = np.exp(joint - per_frame)

        nk = resp.sum(axis=0)
        safe_nk = np.maximum(nk, 1e-12)
        means = (resp.T @ frames) / safe_nk[:, None]
        sq = (resp.T @ (frames ** 2)) / safe_nk[:, None]
        variances = np.maximum(sq - means ** 2, floor)
        weights = np.maximum(nk / len(frames), WEIGHT_FLOOR)
        weights = weights / weights.sum()
        model = Ubm(weights, means, variances, history)

    history.append(log_likelihood(model, frames))
    return model


def accumulate_stats(ubm: Ubm, frames: np.ndarray) -> BwStats:
    """Soft counts and centered first-order sums of one utterance.

    Stats are associative: accumulating two segments separately and adding
    the results equals accumulating their concatenation.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if len(frames) == 0:
        return BwStats(np.zeros(ubm.n_components),
                       np.zeros((ubm.n_components, ubm.dim)))
    if frames.shape[1] != ubm.dim:
        raise ValueError(f"frames have dim {frames.shape[1]}, model expects {ubm.dim}")
    resp = responsibilities(ubm, frames)
    n = resp.sum(axis=0)
    f = resp.T @ frames - n[:, None] * ubm.means
    return BwStats(n, f)
