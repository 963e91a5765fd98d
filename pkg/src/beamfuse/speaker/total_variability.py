"""Total-variability subspace: EM estimation and i-vector extraction.

The model explains an utterance's centered Baum-Welch statistics as
F_k ~ N(N_k T_k w, N_k Sigma_k) with a standard-normal latent factor w of
rank R shared across components.  extract_ivector returns the posterior
mean of w; train_tmatrix runs EM over a collection of per-utterance stats,
tracking the marginal-evidence objective per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .ubm import BwStats, Ubm

RIDGE = 1e-8
INIT_SCALE = 0.1


@dataclass
class TMatrix:
    """Per-component loadings, shape (K, D, R)."""

    t: np.ndarray
    objectives: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.t.shape[2]

    @property
    def as_matrix(self) -> np.ndarray:
        """Stacked (K*D, R) view for subspace comparisons."""
        k, d, r = self.t.shape
        return self.t.reshape(k * d, r)


def _posterior_terms(t: np.ndarray, ubm: Ubm, stats: BwStats):
    """Precision L = I + sum_k N_k T_k' Sigma_k^-1 T_k and b = T' Sigma^-1 F."""
    t_over_var = t / ubm.variances[:, :, None]
    L = np.eye(t.shape[2]) + np.einsum("k,kdr,kds->rs", stats.n, t_over_var, t)
    b = np.einsum("kdr,kd->r", t_over_var, stats.f)
    return L, b


def extract_ivector(tmat: TMatrix, ubm: Ubm, stats: BwStats) -> np.ndarray:
    """Posterior mean of the latent factor for one utterance."""
    if not (np.all(np.isfinite(stats.n)) and np.all(np.isfinite(stats.f))):
        raise ValueError("non-finite Baum-Welch statistics")
    L, b = _posterior_terms(tmat.t, ubm, stats)
    return linalg.solve(L, b, assume_a="pos")


def _solve_normal_equations(a: np.ndarray, c_t: np.ndarray) -> np.ndarray:
    """Solve A X = C', falling back to a small ridge when A is singular."""
    try:
        return linalg.solve(a, c_t, assume_a="pos")
    except linalg.LinAlgError:
        return linalg.solve(a + RIDGE * np.eye(a.shape[0]), c_t, assume_a="pos")


def train_tmatrix(stats_list, ubm: Ubm, rank: int, iters: int = 10,
                  seed: int = 0, init: np.ndarray | None = None) -> TMatrix:
    """EM estimation of the total-variability loadings.

    The tracked objective is the per-utterance marginal evidence up to
    terms independent of T: sum_i [ -1/2 log det L_i + 1/2 b_i' L_i^-1 b_i ].
    One entry is recorded per iteration plus one for the final parameters;
    the sequence is non-decreasing.  With iters=0 the random initialization
    is returned untouched.
    """
    stats_list = list(stats_list)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if len(stats_list) < rank:
        raise ValueError(f"need at least rank={rank} utterances of statistics, "
                         f"got {len(stats_list)}")
    k, d = ubm.means.shape
    if init is not None:
        t = np.array(init, dtype=np.float64)
        if t.shape != (k, d, rank):
            raise ValueError(f"init shape {t.shape} does not match ({k}, {d}, {rank})")
    else:
        rng = np.random.default_rng(seed)
        t = INIT_SCALE * rng.standard_normal((k, d, rank))

    n_mat = np.stack([s.n for s in stats_list])          # (I, K)
    f_tensor = np.stack([s.f for s in stats_list])       # (I, K, D)
    if not (np.all(np.isfinite(n_mat)) and np.all(np.isfinite(f_tensor))):
        raise ValueError("non-finite Baum-Welch statistics")
    objectives: list = []

    def evidence(t_cur):
        total = 0.0
        for s in stats_list:
            L, b = _posterior_terms(t_cur, ubm, s)
            w = linalg.solve(L, b, assume_a="pos")
            sign, logdet = np.linalg.slogdet(L)
            total += -0.5 * logdet + 0.5 * float(b @ w)
        return total

    for _ in range(iters):
        ew = np.zeros((len(stats_list), rank))
        eww = np.zeros((len(stats_list), rank, rank))
        obj = 0.0
        for i, s in enumerate(stats_list):
            L, b = _posterior_terms(t, ubm, s)
            cov = linalg.inv(L)
            w = cov @ b
            ew[i] = w
            eww[i] = cov + np.outer(w, w)
            _, logdet = np.linalg.slogdet(L)
            obj += -0.5 * logdet + 0.5 * float(b @ w)
        objectives.append(obj)

        # Sigma_k cancels from the per-component normal equations, so the
        # M-step solves T_k = C_k A_k^-1 on raw stats; the variances enter
        # only through L and b in the E-step
        a = np.einsum("ik,irs->krs", n_mat, eww)            # (K, R, R)
        c = np.einsum("ikd,ir->kdr", f_tensor, ew)          # (K, D, R)
        t = np.stack([_solve_normal_equations(a[kk], c[kk].T).T for kk in range(k)])

    objectives.append(evidence(t))
    return TMatrix(t, objectives)
