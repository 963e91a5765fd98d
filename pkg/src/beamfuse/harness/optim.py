"""AdamW with decoupled weight decay, in functional style.

The decay term multiplies the parameters directly instead of being folded
into the gradient, so with zero gradients every step is exactly the
multiplicative shrinkage theta * (1 - lr * weight_decay) regardless of
the moment accumulators.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AdamWState:
    """Step counter, moment accumulators, and hyperparameters."""

    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.v))):
            raise ValueError("moment accumulators must be finite")

    @classmethod
    def initial(cls, params: np.ndarray, lr: float = 1e-3, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8,
                weight_decay: float = 0.0) -> "AdamWState":
        shape = np.shape(params)
        return cls(step=0, m=np.zeros(shape), v=np.zeros(shape), lr=lr,
                   beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


def adamw_step(params: np.ndarray, grads: np.ndarray,
               state: AdamWState) -> tuple[np.ndarray, AdamWState]:
    """One update; returns fresh parameters and the advanced state.

    m and v track exponential moving averages of the gradient and its
    square, bias-corrected by the step count; the parameter update is
    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads "
                         f"{grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradients")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    update = m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * params
    return params - state.lr * update, replace(state, step=step, m=m, v=v)
