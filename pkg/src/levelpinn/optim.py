"""First-order optimizers on flat parameter vectors.

ADAM (with bias correction) drives the network parameters; plain gradient
ascent/descent without momentum drives auxiliary per-point fields such as
penalty and multiplier fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step", "gd_step", "ADAM_DEFAULTS"]

ADAM_DEFAULTS = {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8}


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one parameter vector."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = ADAM_DEFAULTS["beta1"]
    beta2: float = ADAM_DEFAULTS["beta2"]
    eps: float = ADAM_DEFAULTS["eps"]

    @classmethod
    def fresh(cls, n_params: int, lr: float, **kw) -> "AdamState":
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        return cls(lr=lr, m=np.zeros(n_params), v=np.zeros(n_params), **kw)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One ADAM update; mutates state, returns the updated parameter vector.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected
    moment estimates.
    """
    grad = np.asarray(grad)
    if grad.shape != params.shape or grad.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    state.step_count += 1
    t = state.step_count
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def gd_step(
    params: np.ndarray, grad: np.ndarray, lr: float, direction: str = "descend"
) -> np.ndarray:
    """Plain gradient step without momentum: params -/+ lr * grad."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if direction == "descend":
        return params - lr * grad
    if direction == "ascend":
        return params + lr * grad
    raise ValueError(f"direction must be 'ascend' or 'descend', got {direction!r}")
