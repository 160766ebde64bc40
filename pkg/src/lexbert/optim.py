"""Adam with bias correction, and the warmup learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ContractError, NumericError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """Moment estimates for a set of named parameters.

    ``step`` counts ``adam_step`` calls. Bias correction uses a per-parameter
    update count so that parameters touched by only one of several objectives
    are corrected by the number of updates they actually received.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-6
    base_lr: float = 2e-5
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    updates: dict[str, int] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    lr_t: float,
) -> tuple[Mapping[str, Tensor], AdamState]:
    """Apply one bias-corrected Adam update to every parameter in ``params``.

    Parameters absent from ``params`` keep both their values and moments.
    """
    if lr_t < 0:
        raise ContractError(f"learning rate must be >= 0, got {lr_t}")
    for name in params:
        if name not in grads:
            raise ContractError(f"no gradient supplied for parameter {name!r}")
        g = grads[name]
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
        if np.isnan(g).any():
            raise NumericError(f"NaN gradient for parameter {name!r}")

    state.step += 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        t = state.updates.get(name, 0) + 1
        m = b1 * m + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        state.m[name], state.v[name], state.updates[name] = m, v, t
        if lr_t == 0.0:
            continue
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data = p.data - lr_t * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def lr_at(step: int, config) -> float:
    """Linear warmup from 0 to ``config.base_lr`` over ``config.warmup_steps``, then constant."""
    if step < 0:
        raise ContractError(f"step must be >= 0, got {step}")
    warmup = config.warmup_steps
    if step >= warmup:
        return float(config.base_lr)
    return float(config.base_lr) * step / warmup
