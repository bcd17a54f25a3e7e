"""Adam (classifier training) and plain gradient descent (denoiser fit).

Both steps are pure functions of (params, grads, state) and mutate the
parameter values and state buffers in place. Parameters whose grad buffer
is unset are treated as having zero gradient; decoupled weight decay is
applied to them regardless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class OptimizerState:
    kind: str  # "adam" or "gd"
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_state(learning_rate: float = 1e-3, weight_decay: float = 0.0) -> OptimizerState:
    return OptimizerState(kind="adam", learning_rate=learning_rate, weight_decay=weight_decay)


def gd_state(learning_rate: float) -> OptimizerState:
    return OptimizerState(kind="gd", learning_rate=learning_rate)


def _grad_of(name: str, p: Tensor) -> np.ndarray:
    if p.grad is None:
        return np.zeros_like(p.data)
    if p.grad.shape != p.data.shape:
        raise ShapeError(f"{name}: grad {p.grad.shape} vs param {p.data.shape}")
    return p.grad


def adam_step(params: Mapping[str, Tensor], state: OptimizerState) -> None:
    """One Adam update with bias correction.

    Decoupled weight decay multiplies each parameter by (1 - lr*wd)
    before the moment update; the moments see the raw gradient only.
    """
    if state.kind != "adam":
        raise ValueError(f"adam_step on state of kind {state.kind!r}")
    state.step_count += 1
    t = state.step_count
    lr, b1, b2, eps = state.learning_rate, state.beta1, state.beta2, state.epsilon
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, p in params.items():
        g = _grad_of(name, p)
        if state.weight_decay != 0.0:
            p.data *= 1.0 - lr * state.weight_decay
        m = state.first_moment.setdefault(name, np.zeros_like(p.data))
        v = state.second_moment.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.data.shape:
            raise ShapeError(f"{name}: moment {m.shape} vs param {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        denom = np.sqrt(v / bias2)
        denom += eps
        p.data -= (lr / bias1) * m / denom


def gd_step(params: Mapping[str, Tensor], state: OptimizerState) -> None:
    """Plain full-batch descent: param <- param - lr * grad."""
    if state.kind != "gd":
        raise ValueError(f"gd_step on state of kind {state.kind!r}")
    state.step_count += 1
    for name, p in params.items():
        p.data -= state.learning_rate * _grad_of(name, p)
