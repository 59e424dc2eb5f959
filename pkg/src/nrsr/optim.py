"""Adam optimizer over named parameter lists.

Hyperparameters follow the usual defaults: beta1=0.9, beta2=0.999,
eps=1e-8, with bias correction on both moment estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class NonFiniteGradientError(RuntimeError):
    """Raised when a parameter gradient contains NaN or inf; the step is rejected."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter '{name}'")
        self.name = name


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name, plus step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: list[tuple[str, Tensor]]) -> "AdamState":
        st = cls()
        for name, p in params:
            st.m[name] = np.zeros_like(p.data)
            st.v[name] = np.zeros_like(p.data)
        return st


def adam_step(params: list[tuple[str, Tensor]], state: AdamState, lr: float) -> None:
    """One Adam update over every (name, tensor) pair, in place.

    Gradients are validated first: any non-finite gradient rejects the
    whole step (no parameter or moment buffer is touched) and surfaces
    the offending parameter name.
    """
    for name, p in params:
        if p.grad is None:
            raise ValueError(f"parameter '{name}' has no gradient; run backward() before adam_step")
        if state.m[name].shape != p.data.shape:
            raise ValueError(f"optimizer state shape mismatch for '{name}'")
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(name)
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for name, p in params:
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + EPS)).astype(p.data.dtype, copy=False)
