"""Adam with bias correction over a ParamSet."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError, ShapeError
from .params import ParamSet


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params: ParamSet, state: AdamState) -> None:
    """One in-place Adam update; requires every gradient populated."""
    grads = params.grads()
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None or m.shape != p.data.shape:
            raise ShapeError(f"optimizer state missing or mismatched for {name!r}")
        v = state.v[name]
        np.multiply(m, b1, out=m)
        m += (1.0 - b1) * g
        np.multiply(v, b2, out=v)
        v += (1.0 - b2) * np.square(g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        update = m / denom
        update *= state.lr / bc1
        if not np.isfinite(update).all():
            raise NonFiniteError(f"non-finite Adam update for {name!r}")
        p.data -= update
