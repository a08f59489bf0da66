"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward
from .params import ParamSet


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def __str__(self):
        lines = [f"grad check: max rel err {self.max_rel_err:.3e} (tol {self.tolerance:.1e})"]
        for name, err in sorted(self.per_param.items()):
            flag = "ok" if err < self.tolerance else "FAIL"
            lines.append(f"  {name}: {err:.3e} [{flag}]")
        return "\n".join(lines)


def grad_check(loss_fn: Callable[[], Tensor], params: ParamSet,
               tolerance: float = 1e-4, h: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must be deterministic (freeze any sampling before calling)
    and must re-run the forward pass on each invocation so that perturbed
    parameter values take effect.
    """
    params.zero_grads()
    backward(loss_fn())
    analytic = {name: p.grad.copy() for name, p in params.items()}

    per_param: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            num[i] = (up - down) / (2.0 * h)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        per_param[name] = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0

    worst = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(max_rel_err=worst, per_param=per_param, tolerance=tolerance)
