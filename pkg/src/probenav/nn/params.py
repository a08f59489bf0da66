"""Named parameter collections shared by networks and the optimizer."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor


class ParamSet:
    """An ordered map name -> parameter tensor, with parallel gradients.

    Parameter names are unique; gradients live on the tensors themselves
    (``Tensor.grad``) and always match the parameter shape.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self._params.items():
            if p.grad is None:
                raise ValueError(f"gradient of {name!r} not populated")
            if p.grad.shape != p.data.shape:
                raise ShapeError(f"gradient shape mismatch for {name!r}")
            out[name] = p.grad
        return out

    def copy_values(self) -> dict[str, np.ndarray]:
        """Immutable snapshot of the parameter values."""
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            missing = set(self._params) - set(values)
            extra = set(values) - set(self._params)
            raise ValueError(f"parameter name mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
        for name, arr in values.items():
            p = self._params[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"value shape {arr.shape} != parameter shape {p.data.shape} for {name!r}")
            p.data = np.ascontiguousarray(arr)

    def merge(self, other: "ParamSet", prefix: str = "") -> None:
        for name, p in other.items():
            self.add(prefix + name, p)
