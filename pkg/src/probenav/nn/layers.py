"""Network building blocks: dense stacks, layer norm, and a small conv path.

Layers own their parameters through a :class:`ParamSet` and are plain
callables on tensors. Weight tensors are initialized fan-in-scaled uniform
from a caller-supplied generator, so identical seeds give identical nets.
A ``frozen=True`` forward detaches the weights: values are used but no
gradient ever reaches them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .params import ParamSet


def fan_in_uniform(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base: a named parameter owner with a tensor-in/tensor-out forward."""

    def __init__(self, name: str):
        self.name = name
        self.params = ParamSet()

    def __call__(self, x: Tensor, frozen: bool = False) -> Tensor:
        return self.forward(x, frozen=frozen)

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        raise NotImplementedError

    def _weight(self, name: str, frozen: bool) -> Tensor:
        p = self.params[name]
        return p.detach() if frozen else p


class Identity(Module):
    def __init__(self, name: str = "identity"):
        super().__init__(name)

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        return x


class Dense(Module):
    """Affine layer y = x @ W + b with fan-in uniform init."""

    def __init__(self, name: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__(name)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.params.add("w", Tensor(fan_in_uniform(rng, in_dim, (in_dim, out_dim))))
        self.params.add("b", Tensor(fan_in_uniform(rng, in_dim, (out_dim,))))

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim:
            raise ShapeError(
                f"dense layer {self.name!r}: expected input (*, {self.in_dim}), got {x.shape}"
            )
        return ad.matmul(x, self._weight("w", frozen)) + self._weight("b", frozen)


class LayerNorm(Module):
    """Per-row feature normalization with learnable gain and shift."""

    def __init__(self, name: str, dim: int, eps: float = 1e-6):
        super().__init__(name)
        self.dim = dim
        self.eps = eps
        self.params.add("g", Tensor(np.ones(dim)))
        self.params.add("b", Tensor(np.zeros(dim)))

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.dim:
            raise ShapeError(f"layer norm {self.name!r}: expected (*, {self.dim}), got {x.shape}")
        mu = x.mean(axis=1, keepdims=True)
        centered = x - mu
        var = centered.square().mean(axis=1, keepdims=True)
        normed = centered / ad.sqrt(var + self.eps)
        return normed * self._weight("g", frozen) + self._weight("b", frozen)


_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


class MLP(Module):
    """Dense stack with a fixed activation between layers (none after the last).

    With ``layer_norm=True`` each hidden layer becomes dense -> norm -> act.
    """

    def __init__(self, name: str, dims: list[int], rng: np.random.Generator,
                 activation: str = "tanh", layer_norm: bool = False):
        super().__init__(name)
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self._plan: list = []  # Module instances interleaved with the "act" marker
        for i in range(len(dims) - 1):
            dense = Dense(f"{name}.h{i}", dims[i], dims[i + 1], rng)
            self._plan.append(dense)
            self.params.merge(dense.params, prefix=f"h{i}.")
            if i < len(dims) - 2:
                if layer_norm:
                    ln = LayerNorm(f"{name}.ln{i}", dims[i + 1])
                    self._plan.append(ln)
                    self.params.merge(ln.params, prefix=f"ln{i}.")
                self._plan.append("act")

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        act = _ACTIVATIONS[self.activation]
        for step in self._plan:
            x = act(x) if step == "act" else step(x, frozen=frozen)
        return x


class Conv3x3(Module):
    """3x3 same-padding convolution on (batch, rows, cols, channels) tensors.

    Implemented with an im2col matmul so the generic autodiff machinery
    covers the backward pass apart from the patch scatter.
    """

    def __init__(self, name: str, in_ch: int, out_ch: int, rng: np.random.Generator):
        super().__init__(name)
        self.in_ch = in_ch
        self.out_ch = out_ch
        fan_in = 9 * in_ch
        self.params.add("w", Tensor(fan_in_uniform(rng, fan_in, (fan_in, out_ch))))
        self.params.add("b", Tensor(fan_in_uniform(rng, fan_in, (out_ch,))))

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        if x.data.ndim != 4 or x.data.shape[3] != self.in_ch:
            raise ShapeError(
                f"conv layer {self.name!r}: expected (batch, h, w, {self.in_ch}), got {x.shape}"
            )
        b, h, w, _ = x.data.shape
        cols = _im2col(x, self.in_ch)
        out = ad.matmul(cols, self._weight("w", frozen)) + self._weight("b", frozen)
        return ad.reshape(out, (b, h, w, self.out_ch))


def _im2col(x: Tensor, in_ch: int) -> Tensor:
    b, h, w, c = x.data.shape
    padded = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    # windows: (b, h, w, c, 3, 3) -> (b*h*w, 3*3*c) with kernel-major ordering
    cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(b * h * w, 9 * c)

    def back(g):
        g6 = g.reshape(b, h, w, 3, 3, c).transpose(0, 1, 2, 5, 3, 4)
        gpad = np.zeros((b, h + 2, w + 2, c))
        for di in range(3):
            for dj in range(3):
                gpad[:, di:di + h, dj:dj + w, :] += g6[:, :, :, :, di, dj]
        ad._route(x, gpad[:, 1:h + 1, 1:w + 1, :], "im2col")

    return ad._make(cols, "im2col", (x,), back)


class AvgPool2(Module):
    """2x2 average pooling on (batch, rows, cols, channels)."""

    def __init__(self, name: str = "pool"):
        super().__init__(name)

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        b, h, w, c = x.data.shape
        if h % 2 or w % 2:
            raise ShapeError(f"pool {self.name!r}: spatial dims must be even, got {x.shape}")
        data = x.data.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

        def back(g):
            gfull = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) / 4.0
            ad._route(x, gfull, "avg_pool")

        return ad._make(data, "avg_pool", (x,), back)


class ConvEncoder(Module):
    """Small conv tower for square grayscale images: 2x(conv3x3+tanh+pool) -> dense."""

    def __init__(self, name: str, side: int, out_dim: int, rng: np.random.Generator,
                 channels: int = 8):
        super().__init__(name)
        self.side = side
        self.conv1 = Conv3x3(f"{name}.c1", 1, channels, rng)
        self.conv2 = Conv3x3(f"{name}.c2", channels, channels, rng)
        self.pool = AvgPool2()
        flat = (side // 4) * (side // 4) * channels
        self.head = Dense(f"{name}.head", flat, out_dim, rng)
        self.params.merge(self.conv1.params, "c1.")
        self.params.merge(self.conv2.params, "c2.")
        self.params.merge(self.head.params, "head.")
        self._flat = flat

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        b = x.data.shape[0]
        img = ad.reshape(x, (b, self.side, self.side, 1))
        h = self.pool(ad.tanh(self.conv1(img, frozen=frozen)))
        h = self.pool(ad.tanh(self.conv2(h, frozen=frozen)))
        return self.head(ad.reshape(h, (b, self._flat)), frozen=frozen)


def forward(network: Module, *inputs: Tensor, frozen: bool = False) -> Tensor:
    """Run a network on its inputs, recording the graph for backward."""
    x = inputs[0] if len(inputs) == 1 else ad.concat(list(inputs), axis=1)
    return network(x, frozen=frozen)
