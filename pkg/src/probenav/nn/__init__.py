"""Minimal float64 autodiff, layers, Adam, and parameter serialization."""

from . import autodiff
from .adam import AdamState, adam_step
from .autodiff import (
    GraphError,
    NonFiniteError,
    ShapeError,
    Tensor,
    backward,
    no_grad,
)
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    AvgPool2,
    Conv3x3,
    ConvEncoder,
    Dense,
    Identity,
    LayerNorm,
    MLP,
    Module,
    forward,
)
from .params import ParamSet
from .serialize import (
    SerializationError,
    dump_adam,
    dump_params,
    load_adam,
    load_params,
    params_from_payload,
    restore_params,
)

__all__ = [
    "AdamState",
    "AvgPool2",
    "Conv3x3",
    "ConvEncoder",
    "Dense",
    "GradCheckReport",
    "GraphError",
    "Identity",
    "LayerNorm",
    "MLP",
    "Module",
    "NonFiniteError",
    "ParamSet",
    "SerializationError",
    "ShapeError",
    "Tensor",
    "adam_step",
    "autodiff",
    "backward",
    "dump_adam",
    "dump_params",
    "forward",
    "grad_check",
    "load_adam",
    "load_params",
    "no_grad",
    "params_from_payload",
    "restore_params",
]
