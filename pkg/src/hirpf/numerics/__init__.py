"""Minimal dense tensor numerics with reverse-mode gradients."""

from . import kernels
from .gradcheck import GradCheckError, GradCheckReport, grad_check
from .ops import (
    EmptyActiveError,
    EmptyLossError,
    add,
    causal_softmax,
    cross_entropy,
    embed,
    gelu,
    getitem,
    layer_norm,
    masked_softmax,
    matmul,
    mean,
    mul,
    reshape,
    sigmoid,
    sub,
    sum,
    transpose,
)
from .tensor import (
    DimensionError,
    Tensor,
    get_dtype,
    grad_enabled,
    no_grad,
    precision,
    precision_name,
    set_precision,
)

__all__ = [
    "DimensionError",
    "EmptyActiveError",
    "EmptyLossError",
    "GradCheckError",
    "GradCheckReport",
    "Tensor",
    "add",
    "causal_softmax",
    "cross_entropy",
    "embed",
    "gelu",
    "get_dtype",
    "getitem",
    "grad_check",
    "grad_enabled",
    "kernels",
    "layer_norm",
    "masked_softmax",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "precision",
    "precision_name",
    "reshape",
    "set_precision",
    "sigmoid",
    "sub",
    "sum",
    "transpose",
]
