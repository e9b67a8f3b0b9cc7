from .gradcheck import max_relative_error, numerical_gradient
from .params import ParamStore
from .tensor import (
    GraphCycle,
    NonFiniteError,
    ShapeMismatch,
    Tensor,
    add,
    attention_weights,
    clip,
    concat,
    div,
    exp,
    getitem,
    linear,
    log,
    matmul,
    maxpool_set,
    mean,
    mse,
    mul,
    norm,
    relu,
    reshape,
    segment_max,
    self_attention,
    set_nan_check,
    softmax,
    sqrt,
    stack,
    sub,
    swapaxes,
    transpose,
    tsum,
    unary,
)

__all__ = [
    "GraphCycle", "NonFiniteError", "ParamStore", "ShapeMismatch", "Tensor", "add", "attention_weights",
    "clip", "concat", "div", "exp", "getitem", "linear", "log", "matmul", "max_relative_error", "maxpool_set",
    "mean", "mse", "mul", "norm", "numerical_gradient", "relu", "reshape", "segment_max", "self_attention", "set_nan_check",
    "softmax", "sqrt", "stack", "sub", "swapaxes", "transpose", "tsum", "unary",
]
