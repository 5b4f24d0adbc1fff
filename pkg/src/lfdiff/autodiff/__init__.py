"""Minimal reverse-mode autodiff engine on top of numpy."""

from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    backward,
    concat,
    default_dtype,
    div,
    get_default_dtype,
    is_grad_enabled,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    reshape,
    set_default_dtype,
    silu,
    sub,
    tabs,
    transpose,
    tsum,
)
from .ops import (
    ConvSpec,
    conv2d,
    group_norm,
    l1_loss,
    linear,
    mse_loss,
    pixel_shuffle,
    pixel_shuffle_1d,
    pixel_unshuffle,
    pixel_unshuffle_1d,
    resample2d,
)
from .optim import Adam, AdamState, adam_step
from .module import Conv2d, GroupNorm, Linear, Module, Parameter

__all__ = [
    "Adam",
    "AdamState",
    "Conv2d",
    "ConvSpec",
    "GroupNorm",
    "Linear",
    "Module",
    "Parameter",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "add",
    "backward",
    "concat",
    "conv2d",
    "default_dtype",
    "div",
    "get_default_dtype",
    "group_norm",
    "is_grad_enabled",
    "l1_loss",
    "linear",
    "matmul",
    "mean",
    "mse_loss",
    "mul",
    "neg",
    "no_grad",
    "pixel_shuffle",
    "pixel_shuffle_1d",
    "pixel_unshuffle",
    "pixel_unshuffle_1d",
    "resample2d",
    "reshape",
    "set_default_dtype",
    "silu",
    "sub",
    "tabs",
    "transpose",
    "tsum",
]
