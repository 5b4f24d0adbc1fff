"""Parameter containers and the small set of layers the networks are built from."""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .ops import ConvSpec, Pair, _pair, conv2d, group_norm, linear
from .tensor import Tensor, get_default_dtype


class Parameter(Tensor):
    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Base class: walks attributes to collect named parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> "OrderedDict[str, Parameter]":
        return OrderedDict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((k, p.data) for k, p in self.parameters().items())

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        if strict:
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            if missing or extra:
                raise KeyError(f"state dict mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in params.items():
            if name not in state:
                continue
            arr = np.array(state[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for '{name}': {arr.shape} vs {p.shape}")
            arr.flags.writeable = False
            p.data = arr

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters().values():
            p.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters().values():
            arr = p.data.astype(dtype)
            arr.flags.writeable = False
            p.data = arr
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=None) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype or get_default_dtype())


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Pair,
        rng: np.random.Generator,
        stride: Pair = 1,
        padding: Pair = 0,
        dilation: Pair = 1,
        bias: bool = True,
        zero_init: bool = False,
    ):
        kh, kw = _pair(kernel)
        self.spec = ConvSpec.make(
            (kh, kw), stride, padding, dilation, in_channels=in_channels, out_channels=out_channels
        )
        shape = (out_channels, in_channels, kh, kw)
        if zero_init:
            w = np.zeros(shape, dtype=get_default_dtype())
        else:
            w = kaiming_uniform(rng, shape, in_channels * kh * kw)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype())) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.spec)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: Optional[int] = None, eps: float = 1e-5):
        groups = groups or min(8, channels)
        while channels % groups:
            groups -= 1
        self.groups = groups
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=get_default_dtype()))
        self.bias = Parameter(np.zeros(channels, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.weight, self.bias, self.eps)
