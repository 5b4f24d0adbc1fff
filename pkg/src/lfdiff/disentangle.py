"""Spatial, angular and EPI feature extractors on macro-pixel feature maps.

All extractors are plain convolutions whose kernel, stride and dilation are
chosen so that each one only mixes samples from a single domain of the
macro-pixel image (MacPI):

* SFE: 3x3, stride 1, dilation A, padding A -> same extent, per-view spatial.
* AFE: 3x3 (or AxA), stride A, no padding -> one output per macro-pixel.
* EFE-H: 1xA^2, stride (1, A), padding (0, A(A-1)/2) -> (A*H, W).
* EFE-V: A^2x1, stride (A, 1), padding (A(A-1)/2, 0) -> (H, A*W).
"""

from __future__ import annotations

import enum
from typing import Optional

import numpy as np

from .autodiff import (
    Conv2d,
    ConvSpec,
    GroupNorm,
    Module,
    Tensor,
    add,
    concat,
    conv2d,
    pixel_shuffle,
    pixel_shuffle_1d,
    silu,
)


class ExtractorKind(str, enum.Enum):
    SFE = "SFE"
    AFE = "AFE"
    EFE_H = "EFE_H"
    EFE_V = "EFE_V"


def extractor_spec(kind, A: int, afe_kernel: Optional[int] = None) -> ConvSpec:
    kind = ExtractorKind(kind)
    if A < 1:
        raise ValueError(f"angular extent must be positive, got {A}")
    if kind is ExtractorKind.SFE:
        return ConvSpec.make(3, stride=1, padding=A, dilation=A)
    if A < 3:
        raise ValueError(f"{kind.value} needs A >= 3 (got A={A}) so that zero padding gives exact extents")
    if kind is ExtractorKind.AFE:
        k = 3 if afe_kernel is None else int(afe_kernel)
        if not 1 <= k <= A:
            raise ValueError(f"AFE kernel {k} must lie in [1, A={A}]")
        return ConvSpec.make(k, stride=A, padding=0, dilation=1)
    pad = A * (A - 1) // 2
    if kind is ExtractorKind.EFE_H:
        return ConvSpec.make((1, A * A), stride=(1, A), padding=(0, pad))
    return ConvSpec.make((A * A, 1), stride=(A, 1), padding=(pad, 0))


def _check_macpi(feat: Tensor, A: int) -> None:
    if feat.ndim != 4:
        raise ValueError(f"expected (B,C,A*H,A*W) features, got shape {feat.shape}")
    h, w = feat.shape[2:]
    if h % A or w % A:
        raise ValueError(f"feature extent {h}x{w} not divisible by A={A}")


def extractor_forward(
    kind,
    feat: Tensor,
    A: int,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    afe_kernel: Optional[int] = None,
) -> Tensor:
    """Run one extractor convolution (no activation)."""
    _check_macpi(feat, A)
    return conv2d(feat, weight, bias, extractor_spec(kind, A, afe_kernel))


def extractor_out_extent(kind, A: int, H: int, W: int, afe_kernel: Optional[int] = None):
    """Output extent for a MacPI input of ``(A*H, A*W)``."""
    return extractor_spec(kind, A, afe_kernel).out_extent(A * H, A * W)


class Extractor(Conv2d):
    def __init__(self, kind, A: int, cin: int, cout: int, rng, afe_kernel: Optional[int] = None):
        spec = extractor_spec(kind, A, afe_kernel)
        super().__init__(
            cin,
            cout,
            (spec.kernel_h, spec.kernel_w),
            rng,
            stride=(spec.stride_h, spec.stride_w),
            padding=(spec.pad_h, spec.pad_w),
            dilation=(spec.dilation_h, spec.dilation_w),
        )
        self.kind = ExtractorKind(kind)
        self.A = A


def angular_upsample(feat: Tensor, A: int, expand: Conv2d) -> Tensor:
    """(B,C,H,W) -> (B,C,A*H,A*W): 1x1 expansion to C*A^2 then pixel shuffle."""
    return pixel_shuffle(expand(feat), A)


def epi_upsample(feat: Tensor, A: int, expand: Conv2d, axis: str) -> Tensor:
    """Restore the strided EPI axis: 1x1 expansion to C*A then a 1-d shuffle."""
    return pixel_shuffle_1d(expand(feat), A, axis)


class DistgBlock(Module):
    """Four disentangled branches, upsampled to MacPI extent and fused by an SFE.

    ``fused = silu(norm(SFE_4C->C(cat[spa, up(ang), up(epi_h), up(epi_v)])))``
    plus the input when ``residual`` is set.
    """

    def __init__(
        self,
        A: int,
        cin: int,
        cout: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        residual: bool = False,
        afe_kernel: Optional[int] = None,
    ):
        cout = cin if cout is None else cout
        rng = rng if rng is not None else np.random.default_rng(0)
        if residual and cin != cout:
            raise ValueError("a residual Distg-Block needs equal input and output channels")
        self.A = A
        self.residual = residual
        self.spa = Extractor("SFE", A, cin, cout, rng)
        self.ang = Extractor("AFE", A, cin, cout, rng, afe_kernel)
        self.ang_up = Conv2d(cout, cout * A * A, 1, rng)
        self.epi_h = Extractor("EFE_H", A, cin, cout, rng)
        self.epi_h_up = Conv2d(cout, cout * A, 1, rng)
        self.epi_v = Extractor("EFE_V", A, cin, cout, rng)
        self.epi_v_up = Conv2d(cout, cout * A, 1, rng)
        self.fuse = Extractor("SFE", A, 4 * cout, cout, rng)
        self.norm = GroupNorm(cout)

    def branches(self, x: Tensor):
        A = self.A
        spa = silu(self.spa(x))
        ang = angular_upsample(silu(self.ang(x)), A, self.ang_up)
        epi_h = epi_upsample(silu(self.epi_h(x)), A, self.epi_h_up, "width")
        epi_v = epi_upsample(silu(self.epi_v(x)), A, self.epi_v_up, "height")
        return spa, ang, epi_h, epi_v

    def forward(self, x: Tensor) -> Tensor:
        _check_macpi(x, self.A)
        out = self.fuse(concat(self.branches(x), axis=1))
        out = silu(self.norm(out))
        return add(out, x) if self.residual else out


def distg_block_forward(feat: Tensor, block: DistgBlock, residual: Optional[bool] = None) -> Tensor:
    """Functional entry point; ``residual`` overrides the block's own flag."""
    if residual is None or residual == block.residual:
        return block(feat)
    saved = block.residual
    block.residual = bool(residual)
    try:
        return block(feat)
    finally:
        block.residual = saved
