"""Network operations on :class:`Tensor`: convolution, sub-pixel shuffles,
normalization, dense layers, resampling and losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, is_grad_enabled, mean, reshape, sub, tabs, transpose, mul, matmul, add

Pair = Union[int, Tuple[int, int]]


def _pair(v: Pair) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ValueError(f"expected a pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-d cross-correlation."""

    kernel_h: int
    kernel_w: int
    stride_h: int = 1
    stride_w: int = 1
    dilation_h: int = 1
    dilation_w: int = 1
    pad_h: int = 0
    pad_w: int = 0
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None

    def __post_init__(self):
        for name in ("kernel_h", "kernel_w", "stride_h", "stride_w", "dilation_h", "dilation_w"):
            if getattr(self, name) < 1:
                raise ValueError(f"ConvSpec.{name} must be positive")
        if self.pad_h < 0 or self.pad_w < 0:
            raise ValueError("ConvSpec padding must be nonnegative")

    @classmethod
    def make(cls, kernel: Pair, stride: Pair = 1, padding: Pair = 0, dilation: Pair = 1, **kw):
        kh, kw_ = _pair(kernel)
        sh, sw = _pair(stride)
        ph, pw = _pair(padding)
        dh, dw = _pair(dilation)
        return cls(kh, kw_, sh, sw, dh, dw, ph, pw, **kw)

    def out_extent(self, h: int, w: int) -> Tuple[int, int]:
        ho = (h + 2 * self.pad_h - self.dilation_h * (self.kernel_h - 1) - 1) // self.stride_h + 1
        wo = (w + 2 * self.pad_w - self.dilation_w * (self.kernel_w - 1) - 1) // self.stride_w + 1
        return ho, wo


def _windows(xp: np.ndarray, spec: ConvSpec, ho: int, wo: int) -> np.ndarray:
    """Strided view ``(B, C, kh, kw, Ho, Wo)`` over a padded input."""
    b, c = xp.shape[:2]
    s = xp.strides
    return as_strided(
        xp,
        shape=(b, c, spec.kernel_h, spec.kernel_w, ho, wo),
        strides=(
            s[0],
            s[1],
            s[2] * spec.dilation_h,
            s[3] * spec.dilation_w,
            s[2] * spec.stride_h,
            s[3] * spec.stride_w,
        ),
        writeable=False,
    )


_COLS_BUDGET = 1 << 20  # bytes of unfolded input per block on the no-grad path


def _conv_blocked(xp, wmat, bias, spec, ho, wo) -> np.ndarray:
    """Forward-only convolution that unfolds a few samples at a time.

    The full unfolded batch can run to hundreds of MB; small blocks stay in
    cache. Each sample's product is the same GEMM either way, so the result
    matches the batched path exactly.
    """
    b = xp.shape[0]
    cout, ck = wmat.shape
    per = ck * ho * wo * xp.itemsize
    step = max(1, _COLS_BUDGET // per)
    out = np.empty((b, cout, ho * wo), dtype=xp.dtype)
    for s in range(0, b, step):
        blk = xp[s : s + step]
        cols = np.ascontiguousarray(_windows(blk, spec, ho, wo)).reshape(len(blk), ck, ho * wo)
        out[s : s + step] = np.matmul(cols.transpose(0, 2, 1), wmat.T).transpose(0, 2, 1)
    if bias is not None:
        out += bias.data[:, None]
    return out.reshape(b, cout, ho, wo)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    spec: Optional[ConvSpec] = None,
    *,
    stride: Pair = 1,
    padding: Pair = 0,
    dilation: Pair = 1,
) -> Tensor:
    """Zero-padded strided/dilated cross-correlation, NCHW layout."""
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be 4-d (B,C,H,W), got shape {x.shape}")
    if weight.ndim != 4:
        raise ValueError(f"conv2d: weight must be 4-d (Cout,Cin,kh,kw), got shape {weight.shape}")
    cout, cin, kh, kw = weight.shape
    if spec is None:
        spec = ConvSpec.make((kh, kw), stride, padding, dilation)
    elif (spec.kernel_h, spec.kernel_w) != (kh, kw):
        raise ValueError(
            f"conv2d: weight kernel {kh}x{kw} does not match spec {spec.kernel_h}x{spec.kernel_w}"
        )
    b, c, h, w = x.shape
    if c != cin:
        raise ValueError(f"conv2d: input has {c} channels (dim 1) but weight expects {cin}")
    if spec.in_channels is not None and spec.in_channels != cin:
        raise ValueError(f"conv2d: spec expects {spec.in_channels} input channels, got {cin}")
    if spec.out_channels is not None and spec.out_channels != cout:
        raise ValueError(f"conv2d: spec expects {spec.out_channels} output channels, got {cout}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
    ho, wo = spec.out_extent(h, w)
    if ho < 1:
        raise ValueError(f"conv2d: output height (dim 2) would be {ho} for input height {h}")
    if wo < 1:
        raise ValueError(f"conv2d: output width (dim 3) would be {wo} for input width {w}")

    ph, pw = spec.pad_h, spec.pad_w
    xd = x.data
    if ph or pw:
        xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=xd.dtype)
        xp[:, :, ph : ph + h, pw : pw + w] = xd
    else:
        xp = np.ascontiguousarray(xd)
    ck = c * kh * kw
    pointwise = kh == kw == 1 and spec.stride_h == spec.stride_w == 1
    wmat = weight.data.reshape(cout, ck)
    needs_grad = is_grad_enabled() and any(
        t.requires_grad for t in (x, weight, bias) if t is not None
    )
    if not pointwise and not needs_grad:
        return Tensor._from_op(_conv_blocked(xp, wmat, bias, spec, ho, wo), (), None, "conv2d")
    if pointwise:
        cols = xp.reshape(b, c, ho * wo)
    else:
        cols = np.ascontiguousarray(_windows(xp, spec, ho, wo)).reshape(b, ck, ho * wo)
    # (HW x CK) @ (CK x Cout) keeps BLAS on its fast path for small Cout
    out = np.matmul(cols.transpose(0, 2, 1), wmat.T)
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(b, cout, ho, wo)

    def bw(g):
        g3 = np.ascontiguousarray(g).reshape(b, cout, ho * wo)
        gw = None
        if weight.requires_grad:
            gw = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        gb = g3.sum(axis=(0, 2)) if (bias is not None and bias.requires_grad) else None
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wmat.T, g3)
            if pointwise:
                return gcols.reshape(b, c, h, w), gw, gb
            gcols = gcols.reshape(b, c, kh, kw, ho, wo)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            hspan = spec.stride_h * (ho - 1) + 1
            wspan = spec.stride_w * (wo - 1) + 1
            for i in range(kh):
                r0 = i * spec.dilation_h
                for j in range(kw):
                    c0 = j * spec.dilation_w
                    gxp[:, :, r0 : r0 + hspan : spec.stride_h, c0 : c0 + wspan : spec.stride_w] += gcols[
                        :, :, i, j
                    ]
            gx = gxp[:, :, ph : ph + h, pw : pw + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, bw, "conv2d")


# ------------------------------------------------------------ shuffles


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(B, C*r*r, H, W) -> (B, C, r*H, r*W)."""
    b, cr, h, w = x.shape
    if r < 1 or cr % (r * r):
        raise ValueError(f"pixel_shuffle: {cr} channels not divisible by r^2={r * r}")
    c = cr // (r * r)
    y = reshape(x, (b, c, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (b, c, h * r, w * r))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """(B, C, r*H, r*W) -> (B, C*r*r, H, W); inverse of :func:`pixel_shuffle`."""
    b, c, hr, wr = x.shape
    if r < 1 or hr % r or wr % r:
        raise ValueError(f"pixel_unshuffle: extent {hr}x{wr} not divisible by r={r}")
    h, w = hr // r, wr // r
    y = reshape(x, (b, c, h, r, w, r))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (b, c * r * r, h, w))


def _axis_name(axis) -> str:
    if axis in ("width", "w", 3, -1):
        return "width"
    if axis in ("height", "h", 2, -2):
        return "height"
    raise ValueError(f"axis must be 'height' or 'width', got {axis!r}")


def pixel_shuffle_1d(x: Tensor, r: int, axis="width") -> Tensor:
    """Move channel groups onto one spatial axis.

    ``(B, C*r, H, W) -> (B, C, H, r*W)`` for ``axis="width"``; channel
    ``k*C + c`` lands at sub-position ``k`` of each output group.
    """
    axis = _axis_name(axis)
    b, cr, h, w = x.shape
    if r < 1 or cr % r:
        raise ValueError(f"pixel_shuffle_1d: {cr} channels not divisible by r={r}")
    c = cr // r
    y = reshape(x, (b, r, c, h, w))
    if axis == "width":
        y = transpose(y, (0, 2, 3, 4, 1))
        return reshape(y, (b, c, h, w * r))
    y = transpose(y, (0, 2, 3, 1, 4))
    return reshape(y, (b, c, h * r, w))


def pixel_unshuffle_1d(x: Tensor, r: int, axis="width") -> Tensor:
    axis = _axis_name(axis)
    b, c, h, w = x.shape
    if axis == "width":
        if w % r:
            raise ValueError(f"pixel_unshuffle_1d: width {w} not divisible by r={r}")
        y = reshape(x, (b, c, h, w // r, r))
        y = transpose(y, (0, 4, 1, 2, 3))
        return reshape(y, (b, c * r, h, w // r))
    if h % r:
        raise ValueError(f"pixel_unshuffle_1d: height {h} not divisible by r={r}")
    y = reshape(x, (b, c, h // r, r, w))
    y = transpose(y, (0, 3, 1, 2, 4))
    return reshape(y, (b, c * r, h // r, w))


# ------------------------------------------------------- normalization


def group_norm(
    x: Tensor,
    groups: int,
    weight: Optional[Tensor] = None,
    bias: Optional[Tensor] = None,
    eps: float = 1e-5,
) -> Tensor:
    b, c = x.shape[:2]
    if c % groups:
        raise ValueError(f"group_norm: {c} channels (dim 1) not divisible into {groups} groups")
    for name, p in (("weight", weight), ("bias", bias)):
        if p is not None and p.shape != (c,):
            raise ValueError(f"group_norm: {name} shape {p.shape} does not match {c} channels")
    xd = x.data
    xg = xd.reshape(b, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).reshape(xd.shape)
    bshape = (1, c) + (1,) * (xd.ndim - 2)
    out = xhat
    if weight is not None:
        out = out * weight.data.reshape(bshape)
    if bias is not None:
        out = out + bias.data.reshape(bshape)
    n = xg.shape[2]
    red = (0,) + tuple(range(2, xd.ndim))

    def bw(g):
        gw = (g * xhat).sum(axis=red) if (weight is not None and weight.requires_grad) else None
        gb = g.sum(axis=red) if (bias is not None and bias.requires_grad) else None
        gx = None
        if x.requires_grad:
            dxhat = g * weight.data.reshape(bshape) if weight is not None else g
            dg = dxhat.reshape(b, groups, n)
            xh = xhat.reshape(b, groups, n)
            gx = inv * (dg - dg.mean(axis=2, keepdims=True) - xh * (dg * xh).mean(axis=2, keepdims=True))
            gx = gx.reshape(xd.shape)
        return gx, gw, gb

    parents = (x,) + tuple(p for p in (weight, bias) if p is not None)

    def bw_packed(g):
        gx, gw, gb = bw(g)
        out_grads = [gx]
        if weight is not None:
            out_grads.append(gw)
        if bias is not None:
            out_grads.append(gb)
        return tuple(out_grads)

    return Tensor._from_op(out, parents, bw_packed, "group_norm")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(
            f"linear: input feature extent {x.shape[-1]} does not match weight in-dim {weight.shape[1]}"
        )
    y = matmul(x, transpose(weight, (1, 0)))
    return add(y, bias) if bias is not None else y


# ----------------------------------------------------------- resampling


def resample2d(x: Tensor, mh: np.ndarray, mw: np.ndarray) -> Tensor:
    """Apply separable linear maps: ``out[..., i, j] = sum mh[i,h] x[..., h, w] mw[j,w]``."""
    if mh.shape[1] != x.shape[-2] or mw.shape[1] != x.shape[-1]:
        raise ValueError(
            f"resample2d: matrices {mh.shape}/{mw.shape} do not fit extent {x.shape[-2:]}"
        )
    mh = mh.astype(x.dtype, copy=False)
    mw = mw.astype(x.dtype, copy=False)
    xd = x.data
    out = np.matmul(np.matmul(mh, xd), mw.T)

    def bw(g):
        return (np.matmul(np.matmul(mh.T, g), mw),)

    return Tensor._from_op(out, (x,), bw, "resample2d")


# ---------------------------------------------------------------- losses


def _check_same(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def l1_loss(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target, dtype=pred.dtype)
    _check_same(pred, target, "l1_loss")
    return mean(tabs(sub(pred, target)))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target, dtype=pred.dtype)
    _check_same(pred, target, "mse_loss")
    d = sub(pred, target)
    return mean(mul(d, d))
