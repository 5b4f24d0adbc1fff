"""Distg U-Net noise predictor and the small light-field conditioning encoder.

Feature maps travel in MacPI layout ``(B, C, A*H, A*W)``. Resolution changes
are done per view: the map is relaid out as a batch of ``B*A*A`` views,
resized, and relaid back, so macro-pixel alignment holds at every level.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import (
    Conv2d,
    Linear,
    Module,
    Tensor,
    add,
    concat,
    pixel_shuffle,
    reshape,
    resample2d,
    silu,
    transpose,
)
from .disentangle import DistgBlock, Extractor
from .lightfield import resize_matrix


@dataclass
class UNetConfig:
    base_channels: int = 16
    dim_mults: Tuple[int, ...] = (1, 1, 1, 1)
    A: int = 3
    time_embed_dim: Optional[int] = None
    encoder_blocks: int = 4

    def __post_init__(self):
        self.dim_mults = tuple(int(m) for m in self.dim_mults)
        if len(self.dim_mults) != 4:
            raise ValueError(f"dim_mults needs 4 entries, got {len(self.dim_mults)}")
        if self.time_embed_dim is None:
            self.time_embed_dim = 4 * self.base_channels
        for name in ("base_channels", "A", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"UNetConfig.{name} must be positive")
        if min(self.dim_mults) < 1:
            raise ValueError("dim_mults entries must be positive")
        if self.encoder_blocks < 0:
            raise ValueError("encoder_blocks must be >= 0")

    @property
    def channels(self) -> List[int]:
        return [self.base_channels * m for m in self.dim_mults]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dim_mults"] = list(self.dim_mults)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        known = {k: d[k] for k in ("base_channels", "dim_mults", "A", "time_embed_dim", "encoder_blocks") if k in d}
        return cls(**known)


LEVELS = 3  # down/upsampling steps


# ------------------------------------------------------------------ helpers


def timestep_embed(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding ``[sin(t*f_k), cos(t*f_k)]`` with geometric frequencies.

    ``t`` may be a scalar or a 1-d array; the result has shape ``(len(t), dim)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    if half == 0:
        raise ValueError("embedding dim must be >= 2")
    denom = max(half - 1, 1)
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / denom)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def macpi_to_views(x: Tensor, A: int) -> Tensor:
    """``(B, C, A*H, A*W) -> (B*A*A, C, H, W)``; view index is ``u*A + v``."""
    b, c, ah, aw = x.shape
    if ah % A or aw % A:
        raise ValueError(f"MacPI extent {ah}x{aw} not divisible by A={A}")
    h, w = ah // A, aw // A
    y = reshape(x, (b, c, h, A, w, A))
    y = transpose(y, (0, 3, 5, 1, 2, 4))
    return reshape(y, (b * A * A, c, h, w))


def views_to_macpi(x: Tensor, A: int) -> Tensor:
    ba, c, h, w = x.shape
    if ba % (A * A):
        raise ValueError(f"view batch {ba} not divisible by A^2={A * A}")
    b = ba // (A * A)
    y = reshape(x, (b, A, A, c, h, w))
    y = transpose(y, (0, 3, 4, 1, 5, 2))
    return reshape(y, (b, c, h * A, w * A))


class DownPerView(Module):
    """Stride-2 2x2 conv applied to each view independently.

    A 2x2 window tiles an even extent exactly, so the sampling grid is mirror
    symmetric and flips commute with the layer when the kernel is symmetric.
    """

    def __init__(self, A: int, channels: int, rng):
        self.A = A
        self.conv = Conv2d(channels, channels, 2, rng, stride=2)

    def forward(self, x: Tensor) -> Tensor:
        h = x.shape[2] // self.A
        w = x.shape[3] // self.A
        if h % 2 or w % 2:
            raise ValueError(f"per-view extent {h}x{w} must be even to downsample")
        return views_to_macpi(self.conv(macpi_to_views(x, self.A)), self.A)


class UpPerView(Module):
    """1x1 expansion to 4C and a 2x pixel shuffle, per view."""

    def __init__(self, A: int, channels: int, rng):
        self.A = A
        self.conv = Conv2d(channels, 4 * channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return views_to_macpi(pixel_shuffle(self.conv(macpi_to_views(x, self.A)), 2), self.A)


def downsample_per_view(feat: Tensor, layer: DownPerView) -> Tensor:
    return layer(feat)


def upsample_per_view(feat: Tensor, layer: UpPerView) -> Tensor:
    return layer(feat)


def upsample_cond(cond: Tensor, A: int, out_h: int, out_w: int) -> Tensor:
    """Bilinear per-view resize of a MacPI feature map to per-view ``out_h x out_w``."""
    h, w = cond.shape[2] // A, cond.shape[3] // A
    if (h, w) == (out_h, out_w):
        return cond
    mh = resize_matrix(h, out_h, kernel="linear", antialias=False)
    mw = resize_matrix(w, out_w, kernel="linear", antialias=False)
    return views_to_macpi(resample2d(macpi_to_views(cond, A), mh, mw), A)


# ------------------------------------------------------------------- blocks


class DistgResGroup(Module):
    """Two Distg-Blocks with the time embedding added after the first,
    plus a residual spatial convolution from input to output."""

    def __init__(self, A: int, cin: int, cout: int, temb_dim: int, rng):
        self.block1 = DistgBlock(A, cin, cout, rng)
        self.temb = Linear(temb_dim, cout, rng)
        self.block2 = DistgBlock(A, cout, cout, rng)
        self.res = Extractor("SFE", A, cin, cout, rng)

    def forward(self, x: Tensor, temb: Tensor) -> Tensor:
        h = self.block1(x)
        proj = self.temb(silu(temb))
        h = add(h, reshape(proj, proj.shape + (1, 1)))
        h = self.block2(h)
        return add(h, self.res(x))


class LFEncoder(Module):
    """Shallow SFE head followed by residual Distg-Blocks at LR extent."""

    def __init__(self, cfg: UNetConfig, rng):
        self.A = cfg.A
        c = cfg.base_channels
        self.head = Extractor("SFE", cfg.A, 1, c, rng)
        self.blocks = [DistgBlock(cfg.A, c, c, rng, residual=True) for _ in range(cfg.encoder_blocks)]

    def forward(self, lr_macpi: Tensor) -> Tensor:
        if lr_macpi.ndim != 4 or lr_macpi.shape[1] != 1:
            raise ValueError(f"encoder expects (B,1,A*H,A*W), got {lr_macpi.shape}")
        x = self.head(lr_macpi)
        for blk in self.blocks:
            x = blk(x)
        return x


def encode_lr(lr, encoder: LFEncoder) -> Tensor:
    """Encode an LR light field (``LightField``, ``(A,A,H,W)`` array or MacPI tensor)."""
    from .lightfield import LightField, lf_to_macpi_array

    if isinstance(lr, LightField):
        lr = lr.data
    if isinstance(lr, np.ndarray):
        if lr.ndim == 4:
            lr = lf_to_macpi_array(lr)[None, None]
        lr = Tensor(lr)
    return encoder(lr)


class UpsampleHead(Module):
    """Temporary stage-1 head: per-view upsampling to HR plus a 1-channel SFE.

    The output is added to the bicubic-upsampled LR, so the head learns a residual.
    """

    def __init__(self, cfg: UNetConfig, scale: int, rng):
        self.A = cfg.A
        self.scale = scale
        c = cfg.base_channels
        self.expand = Conv2d(c, c * scale * scale, 1, rng)
        self.out = Extractor("SFE", cfg.A, c, 1, rng)
        # start from the bicubic skip alone
        self.out.weight.data = np.zeros_like(self.out.weight.data)

    def forward(self, feat: Tensor) -> Tensor:
        v = macpi_to_views(feat, self.A)
        v = pixel_shuffle(self.expand(v), self.scale)
        return self.out(silu(views_to_macpi(v, self.A)))


class DistgUNet(Module):
    """Noise predictor ``eps(x_t, t, cond)`` in MacPI layout."""

    def __init__(self, cfg: UNetConfig, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        A, base, ch = cfg.A, cfg.base_channels, cfg.channels
        td = cfg.time_embed_dim
        self.time1 = Linear(base, td, rng)
        self.time2 = Linear(td, td, rng)
        self.head = Extractor("SFE", A, 1, ch[0], rng)
        self.cond_proj = Conv2d(base, ch[0], 1, rng) if ch[0] != base else None
        self.enc = [DistgResGroup(A, ch[i], ch[i + 1], td, rng) for i in range(LEVELS)]
        self.down = [DownPerView(A, ch[i + 1], rng) for i in range(LEVELS)]
        self.mid = [DistgResGroup(A, ch[LEVELS], ch[LEVELS], td, rng) for _ in range(2)]
        self.up = [UpPerView(A, ch[i + 1], rng) for i in range(LEVELS)]
        self.dec = [DistgResGroup(A, 2 * ch[i + 1], ch[i], td, rng) for i in range(LEVELS)]
        self.out = Conv2d(ch[0], 1, (3, 3), rng, padding=A, dilation=A, zero_init=True)

    def time_embedding(self, t, batch: int) -> Tensor:
        t = np.broadcast_to(np.atleast_1d(np.asarray(t)), (batch,))
        raw = Tensor(timestep_embed(t, self.cfg.base_channels).astype(self.head.weight.dtype))
        return self.time2(silu(self.time1(raw)))

    def forward(self, x: Tensor, t, cond: Optional[Tensor] = None) -> Tensor:
        A = self.cfg.A
        b, c, ah, aw = x.shape
        if c != 1:
            raise ValueError(f"expected a single-channel input, got {c} channels")
        h, w = ah // A, aw // A
        if ah % A or aw % A or h % (2**LEVELS) or w % (2**LEVELS):
            raise ValueError(f"per-view extent {h}x{w} must be divisible by {2**LEVELS} (A={A})")
        temb = self.time_embedding(t, b)
        feat = self.head(x)
        if cond is not None:
            cond = upsample_cond(cond, A, h, w)
            if self.cond_proj is not None:
                cond = self.cond_proj(cond)
            if cond.shape[0] != b:
                raise ValueError(f"cond batch {cond.shape[0]} does not match input batch {b}")
            feat = add(feat, cond)
        skips = []
        for group, down in zip(self.enc, self.down):
            feat = group(feat, temb)
            skips.append(feat)
            feat = down(feat)
        for group in self.mid:
            feat = group(feat, temb)
        for i in reversed(range(LEVELS)):
            feat = self.up[i](feat)
            feat = concat([feat, skips[i]], axis=1)
            feat = self.dec[i](feat, temb)
        return self.out(feat)

    def params(self) -> Dict[str, Tuple[int, ...]]:
        """Name -> shape for every parameter tensor."""
        return {k: v.shape for k, v in self.parameters().items()}


def unet_forward(noisy_res: Tensor, t, cond: Optional[Tensor], model: DistgUNet) -> Tensor:
    return model(noisy_res, t, cond)


def count_parameters(shapes: Union[Dict[str, Sequence[int]], Module]) -> int:
    if isinstance(shapes, Module):
        return shapes.num_parameters()
    return int(sum(int(np.prod(s)) for s in shapes.values()))
