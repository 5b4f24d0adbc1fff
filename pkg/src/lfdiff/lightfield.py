"""4-D light fields: layouts, bicubic resampling, patching and augmentation.

A light field is stored as an array indexed ``[u, v, h, w]``: ``(u, v)`` picks
the view (sub-aperture image), ``(h, w)`` the pixel inside it. The
macro-pixel layout interleaves the views so that pixel
``(a_u + A*h, a_v + A*w)`` holds sample ``(a_u, a_v, h, w)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, List, Tuple

import numpy as np

AUGMENT_OPS = ("flip_h", "flip_v", "rot90")


@dataclass
class LightField:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ValueError(f"light field must be 4-d (U,V,H,W), got shape {self.data.shape}")

    @property
    def U(self) -> int:
        return self.data.shape[0]

    @property
    def V(self) -> int:
        return self.data.shape[1]

    @property
    def H(self) -> int:
        return self.data.shape[2]

    @property
    def W(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape

    @property
    def angular(self) -> int:
        if self.U != self.V:
            raise ValueError(f"non-square angular grid {self.U}x{self.V}")
        return self.U

    def view(self, u: int, v: int) -> np.ndarray:
        return self.data[u, v]

    def views(self) -> Iterator[Tuple[int, int, np.ndarray]]:
        for u in range(self.U):
            for v in range(self.V):
                yield u, v, self.data[u, v]

    def copy(self) -> "LightField":
        return LightField(self.data.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, LightField) and np.array_equal(self.data, other.data)


@dataclass
class MacPIImage:
    A: int
    H: int
    W: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.A * self.H, self.A * self.W):
            raise ValueError(
                f"MacPI data shape {self.data.shape} does not match A={self.A}, H={self.H}, W={self.W}"
            )


@dataclass(frozen=True)
class ScaleFactor:
    value: int = 4

    def __post_init__(self):
        if self.value not in (1, 2, 4, 8):
            raise ValueError(f"scale factor must be one of 2, 4, 8 (or 1 for identity), got {self.value}")

    def __int__(self) -> int:
        return self.value


def _scale(s) -> int:
    return int(s.value) if isinstance(s, ScaleFactor) else int(s)


# ------------------------------------------------------------------ layouts


def sai_to_macpi(lf: LightField) -> MacPIImage:
    a = lf.angular
    h, w = lf.H, lf.W
    data = lf.data.transpose(2, 0, 3, 1).reshape(a * h, a * w)
    return MacPIImage(a, h, w, np.ascontiguousarray(data))


def macpi_to_sai(m: MacPIImage) -> LightField:
    a, h, w = m.A, m.H, m.W
    data = m.data.reshape(h, a, w, a).transpose(1, 3, 0, 2)
    return LightField(np.ascontiguousarray(data))


def lf_to_macpi_array(data: np.ndarray) -> np.ndarray:
    """Batched relayout ``(..., A, A, H, W) -> (..., A*H, A*W)``."""
    *lead, a, a2, h, w = data.shape
    if a != a2:
        raise ValueError(f"non-square angular grid {a}x{a2}")
    nl = len(lead)
    axes = tuple(range(nl)) + (nl + 2, nl, nl + 3, nl + 1)
    return np.ascontiguousarray(data.transpose(axes).reshape(*lead, a * h, a * w))


def macpi_array_to_lf(data: np.ndarray, a: int) -> np.ndarray:
    """Batched relayout ``(..., A*H, A*W) -> (..., A, A, H, W)``."""
    *lead, ah, aw = data.shape
    if ah % a or aw % a:
        raise ValueError(f"MacPI extent {ah}x{aw} not divisible by A={a}")
    h, w = ah // a, aw // a
    nl = len(lead)
    arr = data.reshape(*lead, h, a, w, a)
    axes = tuple(range(nl)) + (nl + 1, nl + 3, nl, nl + 2)
    return np.ascontiguousarray(arr.transpose(axes))


def sai_grid(lf: LightField) -> np.ndarray:
    """Tile views into a single ``(U*H, V*W)`` image, view-major."""
    return np.ascontiguousarray(lf.data.transpose(0, 2, 1, 3).reshape(lf.U * lf.H, lf.V * lf.W))


def from_sai_grid(img: np.ndarray, U: int, V: int) -> LightField:
    gh, gw = img.shape[:2]
    if gh % U or gw % V:
        raise ValueError(f"grid extent {gh}x{gw} not divisible by U={U}, V={V}")
    h, w = gh // U, gw // V
    return LightField(np.ascontiguousarray(img.reshape(U, h, V, w).transpose(0, 2, 1, 3)))


def extract_epi_h(lf: LightField, v: int, w: int) -> np.ndarray:
    """Slice ``L(u, v*, h, w*)`` as a ``(U, H)`` array."""
    if not 0 <= v < lf.V:
        raise IndexError(f"v={v} out of range [0, {lf.V})")
    if not 0 <= w < lf.W:
        raise IndexError(f"w={w} out of range [0, {lf.W})")
    return lf.data[:, v, :, w].copy()


def extract_epi_v(lf: LightField, u: int, h: int) -> np.ndarray:
    """Slice ``L(u*, v, h*, w)`` as a ``(V, W)`` array."""
    if not 0 <= u < lf.U:
        raise IndexError(f"u={u} out of range [0, {lf.U})")
    if not 0 <= h < lf.H:
        raise IndexError(f"h={h} out of range [0, {lf.H})")
    return lf.data[u, :, h, :].copy()


# --------------------------------------------------------------- resampling


def keys_kernel(x, a: float = -0.5):
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def triangle_kernel(x):
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.maximum(0.0, 1.0 - x)


@lru_cache(maxsize=256)
def resize_matrix(n_in: int, n_out: int, kernel: str = "cubic", antialias: bool = True) -> np.ndarray:
    """``(n_out, n_in)`` interpolation matrix with half-pixel centers and clamped edges.

    When shrinking with ``antialias`` the kernel is stretched by the size
    ratio, as in MATLAB's ``imresize``. Rows sum to one.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"extents must be positive, got {n_in} -> {n_out}")
    if kernel == "cubic":
        fn, support = keys_kernel, 2.0
    elif kernel == "linear":
        fn, support = triangle_kernel, 1.0
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    scale = n_out / n_in
    stretch = 1.0 / scale if (antialias and scale < 1.0) else 1.0
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    half = support * stretch
    left = np.floor(centers - half).astype(int)
    taps = int(np.ceil(2 * half)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = fn((centers[:, None] - idx) / stretch) / stretch
    wts /= wts.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    mat = np.zeros((n_out, n_in))
    rows = np.repeat(np.arange(n_out), taps)
    np.add.at(mat, (rows, idx.ravel()), wts.ravel())
    mat.flags.writeable = False
    return mat


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int, antialias: bool = True) -> np.ndarray:
    """Separable Keys (a=-0.5) resize of the last two axes."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output extent must be positive, got {out_h}x{out_w}")
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if (h, w) == (out_h, out_w):
        return img.copy()
    mh = resize_matrix(h, out_h, "cubic", antialias)
    mw = resize_matrix(w, out_w, "cubic", antialias)
    dtype = img.dtype if img.dtype in (np.float32, np.float64) else np.float64
    out = np.matmul(np.matmul(mh, img.astype(np.float64)), mw.T)
    return out.astype(dtype)


def degrade(lf: LightField, s) -> LightField:
    """Per-view antialiased bicubic downsampling by ``s``."""
    s = _scale(s)
    if lf.H % s or lf.W % s:
        raise ValueError(f"spatial extent {lf.H}x{lf.W} not divisible by scale {s}")
    if s == 1:
        return lf.copy()
    return LightField(bicubic_resize(lf.data, lf.H // s, lf.W // s, antialias=True))


def upsample(lf: LightField, s) -> LightField:
    """Per-view bicubic upsampling by ``s``."""
    s = _scale(s)
    if s == 1:
        return lf.copy()
    return LightField(bicubic_resize(lf.data, lf.H * s, lf.W * s, antialias=True))


# ------------------------------------------------------------------- patches


@dataclass
class PatchPair:
    lr: LightField
    hr: LightField
    top: int
    left: int


def _starts(extent: int, patch: int, stride: int) -> List[int]:
    if patch > extent:
        raise ValueError(f"patch {patch} larger than image extent {extent}")
    starts = list(range(0, extent - patch + 1, stride))
    if starts[-1] != extent - patch:
        starts.append(extent - patch)
    return starts


def crop_patches(pair: Tuple[LightField, LightField], hr_patch: int, stride: int) -> List[PatchPair]:
    """Aligned LR/HR patches; a final patch is anchored flush to each border."""
    lr, hr = pair
    if hr.H % lr.H or hr.W % lr.W or hr.H // lr.H != hr.W // lr.W:
        raise ValueError(f"HR extent {hr.H}x{hr.W} is not an integer multiple of LR {lr.H}x{lr.W}")
    s = hr.H // lr.H
    if hr_patch % s or stride % s:
        raise ValueError(f"patch {hr_patch} and stride {stride} must be divisible by scale {s}")
    if stride < 1:
        raise ValueError("stride must be positive")
    out = []
    for top in _starts(hr.H, hr_patch, stride):
        for left in _starts(hr.W, hr_patch, stride):
            hp = hr.data[:, :, top : top + hr_patch, left : left + hr_patch]
            lp = lr.data[:, :, top // s : (top + hr_patch) // s, left // s : (left + hr_patch) // s]
            out.append(PatchPair(LightField(lp.copy()), LightField(hp.copy()), top, left))
    return out


# ---------------------------------------------------------------- augmentation


def augment_array(data: np.ndarray, op: str) -> np.ndarray:
    """Joint angular+spatial flip/rotation on a ``(..., U, V, H, W)`` array."""
    n = data.ndim
    if op == "flip_h":
        return np.ascontiguousarray(np.flip(data, axis=(n - 3, n - 1)))
    if op == "flip_v":
        return np.ascontiguousarray(np.flip(data, axis=(n - 4, n - 2)))
    if op == "rot90":
        if data.shape[-4] != data.shape[-3]:
            raise ValueError("rot90 needs a square angular grid")
        out = np.rot90(data, axes=(n - 2, n - 1))
        return np.ascontiguousarray(np.rot90(out, axes=(n - 4, n - 3)))
    if op in ("none", None):
        return data.copy()
    raise ValueError(f"unknown augmentation {op!r}; expected one of {AUGMENT_OPS}")


def augment(pair, op: str):
    """Apply the same joint flip/rotation to every field of ``pair``."""
    if isinstance(pair, LightField):
        return LightField(augment_array(pair.data, op))
    return tuple(LightField(augment_array(p.data, op)) for p in pair)


def rgb_to_y(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma from an ``(..., 3)`` RGB array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
