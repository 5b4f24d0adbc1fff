"""PSNR, SSIM, diversity statistics and the per-scene aggregation rule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricRecord:
    psnr: float
    ssim: float
    mse: float
    per_pixel_std_mean: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    # correctly rounded sum, so uniform errors give the exact closed-form value
    x, y = _pair(x, y)
    return math.fsum(((x - y) ** 2).ravel()) / x.size


def psnr_from_mse(m: float, peak: float = 1.0) -> float:
    if m <= 0.0:
        return PSNR_CAP
    return float(20.0 * np.log10(peak) - 10.0 * np.log10(m))


def psnr(x, y, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / mse)``; identical inputs give the 99 dB sentinel."""
    return psnr_from_mse(mse(x, y), peak)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, then keep only positions where the window fits
    k = len(g)
    out = correlate1d(img, g, axis=-2, mode="constant")
    out = correlate1d(out, g, axis=-1, mode="constant")
    lo = k // 2
    hi_h = img.shape[-2] - (k - 1 - lo)
    hi_w = img.shape[-1] - (k - 1 - lo)
    return out[..., lo:hi_h, lo:hi_w]


def ssim_map(x, y, data_range: float = 1.0) -> np.ndarray:
    x, y = _pair(x, y)
    if x.ndim != 2:
        raise ValueError(f"ssim expects a 2-d image, got shape {x.shape}")
    if min(x.shape) < SSIM_WIN:
        raise ValueError(f"image extent {x.shape} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, y, data_range: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian-window positions (sigma 1.5)."""
    return float(ssim_map(x, y, data_range).mean())


def per_pixel_std(samples) -> np.ndarray:
    """Unbiased (K-1) standard deviation across the leading sample axis."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[0] < 2:
        raise ValueError("per_pixel_std needs at least 2 samples")
    # shift by the first sample: identical samples give exactly zero, and the
    # mean no longer has to reproduce each value to the last bit
    d = arr - arr[0]
    d -= d.mean(axis=0)
    return np.sqrt((d * d).sum(axis=0) / (arr.shape[0] - 1))


def aggregate(scores_by_scene: Sequence[Sequence[float]]) -> float:
    """Mean over SAIs within each scene, then mean over scenes."""
    if len(scores_by_scene) == 0:
        raise ValueError("aggregate needs at least one scene")
    means = []
    for i, scene in enumerate(scores_by_scene):
        scene = np.asarray(scene, dtype=np.float64).ravel()
        if scene.size == 0:
            raise ValueError(f"scene {i} has no SAI scores")
        means.append(scene.mean())
    return float(np.mean(means))


def per_view_scores(sr: np.ndarray, hr: np.ndarray, with_ssim: bool = True) -> dict:
    """PSNR/SSIM/MSE for every view of ``(U, V, H, W)`` arrays, flattened view-major."""
    sr, hr = _pair(sr, hr)
    if sr.ndim != 4:
        raise ValueError(f"expected (U,V,H,W) arrays, got {sr.shape}")
    views_sr = sr.reshape(-1, *sr.shape[2:])
    views_hr = hr.reshape(-1, *hr.shape[2:])
    out = {"psnr": [], "mse": [], "ssim": []}
    for a, b in zip(views_sr, views_hr):
        m = mse(a, b)
        out["mse"].append(m)
        out["psnr"].append(psnr_from_mse(m))
        if with_ssim:
            out["ssim"].append(ssim(a, b) if min(a.shape) >= SSIM_WIN else float("nan"))
    if not with_ssim:
        del out["ssim"]
    return out


def pooled_psnr(pairs: Iterable) -> float:
    """PSNR of all pixels pooled together; used only to contrast with :func:`aggregate`."""
    sq, n = 0.0, 0
    for x, y in pairs:
        x, y = _pair(x, y)
        sq += math.fsum(((x - y) ** 2).ravel())
        n += x.size
    return psnr_from_mse(sq / n)
