"""Synthetic layered light fields with known disparity.

Each layer is a band-limited texture (a sinusoid mixture or a sum of
Gaussian blobs) seen through a soft-edged mask. Layer ``k`` at view
``(u, v)`` is the center-view layer translated by
``d_k * (u - u_c, v - v_c)`` samples, so every scene point traces a
straight line of slope ``d_k`` in the epipolar images.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..lightfield import LightField
from .config import ConfigError

TEXTURES = ("sinusoid", "blobs")


@dataclass
class SyntheticSceneSpec:
    texture: str = "sinusoid"
    layers: int = 2
    disparities: Optional[List[float]] = None  # per layer, back to front; drawn when None
    hr_extent: int = 32
    A: int = 3
    seed: int = 0
    sr_scale: int = 2
    max_freq: float = 0.3  # cycles per HR sample

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ConfigError(f"texture must be one of {TEXTURES}, got {self.texture!r}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.A < 1:
            raise ConfigError(f"A must be >= 1, got {self.A}")
        if self.hr_extent < 8 or self.hr_extent % 8 or self.hr_extent % self.sr_scale:
            raise ConfigError(f"hr_extent {self.hr_extent} must be divisible by 8 and by sr_scale")
        if self.disparities is not None:
            d = np.asarray(self.disparities, dtype=np.float64)
            if d.shape != (self.layers,):
                raise ConfigError(f"disparities needs {self.layers} entries, got {len(self.disparities)}")
            if not np.all(np.isfinite(d)) or np.any(np.abs(d) > 2.0):
                raise ConfigError("disparities must be finite and lie in [-2, 2]")
        if not 0 < self.max_freq <= 0.5:
            raise ConfigError(f"max_freq must lie in (0, 0.5], got {self.max_freq}")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSceneSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown scene spec field '{unknown[0]}'")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "SyntheticSceneSpec":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def _sinusoid_texture(rng, n_terms: int, max_freq: float):
    freqs = rng.uniform(0.03, max_freq, n_terms)
    angles = rng.uniform(0, np.pi, n_terms)
    phases = rng.uniform(0, 2 * np.pi, n_terms)
    amps = rng.uniform(0.5, 1.0, n_terms)
    amps /= amps.sum()
    ky, kx = freqs * np.sin(angles), freqs * np.cos(angles)
    offset = rng.uniform(0.3, 0.7)

    def tex(y, x):
        arg = 2 * np.pi * (y[..., None] * ky + x[..., None] * kx) + phases
        return offset + 0.4 * (np.sin(arg) * amps).sum(-1)

    return tex


def _blob_texture(rng, n_blobs: int, extent: float, max_freq: float):
    # blob width set so the Gaussian spectrum is small beyond max_freq
    sig_min = 1.0 / (np.pi * max_freq)
    cy, cx = rng.uniform(-0.2, 1.2, (2, n_blobs)) * extent
    sig = rng.uniform(sig_min, 3 * sig_min, n_blobs)
    amp = rng.uniform(-0.4, 0.4, n_blobs)
    base = rng.uniform(0.35, 0.65)

    def tex(y, x):
        d2 = (y[..., None] - cy) ** 2 + (x[..., None] - cx) ** 2
        return base + (amp * np.exp(-d2 / (2 * sig**2))).sum(-1)

    return tex


def _mask(rng, extent: float):
    """Soft disc or rounded square occupying a fraction of the frame."""
    cy, cx = rng.uniform(0.25, 0.75, 2) * extent
    r = rng.uniform(0.15, 0.35) * extent
    square = rng.random() < 0.5
    soft = 1.0  # edge width in samples

    def m(y, x):
        if square:
            dist = np.maximum(np.abs(y - cy), np.abs(x - cx)) - r
        else:
            dist = np.hypot(y - cy, x - cx) - r
        return 0.5 * (1.0 - np.tanh(dist / soft))

    return m


def synth_scene(spec: SyntheticSceneSpec) -> Tuple[LightField, np.ndarray]:
    """Render ``(HR light field, center-view disparity map)``."""
    rng = np.random.default_rng(spec.seed)
    n, A = spec.hr_extent, spec.A
    if spec.disparities is None:
        disp = rng.uniform(-1.5, 1.5, spec.layers)
        disp.sort()  # larger disparity is nearer; draw back to front
    else:
        disp = np.asarray(spec.disparities, dtype=np.float64)
    textures, masks = [], []
    for k in range(spec.layers):
        if spec.texture == "sinusoid":
            textures.append(_sinusoid_texture(rng, 4, spec.max_freq))
        else:
            textures.append(_blob_texture(rng, 12, n, spec.max_freq))
        masks.append(None if k == 0 else _mask(rng, n))
    c = (A - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    data = np.zeros((A, A, n, n))
    depth = np.zeros((n, n))
    for u in range(A):
        for v in range(A):
            img = np.zeros((n, n))
            for k in range(spec.layers):
                y = yy - disp[k] * (u - c)
                x = xx - disp[k] * (v - c)
                val = textures[k](y, x)
                if masks[k] is None:
                    img = val
                else:
                    a = masks[k](y, x)
                    img = a * val + (1 - a) * img
            data[u, v] = img
    for k in range(spec.layers):
        if masks[k] is None:
            depth[:] = disp[k]
        else:
            depth = np.where(masks[k](yy, xx) > 0.5, disp[k], depth)
    return LightField(np.clip(data, 0.0, 1.0)), depth


def synth_corpus(spec: SyntheticSceneSpec, count: int) -> List[Tuple[LightField, np.ndarray]]:
    """``count`` scenes with seeds ``spec.seed + i``."""
    out = []
    for i in range(count):
        d = spec.to_dict()
        d["seed"] = spec.seed + i
        out.append(synth_scene(SyntheticSceneSpec(**d)))
    return out


def mixed_corpus(count: int, hr_extent: int, seed: int, A: int = 3, sr_scale: int = 2) -> List[LightField]:
    """Alternating sinusoid / blob scenes with two or three layers, as used by the toy runs."""
    scenes = []
    for i in range(count):
        spec = SyntheticSceneSpec(
            texture=TEXTURES[i % 2], layers=2 + (i // 2) % 2, hr_extent=hr_extent,
            A=A, seed=seed + i, sr_scale=sr_scale,
        )
        scenes.append(synth_scene(spec)[0])
    return scenes
