"""Scene directories and PNG I/O.

A scene directory holds one grayscale or RGB PNG per view, named
``view_{u}_{v}.png``, and a ``scene.json`` with ``{"U", "V", "H", "W"}``.
An optional ``disparity.npy`` stores the center-view disparity map.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from .lightfield import LightField, from_sai_grid, rgb_to_y, sai_grid

PathLike = Union[str, os.PathLike]


class DataError(Exception):
    """Malformed or missing on-disk data."""


def read_png(path: PathLike, with_bits: bool = False):
    """Load a PNG as float64 in [0, 1]; RGB is reduced to BT.601 luma.

    With ``with_bits`` the source bit depth (8 or 16) is returned as well.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            mode = im.mode
            arr = np.array(im)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from exc
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        img, bits = arr.astype(np.float64) / 65535.0, 16
    elif mode == "L":
        img, bits = arr.astype(np.float64) / 255.0, 8
    elif mode in ("RGB", "RGBA"):
        img, bits = rgb_to_y(arr[..., :3].astype(np.float64) / 255.0), 8
    else:
        raise DataError(f"{path}: unsupported PNG mode {mode}")
    return (img, bits) if with_bits else img


def write_png(path: PathLike, img: np.ndarray, bits: int = 16) -> None:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bits == 16:
        arr = np.round(img * 65535.0).astype(np.uint16)
        Image.fromarray(arr).save(path)
    elif bits == 8:
        arr = np.round(img * 255.0).astype(np.uint8)
        Image.fromarray(arr).save(path)
    else:
        raise ValueError(f"bits must be 8 or 16, got {bits}")


def view_name(u: int, v: int) -> str:
    return f"view_{u}_{v}.png"


def write_scene(
    directory: PathLike,
    lf: LightField,
    disparity: Optional[np.ndarray] = None,
    bits: int = 16,
    extra: Optional[dict] = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for u, v, img in lf.views():
        write_png(directory / view_name(u, v), img, bits=bits)
    meta = {"U": lf.U, "V": lf.V, "H": lf.H, "W": lf.W}
    if extra:
        meta.update(extra)
    (directory / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if disparity is not None:
        with open(directory / "disparity.npy", "wb") as fh:
            np.save(fh, np.asarray(disparity, dtype=np.float64))
    return directory


def read_scene_meta(directory: PathLike) -> dict:
    directory = Path(directory)
    meta_path = directory / "scene.json"
    if not meta_path.exists():
        raise DataError(f"{directory}: missing scene.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON ({exc})") from exc
    for key in ("U", "V", "H", "W"):
        if not isinstance(meta.get(key), int) or meta[key] < 1:
            raise DataError(f"{meta_path}: field '{key}' must be a positive integer")
    return meta


def read_scene(directory: PathLike) -> Tuple[LightField, Optional[np.ndarray]]:
    directory = Path(directory)
    meta = read_scene_meta(directory)
    U, V, H, W = meta["U"], meta["V"], meta["H"], meta["W"]
    data = np.empty((U, V, H, W), dtype=np.float64)
    for u in range(U):
        for v in range(V):
            path = directory / view_name(u, v)
            if not path.exists():
                raise DataError(f"{directory}: missing view file {path.name}")
            img = read_png(path)
            if img.shape != (H, W):
                raise DataError(f"{path}: extent {img.shape} does not match scene.json ({H}, {W})")
            data[u, v] = img
    disparity = None
    disp_path = directory / "disparity.npy"
    if disp_path.exists():
        disparity = np.load(disp_path)
    return LightField(data), disparity


def list_scenes(root: PathLike) -> list:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    if (root / "scene.json").exists():
        return [root]
    return sorted(p for p in root.iterdir() if (p / "scene.json").exists())


def read_grid(path: PathLike, U: int, V: int) -> LightField:
    img = read_png(path)
    try:
        return from_sai_grid(img, U, V)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_grid(path: PathLike, lf: LightField, bits: int = 16) -> None:
    write_png(path, sai_grid(lf), bits=bits)
