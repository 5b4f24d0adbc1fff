"""Binary checkpoint container.

Layout: an 8-byte little-endian header length, a UTF-8 JSON header
``{"format_version", "config", "tensors": {name: {dtype, shape, offset}}}``,
then raw little-endian tensor payloads. Offsets count from the first byte
after the header.
"""

from __future__ import annotations

import json
import os
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

FORMAT_VERSION = 1
_ALLOWED = {"float32", "float64", "int64", "int32"}

PathLike = Union[str, os.PathLike]


class CheckpointError(Exception):
    """Unreadable, truncated or incompatible checkpoint."""


def save_checkpoint(path: PathLike, tensors: Dict[str, np.ndarray], config: dict) -> None:
    directory = OrderedDict()
    payloads = []
    offset = 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        dt = arr.dtype.newbyteorder("<")
        if dt.name not in _ALLOWED:
            raise ValueError(f"tensor '{name}' has unsupported dtype {arr.dtype}")
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        directory[name] = {"dtype": dt.name, "shape": list(arr.shape), "offset": offset}
        payloads.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "config": config, "tensors": directory}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for raw in payloads:
            fh.write(raw)
    os.replace(tmp, path)


def read_header(path: PathLike) -> Tuple[dict, int, int]:
    """Return ``(header, payload_start, file_size)``."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise CheckpointError(f"{path}: corrupt header at offset 0 (file too short)")
        (n,) = struct.unpack("<Q", head)
        if n > size - 8:
            raise CheckpointError(f"{path}: corrupt header at offset 8 (length {n} exceeds file size {size})")
        raw = fh.read(n)
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header at offset 8 ({exc})") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unknown format_version {version!r} (expected {FORMAT_VERSION})")
    if not isinstance(header.get("tensors"), dict):
        raise CheckpointError(f"{path}: header has no tensor directory")
    return header, 8 + n, size


def _entry_nbytes(entry: dict) -> int:
    return int(np.prod(entry["shape"], dtype=np.int64)) * np.dtype(entry["dtype"]).itemsize


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], dict]:
    """Return ``(tensors, config)``; raises :class:`CheckpointError` on truncation."""
    header, start, size = read_header(path)
    tensors = OrderedDict()
    with open(path, "rb") as fh:
        for name, entry in header["tensors"].items():
            if entry.get("dtype") not in _ALLOWED:
                raise CheckpointError(f"{path}: tensor '{name}' has unsupported dtype {entry.get('dtype')!r}")
            nbytes = _entry_nbytes(entry)
            begin = start + int(entry["offset"])
            if begin + nbytes > size:
                raise CheckpointError(
                    f"{path}: truncated payload for '{name}' (needs bytes {begin}..{begin + nbytes}, file has {size})"
                )
            fh.seek(begin)
            buf = fh.read(nbytes)
            arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
            tensors[name] = arr.reshape(entry["shape"]).astype(entry["dtype"])
    return tensors, header.get("config", {})


def parameter_count(header: dict) -> int:
    return int(sum(int(np.prod(e["shape"], dtype=np.int64)) for e in header["tensors"].values()))
