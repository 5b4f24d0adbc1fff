"""Building networks from a config and moving them through checkpoints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..unet import DistgUNet, LFEncoder, UpsampleHead
from .config import TrainConfig


@dataclass
class ModelBundle:
    cfg: TrainConfig
    encoder: LFEncoder
    unet: Optional[DistgUNet] = None
    head: Optional[UpsampleHead] = None
    stage: str = "1"
    direct: bool = False

    @property
    def residual_mode(self) -> bool:
        return not self.direct


def build(cfg: TrainConfig, with_unet: bool = True, with_head: bool = True) -> ModelBundle:
    """Fresh networks; each gets its own generator derived from ``cfg.seed``."""
    enc = LFEncoder(cfg.unet, np.random.default_rng([cfg.seed, 10]))
    head = UpsampleHead(cfg.unet, cfg.sr_scale, np.random.default_rng([cfg.seed, 11])) if with_head else None
    unet = DistgUNet(cfg.unet, np.random.default_rng([cfg.seed, 12])) if with_unet else None
    return ModelBundle(cfg, enc, unet, head)


def save_bundle(path, bundle: ModelBundle) -> None:
    tensors = {}
    for prefix, mod in (("encoder", bundle.encoder), ("unet", bundle.unet), ("head", bundle.head)):
        if mod is not None:
            for k, v in mod.state_dict().items():
                tensors[f"{prefix}.{k}"] = v
    config = {"train": bundle.cfg.to_dict(), "stage": bundle.stage, "direct": bool(bundle.direct)}
    save_checkpoint(path, tensors, config)


def load_bundle(path) -> ModelBundle:
    tensors, config = load_checkpoint(path)
    try:
        cfg = TrainConfig.from_dict(config["train"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: checkpoint config unreadable ({exc})") from exc
    parts = {p: {} for p in ("encoder", "unet", "head")}
    for name, arr in tensors.items():
        prefix, _, rest = name.partition(".")
        if prefix not in parts:
            raise CheckpointError(f"{path}: unexpected tensor '{name}'")
        parts[prefix][rest] = arr
    bundle = build(cfg, with_unet=bool(parts["unet"]), with_head=bool(parts["head"]))
    try:
        bundle.encoder.load_state_dict(parts["encoder"])
        if bundle.unet is not None:
            bundle.unet.load_state_dict(parts["unet"])
        if bundle.head is not None:
            bundle.head.load_state_dict(parts["head"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    bundle.stage = str(config.get("stage", "1"))
    bundle.direct = bool(config.get("direct", False))
    return bundle
