"""Two-stage training: encoder pre-training with an L1 head, then the
denoiser on the diffusion objective with the encoder frozen (or jointly)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..autodiff import Adam, Tensor, add, backward, l1_loss, no_grad
from ..diffusion import loss_direct, loss_residual
from ..lightfield import AUGMENT_OPS, LightField, augment_array, bicubic_resize, crop_patches, degrade, lf_to_macpi_array
from ..unet import DistgUNet, LFEncoder, UpsampleHead
from .config import TrainConfig


class NumericalError(RuntimeError):
    """Non-finite loss during training."""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite loss {value} at iteration {iteration}")
        self.iteration = iteration


class DataEmptyError(ValueError):
    pass


@dataclass
class PatchSet:
    """Stacked LR/HR patches, ``(N, A, A, h, w)`` and ``(N, A, A, H, W)``."""

    lr: np.ndarray
    hr: np.ndarray
    scale: int

    def __len__(self) -> int:
        return self.lr.shape[0]


def make_patches(scenes: Sequence[LightField], scale: int, hr_patch: int, stride: int) -> PatchSet:
    """Degrade each HR scene, then cut aligned patch pairs."""
    lrs, hrs = [], []
    for hr in scenes:
        lr = degrade(hr, scale)
        for p in crop_patches((lr, hr), hr_patch, stride):
            lrs.append(p.lr.data)
            hrs.append(p.hr.data)
    if not lrs:
        raise DataEmptyError("no training patches")
    return PatchSet(np.stack(lrs), np.stack(hrs), scale)


def to_macpi(batch: np.ndarray, dtype=np.float32) -> np.ndarray:
    """``(B, A, A, H, W) -> (B, 1, A*H, A*W)``."""
    return lf_to_macpi_array(batch)[:, None].astype(dtype)


def bicubic_up(lr: np.ndarray, scale: int) -> np.ndarray:
    h, w = lr.shape[-2:]
    return bicubic_resize(lr, h * scale, w * scale)


@dataclass
class Batch:
    lr: np.ndarray  # MacPI (B,1,A*h,A*w)
    hr: np.ndarray  # MacPI (B,1,A*H,A*W)
    up: np.ndarray  # bicubic-upsampled LR, MacPI at HR extent


def draw_batch(data: PatchSet, batch_size: int, rng: np.random.Generator, augment: bool) -> Batch:
    idx = rng.integers(0, len(data), size=batch_size)
    lr, hr = data.lr[idx], data.hr[idx]
    if augment:
        lr_out, hr_out = np.empty_like(lr), np.empty_like(hr)
        ops = rng.integers(0, len(AUGMENT_OPS) + 1, size=batch_size)
        for i, k in enumerate(ops):
            op = "none" if k == len(AUGMENT_OPS) else AUGMENT_OPS[k]
            lr_out[i] = augment_array(lr[i], op)
            hr_out[i] = augment_array(hr[i], op)
        lr, hr = lr_out, hr_out
    up = bicubic_up(lr, data.scale)
    return Batch(to_macpi(lr), to_macpi(hr), to_macpi(up))


def lr_at(cfg: TrainConfig, it: int) -> float:
    return cfg.lr * 0.5 ** (it // cfg.lr_halving)


class LossLog:
    """``iter, loss, lr`` rows; written to CSV when a path is given."""

    def __init__(self, path: Optional[Path] = None):
        self.rows: List[tuple] = []
        self.path = Path(path) if path else None
        self._fh = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
            self._w = csv.writer(self._fh)
            self._w.writerow(["iter", "loss", "lr"])

    def add(self, it: int, loss: float, lr: float) -> None:
        self.rows.append((it, loss, lr))
        if self._fh:
            self._w.writerow([it, repr(float(loss)), repr(float(lr))])

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])


def _check_finite(it: int, value: float) -> None:
    if not np.isfinite(value):
        raise NumericalError(it, value)


def _prefixed(prefix: str, module) -> Dict[str, Tensor]:
    return {f"{prefix}.{k}": v for k, v in module.parameters().items()}


def stage1_forward(encoder: LFEncoder, head: UpsampleHead, batch: Batch) -> Tensor:
    return add(head(encoder(Tensor(batch.lr))), Tensor(batch.up))


def train_stage1(
    encoder: LFEncoder,
    head: UpsampleHead,
    data: PatchSet,
    cfg: TrainConfig,
    iterations: Optional[int] = None,
    log: Optional[LossLog] = None,
) -> LossLog:
    """Fit encoder + temporary head with L1 to HR; the head is thrown away afterwards."""
    if len(data) == 0:
        raise DataEmptyError("no training patches")
    n = cfg.stage1_iterations if iterations is None else iterations
    rng = np.random.default_rng([cfg.seed, 1])
    log = log or LossLog()
    encoder.requires_grad_(True)
    opt = Adam({**_prefixed("encoder", encoder), **_prefixed("head", head)}, lr=cfg.lr)
    for it in range(n):
        opt.lr = lr_at(cfg, it)
        batch = draw_batch(data, cfg.batch_size, rng, cfg.augment)
        loss = l1_loss(stage1_forward(encoder, head, batch), Tensor(batch.hr))
        value = float(loss.item())
        _check_finite(it, value)
        opt.zero_grad()
        backward(loss)
        opt.step()
        log.add(it, value, opt.lr)
    return log


def diffusion_target(batch: Batch, cfg: TrainConfig, direct: bool) -> np.ndarray:
    """The clean signal x0 the chain is trained on.

    Residual mode: ``residual_scale * (HR - up(LR))``. Direct mode: HR mapped to [-1, 1].
    """
    if direct:
        return (2.0 * batch.hr - 1.0).astype(batch.hr.dtype)
    return (cfg.residual_scale * (batch.hr - batch.up)).astype(batch.hr.dtype)


def train_stage2(
    model: DistgUNet,
    encoder: LFEncoder,
    data: PatchSet,
    cfg: TrainConfig,
    joint: bool = False,
    direct: bool = False,
    iterations: Optional[int] = None,
    log: Optional[LossLog] = None,
    checkpoint: Optional[Callable[[int], None]] = None,
) -> LossLog:
    """Minimise the diffusion L1 objective; the encoder is frozen unless ``joint``."""
    if len(data) == 0:
        raise DataEmptyError("no training patches")
    n = cfg.iterations if iterations is None else iterations
    sched = cfg.diffusion.make_schedule()
    rng = np.random.default_rng([cfg.seed, 2])
    log = log or LossLog()
    params = _prefixed("unet", model)
    encoder.requires_grad_(joint)
    if joint:
        params.update(_prefixed("encoder", encoder))
    opt = Adam(params, lr=cfg.lr)
    objective = loss_direct if direct else loss_residual
    for it in range(n):
        opt.lr = lr_at(cfg, it)
        batch = draw_batch(data, cfg.batch_size, rng, cfg.augment)
        if joint:
            cond = encoder(Tensor(batch.lr))
        else:
            with no_grad():
                cond = encoder(Tensor(batch.lr))
        x0 = diffusion_target(batch, cfg, direct)
        loss = objective(model, x0, cond, rng, sched)
        value = float(loss.item())
        _check_finite(it, value)
        opt.zero_grad()
        backward(loss)
        opt.step()
        log.add(it, value, opt.lr)
        if checkpoint is not None and cfg.ckpt_every and (it + 1) % cfg.ckpt_every == 0:
            checkpoint(it + 1)
    encoder.requires_grad_(False)
    return log


def smoothed(values: np.ndarray, window: int = 50) -> np.ndarray:
    """Trailing moving average."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return values
    c = np.cumsum(np.insert(values, 0, 0.0))
    out = np.empty(len(values))
    for i in range(len(values)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out
