"""Data synthesis, training, inference and evaluation."""

from .config import ConfigError, TrainConfig, toy_config
from .infer import SRResult, evaluate, infer, infer_many, score_result
from .models import ModelBundle, build, load_bundle, save_bundle
from .synth import SyntheticSceneSpec, mixed_corpus, synth_corpus, synth_scene
from .train import (
    DataEmptyError,
    LossLog,
    NumericalError,
    PatchSet,
    draw_batch,
    make_patches,
    smoothed,
    train_stage1,
    train_stage2,
)

__all__ = [
    "ConfigError",
    "DataEmptyError",
    "LossLog",
    "ModelBundle",
    "NumericalError",
    "PatchSet",
    "SRResult",
    "SyntheticSceneSpec",
    "TrainConfig",
    "build",
    "draw_batch",
    "evaluate",
    "infer",
    "infer_many",
    "load_bundle",
    "make_patches",
    "mixed_corpus",
    "save_bundle",
    "score_result",
    "smoothed",
    "synth_corpus",
    "synth_scene",
    "toy_config",
    "train_stage1",
    "train_stage2",
]
