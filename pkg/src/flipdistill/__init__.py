"""Dataset distillation on pixels with flip-concatenation and flip diagnostics."""

__version__ = "0.1.0"

from .config import DistillConfig
from .convnet import NetworkParams, features, init_params, logits, make_rng
from .dataio import ImageBatch, RealSet, load_dataset, load_synthetic, make_flip_closed, save_synthetic
from .diagnostics import (
    attention_symmetry,
    flip_feature_distance,
    pixel_symmetry,
    score_trace,
    unequalness_score,
)
from .objectives import SyntheticSet, dc_distance, distill, distill_step, dm_distance, fyi_augment
from .tensor import Tensor, backward, grad, hflip, no_grad

__all__ = [
    "DistillConfig",
    "NetworkParams",
    "init_params",
    "features",
    "logits",
    "make_rng",
    "ImageBatch",
    "RealSet",
    "load_dataset",
    "load_synthetic",
    "save_synthetic",
    "make_flip_closed",
    "unequalness_score",
    "score_trace",
    "flip_feature_distance",
    "attention_symmetry",
    "pixel_symmetry",
    "SyntheticSet",
    "dm_distance",
    "dc_distance",
    "fyi_augment",
    "distill_step",
    "distill",
    "Tensor",
    "backward",
    "grad",
    "hflip",
    "no_grad",
]
