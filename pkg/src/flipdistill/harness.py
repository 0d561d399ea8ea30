"""Retraining, evaluation and run bookkeeping.

A synthetic set is judged the usual way: train a fresh ConvNet on it with
SGD (lr 0.01, momentum 0.9, weight decay 5e-4, one x0.1 drop halfway) and
report top-1 accuracy on the real test split.  Flipped copies are *not*
added during retraining, whether or not the set was distilled with them.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import apply_aug, sample_aug
from .config import DistillConfig
from .convnet import NetworkParams, cross_entropy, init_params, logits, make_rng, predict
from .dataio import ImageBatch, RealSet, load_dataset, make_flip_closed
from .objectives import SyntheticSet, distill
from .tensor import Tensor, backward, no_grad

log = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parents[2]


class TrainingError(FloatingPointError):
    """Retraining produced a non-finite loss."""


def resolve_data_dir(data_dir) -> Path:
    """Use ``data_dir`` as given if it exists, else relative to the source checkout."""
    path = Path(data_dir)
    if path.exists() or path.is_absolute():
        return path
    alt = PACKAGE_ROOT / path
    return alt if alt.exists() else path


def load_real(cfg: DistillConfig) -> tuple[RealSet, ImageBatch]:
    """Training split grouped by class (flip-closed if configured) and the test split."""
    train, test, meta = load_dataset(cfg.dataset, resolve_data_dir(cfg.data_dir))
    real = RealSet.from_batch(train, meta.classes, meta)
    if cfg.flip_closed:
        real = make_flip_closed(real)
    return real, test


def run_distill(cfg: DistillConfig, real: RealSet | None = None, progress=None):
    """Load data if needed and run :func:`distill`; returns (synthetic set, log)."""
    if real is None:
        real, _ = load_real(cfg)
    return distill(cfg, real, progress=progress)


# -- retraining ------------------------------------------------------------------


def _as_training_batch(s) -> ImageBatch:
    if isinstance(s, ImageBatch):
        return s
    if isinstance(s, SyntheticSet):
        x, y = s.as_batch()
        return ImageBatch(x, y)
    if hasattr(s, "as_batch"):
        return s.as_batch()
    arr = np.asarray(s, dtype=np.float64)  # classes x ipc x C x H x W
    k, m = arr.shape[:2]
    return ImageBatch(arr.reshape(k * m, *arr.shape[2:]), np.repeat(np.arange(k), m))


def _augment_each(x: np.ndarray, rng: np.random.Generator, palette) -> np.ndarray:
    out = np.empty_like(x)
    with no_grad():
        for i in range(len(x)):
            spec = sample_aug(rng, palette, x.shape[1:])
            out[i] = apply_aug(spec, Tensor._wrap(x[i:i + 1])).data[0]
    return out


def train_network(
    cfg: DistillConfig,
    train: ImageBatch,
    rng: np.random.Generator,
    classes: int | None = None,
) -> NetworkParams:
    """Train a fresh ConvNet on ``train`` with momentum SGD and weight decay.

    Every image gets its own augmentation draw from ``cfg.retrain_palette``
    when ``cfg.retrain_aug`` is set.  The update follows the common
    convention v <- m*v + (g + wd*w), w <- w - lr*v.
    """
    if len(train) == 0:
        raise ValueError("cannot train on an empty set")
    classes = int(train.labels.max()) + 1 if classes is None else classes
    p = init_params(rng, train.images.shape[1:], classes, cfg.blocks, cfg.width, cfg.instance_norm)
    params = p.requires_grad_(True).parameters()
    velocity = [np.zeros(t.shape) for t in params]
    n = len(train)
    batch = min(cfg.batch_train, n)
    lr = cfg.lr_net
    for epoch in range(cfg.epochs):
        if epoch == cfg.drop_epoch and epoch > 0:
            lr *= cfg.lr_drop_factor
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            x = train.images[idx]
            if cfg.retrain_aug:
                x = _augment_each(x, rng, cfg.retrain_palette)
            loss = cross_entropy(logits(p, x), train.labels[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite training loss {value} at epoch {epoch}")
            for t in params:
                t.grad = None
            backward(loss)
            for t, v in zip(params, velocity):
                g = t.grad if t.grad is not None else 0.0
                v *= cfg.momentum_net
                v += g + cfg.weight_decay * t.data
                t.data -= lr * v
    for t in params:
        t.grad = None
    p.requires_grad_(False)
    p.trained = cfg.epochs > 0
    return p


def accuracy(p: NetworkParams, test: ImageBatch) -> float:
    return float((predict(p, test.images) == test.labels).mean())


def retrain_eval(cfg: DistillConfig, s, test: ImageBatch, rng: np.random.Generator | int) -> float:
    """Train a fresh network on ``s`` and return its top-1 accuracy on ``test``."""
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    train = _as_training_batch(s)
    classes = max(int(train.labels.max()), int(test.labels.max())) + 1
    p = train_network(cfg, train, rng, classes)
    return accuracy(p, test)


def eval_seeds(cfg: DistillConfig, n: int | None = None) -> list[int]:
    n = cfg.eval_seeds if n is None else n
    return [cfg.eval_seed + i for i in range(n)]


def evaluate(cfg: DistillConfig, s, test: ImageBatch, seeds=None) -> list[tuple[int, float]]:
    """(seed, accuracy) for each evaluation seed."""
    seeds = eval_seeds(cfg) if seeds is None else seeds
    return [(seed, retrain_eval(cfg, s, test, seed)) for seed in seeds]


def random_real_subset(real: RealSet, ipc: int, rng: np.random.Generator) -> ImageBatch:
    images, labels = [], []
    for c, x in enumerate(real.by_class):
        idx = rng.choice(len(x), size=ipc, replace=len(x) < ipc)
        images.append(x[idx])
        labels.append(np.full(ipc, c, dtype=np.int64))
    return ImageBatch(np.concatenate(images), np.concatenate(labels))


def baseline_random_real(cfg: DistillConfig, real: RealSet, test: ImageBatch, rng: np.random.Generator | int) -> float:
    """Accuracy after training on ``cfg.ipc`` randomly chosen real images per class."""
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    subset = random_real_subset(real, cfg.ipc, rng)
    return retrain_eval(cfg, subset, test, rng)


def summarize(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


# -- manifest --------------------------------------------------------------------


def git_blob_hash(data: bytes) -> str:
    """Content hash in the form git uses for blobs."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hashes(path) -> dict:
    data = Path(path).read_bytes()
    return {"git_blob": git_blob_hash(data), "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}


@dataclass
class Manifest:
    command: str
    config: DistillConfig | None
    seeds: dict
    outputs: list

    def to_dict(self) -> dict:
        from . import __version__

        out = {
            "command": self.command,
            "package_version": __version__,
            "seeds": self.seeds,
            "outputs": {str(Path(p).name): file_hashes(p) for p in self.outputs},
        }
        if self.config is not None:
            out["config_sha256"] = self.config.digest()
            out["config"] = self.config.to_dict()
        return out

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def config_seeds(cfg: DistillConfig) -> dict:
    return {
        "data_seed": cfg.data_seed,
        "theta_seed": cfg.theta_seed,
        "aug_seed": cfg.aug_seed,
        "eval_seed": cfg.eval_seed,
        "eval_seeds": cfg.eval_seeds,
    }
