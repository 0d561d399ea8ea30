"""Matching objectives and the synthetic-image optimisation loop.

Distribution matching compares mean ConvNet features of a real and a
synthetic batch; gradient matching compares the classification-loss
gradients the two batches induce on the network weights.  With ``fyi`` on,
each class's synthetic images are concatenated with their mirror images
before the distance is computed, and the pixel gradient flows back through
both halves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .augment import AugSpec, apply_aug, sample_aug, variant_transform
from .config import DistillConfig
from .convnet import NetworkParams, cross_entropy, features, init_params, logits, make_rng
from .dataio import RealSet
from .tensor import Tensor, backward, batch_concat, concat, grad, hflip, narrow, no_grad

log = logging.getLogger(__name__)


class DistillationError(FloatingPointError):
    """The matching loss became non-finite."""


@dataclass
class SyntheticSet:
    """Learnable images, one ``ipc x C x H x W`` leaf tensor per class."""

    images: list[Tensor]
    mean: tuple = ()
    std: tuple = ()

    def __post_init__(self):
        sizes = {t.shape[0] for t in self.images}
        if len(sizes) > 1:
            raise ValueError(f"every class needs the same number of images, got {sorted(sizes)}")

    @property
    def classes(self) -> int:
        return len(self.images)

    @property
    def ipc(self) -> int:
        return self.images[0].shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images[0].shape[1:])

    def to_array(self) -> np.ndarray:
        return np.stack([t.data for t in self.images])

    @classmethod
    def from_array(cls, arr: np.ndarray, mean=(), std=()) -> "SyntheticSet":
        return cls([Tensor(a, requires_grad=True) for a in np.asarray(arr)], tuple(mean), tuple(std))

    def as_batch(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.concatenate([t.data for t in self.images])
        return x, np.repeat(np.arange(self.classes), self.ipc)


def init_synthetic(real: RealSet, ipc: int, rng: np.random.Generator, mode: str = "real") -> SyntheticSet:
    """Start from ``ipc`` randomly chosen real images per class, or N(0, 1) noise."""
    images = []
    for x in real.by_class:
        if mode == "real":
            idx = rng.choice(len(x), size=ipc, replace=len(x) < ipc)
            images.append(x[idx].copy())
        elif mode == "noise":
            images.append(rng.standard_normal((ipc, *x.shape[1:])))
        else:
            raise ValueError(f"unknown init mode {mode!r}")
    meta = real.meta
    return SyntheticSet.from_array(
        np.stack(images), meta.mean if meta else (), meta.std if meta else ()
    )


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))


def _check_batch(x: Tensor, name: str) -> None:
    if x.ndim != 4 or x.shape[0] < 1:
        raise ValueError(f"{name} batch must be a non-empty N x C x H x W array, got {x.shape}")


def mean_features(p: NetworkParams, x, chunk: int = 256) -> Tensor:
    """Average feature vector of a batch; chunked when no graph is needed."""
    x = _as_tensor(x)
    if x.requires_grad or x.shape[0] <= chunk:
        return features(p, x).mean(axis=0)
    total = np.zeros(p.feature_dim)
    with no_grad():
        for i in range(0, x.shape[0], chunk):
            total += features(p, x.data[i:i + chunk]).data.sum(axis=0)
    return Tensor._wrap(total / x.shape[0])


def dm_distance(p: NetworkParams, real, syn) -> Tensor:
    """Squared Euclidean distance between mean features of two batches."""
    real, syn = _as_tensor(real), _as_tensor(syn)
    _check_batch(real, "real")
    _check_batch(syn, "synthetic")
    diff = mean_features(p, real) - mean_features(p, syn)
    return (diff * diff).sum()


def _label_array(labels, n: int) -> np.ndarray:
    if np.isscalar(labels):
        return np.full(n, int(labels), dtype=np.int64)
    return np.asarray(labels, dtype=np.int64)


def _rows(g: Tensor, is_head: bool) -> Tensor:
    # conv filters: one row per output channel; head [D, K]: one row per class
    return g.T if is_head else g.reshape(g.shape[0], -1)


def weight_gradients(p: NetworkParams, x, labels, create_graph: bool = False) -> list[Tensor]:
    """d(cross-entropy)/d(weight) for every conv filter bank and the head."""
    weights = [*p.conv_w, p.head_w]
    saved = [w.requires_grad for w in weights]
    for w in weights:
        w.requires_grad = True
    try:
        x = _as_tensor(x)
        loss = cross_entropy(logits(p, x), _label_array(labels, x.shape[0]))
        return grad(loss, weights, create_graph=create_graph)
    finally:
        for w, flag in zip(weights, saved):
            w.requires_grad = flag


def dc_distance(p: NetworkParams, real, syn, real_labels=0, syn_labels=None) -> Tensor:
    """Gradient-matching distance between a real and a synthetic batch.

    Every weight gradient is split into rows (one per conv output channel, one
    per class for the head); the distance is the sum over rows of
    ``1 - cos(g_real_row, g_syn_row)``.  Biases are not matched.  A row whose
    gradient is identically zero contributes 0 and is reported in the log.
    The result is differentiable with respect to the synthetic pixels.
    """
    real, syn = _as_tensor(real), _as_tensor(syn)
    _check_batch(real, "real")
    _check_batch(syn, "synthetic")
    syn_labels = real_labels if syn_labels is None else syn_labels
    g_real = weight_gradients(p, real, real_labels)
    g_syn = weight_gradients(p, syn, syn_labels, create_graph=True)
    total = None
    head = len(g_real) - 1
    for i, (gr, gs) in enumerate(zip(g_real, g_syn)):
        r = _rows(gr, i == head).data
        s = _rows(gs, i == head)
        nr = np.sqrt((r * r).sum(axis=1))
        ss = (s * s).sum(axis=1)
        zero = (nr == 0.0) | (ss.data == 0.0)
        if zero.any():
            log.warning("gradient matching: %d zero-norm rows in group %d contribute 0", zero.sum(), i)
        ns = (ss + zero.astype(np.float64)).sqrt()
        cos = (s * r).sum(axis=1) / (ns * np.where(zero, 1.0, nr))
        term = ((1.0 - cos) * (~zero).astype(np.float64)).sum()
        total = term if total is None else total + term
    return total


def fyi_augment(syn, transform: Callable = hflip) -> Tensor:
    """Concatenate a synthetic batch with its mirror images (2M images)."""
    syn = _as_tensor(syn)
    return batch_concat(syn, transform(syn))


def _matching_input(syn: Tensor, use_fyi: bool, variant: str, aug: AugSpec | None) -> Tensor:
    x = fyi_augment(syn, variant_transform(variant)) if use_fyi else syn
    return apply_aug(aug, x) if aug is not None else x


def _sgd_update(syn: Tensor, velocity: np.ndarray | None, lr: float, momentum: float) -> None:
    g = syn.grad if syn.grad is not None else np.zeros(syn.shape)
    if velocity is not None:
        velocity *= momentum
        velocity += g
        g = velocity
    syn.data -= lr * g
    syn.grad = None


def distill_step(
    cfg: DistillConfig,
    p: NetworkParams,
    real_c,
    syn_c: Tensor,
    label: int = 0,
    use_fyi: bool | None = None,
    method: str | None = None,
    velocity: np.ndarray | None = None,
    aug: AugSpec | None = None,
) -> float:
    """One pixel update of a single class; returns the loss before the update.

    ``syn_c`` is modified in place.  ``velocity`` is the class's momentum
    buffer (updated in place); without it the step is plain gradient descent.
    ``aug`` is applied to both the real batch and the synthetic batch.
    """
    use_fyi = cfg.fyi if use_fyi is None else use_fyi
    method = cfg.method if method is None else method
    real = _as_tensor(real_c)
    if aug is not None:
        with no_grad():
            real = apply_aug(aug, real)
    syn_c.grad = None
    x = _matching_input(syn_c, use_fyi, cfg.fyi_variant, aug)
    if method == "DM":
        loss = dm_distance(p, real, x)
    elif method == "DC":
        loss = dc_distance(p, real, x, label)
    else:
        raise ValueError(f"unknown method {method!r}")
    value = loss.item()
    if not np.isfinite(value):
        raise DistillationError(f"non-finite {method} loss {value} for class {label}")
    backward(loss)
    _sgd_update(syn_c, velocity, cfg.lr_syn, cfg.momentum_syn)
    return value


@dataclass
class DistillLog:
    losses: list[float] = field(default_factory=list)
    class_losses: list[list[float]] = field(default_factory=list)
    scores: list[dict] = field(default_factory=list)

    def final_loss(self, window: int | None = None) -> float:
        """Mean total loss over the last ``window`` iterations (default: last 5%)."""
        if not self.losses:
            return float("nan")
        window = window or max(1, len(self.losses) // 20)
        return float(np.mean(self.losses[-window:]))


def _sample_real(real: RealSet, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    out = []
    for x in real.by_class:
        n = len(x)
        idx = rng.choice(n, size=min(batch, n), replace=False)
        out.append(x[np.sort(idx)])
    return out


def _dm_iteration(cfg, p, reals, syn, specs):
    """DM losses of all classes from one synthetic forward pass."""
    targets = []
    for c, xr in enumerate(reals):
        with no_grad():
            r = apply_aug(specs[c], xr) if specs[c] is not None else Tensor._wrap(xr)
        targets.append(mean_features(p, r))
    inputs = [_matching_input(s, cfg.fyi, cfg.fyi_variant, specs[c]) for c, s in enumerate(syn.images)]
    feats = features(p, concat(inputs, axis=0))
    losses, start = [], 0
    for c, x in enumerate(inputs):
        m = narrow(feats, 0, start, start + x.shape[0]).mean(axis=0)
        start += x.shape[0]
        diff = targets[c] - m
        losses.append((diff * diff).sum())
    return losses


def distill(
    cfg: DistillConfig,
    real: RealSet,
    init: SyntheticSet | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[SyntheticSet, DistillLog]:
    """Optimise a synthetic set against ``real`` for ``cfg.iterations`` steps.

    Each iteration samples fresh network weights, a real batch per class and
    (with ``cfg.dsa``) one shared augmentation per class, then takes one
    momentum-SGD step on every class's pixels.  Classes are processed in
    index order and every random draw comes from seeded streams, so equal
    configs give bitwise-equal results.
    """
    cfg.validate()
    data_rng = make_rng(cfg.data_seed)
    theta_rng = make_rng(cfg.theta_seed)
    aug_rng = make_rng(cfg.aug_seed)
    syn = init if init is not None else init_synthetic(real, cfg.ipc, data_rng, cfg.init)
    shape = real.image_shape
    velocities = [np.zeros(t.shape) for t in syn.images]
    dlog = DistillLog()
    monitor = _ScoreMonitor(cfg, shape, real.classes) if cfg.score_every else None
    for it in range(cfg.iterations):
        if monitor and it % cfg.score_every == 0:
            dlog.scores.append(monitor(it, syn))
        p = init_params(theta_rng, shape, real.classes, cfg.blocks, cfg.width, cfg.instance_norm)
        reals = _sample_real(real, cfg.batch_real, data_rng)
        specs = [sample_aug(aug_rng, cfg.distill_palette, shape) if cfg.dsa else None for _ in reals]
        if cfg.method == "DM":
            losses = _dm_iteration(cfg, p, reals, syn, specs)
        else:
            losses = []
            for c, xr in enumerate(reals):
                with no_grad():
                    r = apply_aug(specs[c], xr) if specs[c] is not None else Tensor._wrap(xr)
                x = _matching_input(syn.images[c], cfg.fyi, cfg.fyi_variant, specs[c])
                losses.append(dc_distance(p, r, x, c))
        values = [l.item() for l in losses]
        total = float(sum(values))
        if not np.isfinite(total):
            raise DistillationError(f"non-finite {cfg.method} loss {total} at iteration {it}")
        objective = losses[0]
        for l in losses[1:]:
            objective = objective + l
        for t in syn.images:
            t.grad = None
        backward(objective)
        for t, v in zip(syn.images, velocities):
            _sgd_update(t, v, cfg.lr_syn, cfg.momentum_syn)
        dlog.losses.append(total)
        dlog.class_losses.append(values)
        if progress is not None:
            progress(it, total)
    if monitor:
        dlog.scores.append(monitor(cfg.iterations, syn))
    return syn, dlog


class _ScoreMonitor:
    """Scores a synthetic set against a fixed pool of random networks."""

    def __init__(self, cfg: DistillConfig, shape, classes: int):
        rng = make_rng(cfg.theta_seed + 0x5C0E)
        self.thetas = [
            init_params(rng, shape, classes, cfg.blocks, cfg.width, cfg.instance_norm)
            for _ in range(cfg.theta_samples)
        ]
        self.cfg = cfg

    def __call__(self, iteration: int, syn: SyntheticSet) -> dict:
        from .diagnostics import flip_feature_distance, synthetic_score

        metric = self.cfg.method
        stored = synthetic_score(syn, self.thetas, metric=metric)
        augmented = synthetic_score(syn, self.thetas, metric=metric, augmented=True)
        x, _ = syn.as_batch()
        dist = float(np.median([flip_feature_distance(p, x) for p in self.thetas]))
        return {
            "iteration": iteration,
            "score_stored": stored,
            "score_augmented": augmented,
            "flip_feature_distance": dist,
        }
