"""Flip diagnostics: unequalness score, feature distances, CAM histograms.

The unequalness score of a set R is the matching distance between R and its
horizontal mirror.  It is exactly zero for a flip-closed multiset; here the
mean features are summed after sorting each feature column, so the two
arguments of a flip-closed set reduce in the same order and the score comes
out as a hard 0.0 instead of rounding noise.

All functions take images in the network's (normalised) input space and do
not build a differentiation graph, except the DC metric, which needs one
internally.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .convnet import NetworkParams, feature_maps, features, init_params, make_rng
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

TOP_FRACTION = 0.10


def _images(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"expected an N x C x H x W set, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("image set is empty")
    return arr


def _mirror(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x[..., ::-1])


def feature_matrix(p: NetworkParams, x, chunk: int = 250) -> np.ndarray:
    """Per-image features as a plain array, evaluated in chunks."""
    x = _images(x)
    with no_grad():
        return np.concatenate([features(p, x[i:i + chunk]).data for i in range(0, len(x), chunk)])


def _mean_sorted(f: np.ndarray) -> np.ndarray:
    # order-independent reduction: permuted rows give bitwise-equal means
    return np.sort(f, axis=0).sum(axis=0) / f.shape[0]


def dm_score_from_features(f: np.ndarray, f_flip: np.ndarray) -> float:
    d = _mean_sorted(f) - _mean_sorted(f_flip)
    return float(d @ d)


def unequalness_score(p: NetworkParams, images, metric: str = "DM", labels=None, transform=None) -> float:
    """Distance between a set and its mirrored copy under one network.

    ``metric`` selects the feature-mean distance ("DM") or the gradient
    matching distance ("DC", which needs class ``labels``; a single int is
    broadcast).  ``transform`` replaces the mirror, for the variant study.
    """
    x = _images(images)
    if transform is None:
        xf = _mirror(x)
    else:
        with no_grad():
            xf = transform(Tensor._wrap(x)).data
    if metric == "DM":
        return dm_score_from_features(feature_matrix(p, x), feature_matrix(p, xf))
    if metric == "DC":
        from .objectives import dc_distance

        labels = 0 if labels is None else labels
        return float(dc_distance(p, x, xf, labels, labels).item())
    raise ValueError(f"unknown metric {metric!r}")


def theta_pool(n: int, input_shape, classes: int, seed: int = 0, **net_kwargs) -> list[NetworkParams]:
    """``n`` randomly initialised networks from one seeded stream."""
    rng = make_rng(seed)
    return [init_params(rng, input_shape, classes, **net_kwargs) for _ in range(n)]


def median_score(thetas: Sequence[NetworkParams], images, metric: str = "DM", labels=None, transform=None) -> float:
    """Median of :func:`unequalness_score` over a pool of networks."""
    return float(np.median([unequalness_score(p, images, metric, labels, transform) for p in thetas]))


def synthetic_score(syn, thetas: Sequence[NetworkParams], metric: str = "DM", augmented: bool = False) -> float:
    """Class-averaged score of a synthetic set, median over ``thetas``.

    With ``augmented`` the score is taken on each class's images joined with
    their mirrors (the set the objective actually sees under flip
    augmentation), which is zero by construction.
    """
    arrays = syn.to_array() if hasattr(syn, "to_array") else np.asarray(syn)
    per_theta = []
    for p in thetas:
        vals = []
        for c, s in enumerate(arrays):
            r = np.concatenate([s, _mirror(s)]) if augmented else s
            vals.append(unequalness_score(p, r, metric, labels=c))
        per_theta.append(np.mean(vals))
    return float(np.median(per_theta))


def score_curve(
    images, sizes: Iterable[int], thetas: Sequence[NetworkParams], rng: np.random.Generator | None = None
) -> list[tuple[int, float]]:
    """Median DM score of nested random subsets of ``images``.

    Subsets are prefixes of one random permutation, so the N=10 subset
    contains the N=1 subset and so on.  Features of the largest subset are
    computed once per network and reused for the smaller ones.
    """
    x = _images(images)
    sizes = sorted(int(n) for n in sizes)
    if not sizes or sizes[0] < 1 or sizes[-1] > len(x):
        raise ValueError(f"subset sizes must lie in [1, {len(x)}], got {sizes}")
    order = (rng or make_rng(0)).permutation(len(x))[: sizes[-1]]
    sub = x[order]
    table = np.zeros((len(thetas), len(sizes)))
    for i, p in enumerate(thetas):
        f, ff = feature_matrix(p, sub), feature_matrix(p, _mirror(sub))
        for j, n in enumerate(sizes):
            table[i, j] = dm_score_from_features(f[:n], ff[:n])
    return [(n, float(v)) for n, v in zip(sizes, np.median(table, axis=0))]


def score_trace(run_log, key: str = "score_stored") -> list[tuple[int, float]]:
    """(iteration, score) pairs from a distillation log; empty log gives []."""
    entries = getattr(run_log, "scores", run_log) or []
    return [(int(e["iteration"]), float(e[key])) for e in entries]


def flip_feature_distance(p: NetworkParams, images) -> float:
    """Mean over images of the feature-space distance to the mirrored image."""
    x = _images(images)
    d = feature_matrix(p, x) - feature_matrix(p, _mirror(x))
    return float(np.sqrt((d * d).sum(axis=1)).mean())


def pixel_symmetry(images) -> float:
    """Mean absolute difference between each image and its mirror (0 = symmetric)."""
    x = _images(images)
    return float(np.abs(x - x[..., ::-1]).mean(axis=(1, 2, 3)).mean())


def class_activation_maps(p: NetworkParams, images, labels) -> np.ndarray:
    """CAM of each image for its label, on the last convolution's grid.

    The last block's activation A (before pooling, H' x W') enters the head
    through a 2x2 average pool, so logit_k = b_k + sum over (y, x) of
    sum_ch A[ch, y, x] * W[ch, y//2, x//2, k] / 4.  The summand is the map
    returned here; it adds up exactly to the logit minus its bias.
    """
    x = _images(images)
    labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (len(x),))
    with no_grad():
        act = np.concatenate([feature_maps(p, x[i:i + 250])[0].data for i in range(0, len(x), 250)])
    n, width, hh, ww = act.shape
    head = p.head_w.data.reshape(width, hh // 2, ww // 2, p.classes)
    head = head.repeat(2, axis=1).repeat(2, axis=2) / 4.0  # width x H' x W' x K
    w_true = np.moveaxis(head[..., labels], -1, 0)  # N x width x H' x W'
    return (act * w_true).sum(axis=1)


def attention_symmetry(p: NetworkParams, images, labels, fraction: float = TOP_FRACTION) -> np.ndarray:
    """Histogram over the H' x W' grid of each image's top-``fraction`` CAM positions.

    The threshold is per image: the ceil(fraction * H' * W') largest entries
    are counted (ties broken by raster order).  Images whose map is constant,
    such as an all-zero activation, carry no location and are skipped.
    """
    if not p.trained:
        log.warning("attention histogram requested for a network whose head was never trained")
    cams = class_activation_maps(p, images, labels)
    n, hh, ww = cams.shape
    k = math.ceil(fraction * hh * ww)
    hist = np.zeros(hh * ww, dtype=np.int64)
    flat = cams.reshape(n, -1)
    for row in flat:
        if row.max() == row.min():
            continue
        top = np.argsort(-row, kind="stable")[:k]
        hist[top] += 1
    return hist.reshape(hh, ww)


# -- emitters ----------------------------------------------------------------


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_grid_csv(path, grid: np.ndarray) -> None:
    """A 2-D histogram as CSV with columns row, col, count."""
    rows = [(y, x, int(grid[y, x])) for y in range(grid.shape[0]) for x in range(grid.shape[1])]
    write_csv(path, ("row", "col", "count"), rows)


def write_heatmap(path, grid: np.ndarray, upscale: int = 8) -> None:
    """Histogram as a grayscale PGM, scaled so the largest bin is white."""
    from .dataio import write_pgm

    g = np.asarray(grid, dtype=np.float64)
    top = g.max()
    img = np.zeros(g.shape) if top <= 0 else g / top
    img = np.kron(img, np.ones((upscale, upscale)))
    write_pgm(path, img)


__all__ = [
    "unequalness_score",
    "median_score",
    "synthetic_score",
    "score_curve",
    "score_trace",
    "flip_feature_distance",
    "pixel_symmetry",
    "class_activation_maps",
    "attention_symmetry",
    "theta_pool",
    "write_csv",
    "write_grid_csv",
    "write_heatmap",
]
