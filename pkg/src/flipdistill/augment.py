"""Differentiable augmentations with shared randomness.

One :class:`AugSpec` is drawn per distillation step and applied unchanged to
the real and the synthetic batch, so the matching objective compares
identically transformed images.  Every operation is linear in the pixels
(brightness is affine): geometric ops are fixed bilinear resampling matrices
with zero fill, cutout is a mask.

Parameter ranges
    crop        integer shift up to floor(H/8) in each axis, zero fill
    color       brightness delta in [-0.25, 0.25]; RGB also saturation
                in [0, 2] and contrast in [0.5, 1.5]
    cutout      H/2 x W/2 box, centre uniform over the image, clipped
    flip        fair coin for a horizontal flip
    scale       isotropic factor in [0.8, 1.2] about the image centre
    rotate      angle in [-15, 15] degrees about the image centre
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .tensor import Tensor, hflip, spatial_map

PALETTE = ("crop", "color_jitter", "cutout", "flip", "scale", "rotate")
# Digits change meaning when mirrored, so the flip op is left out for them.
DIGIT_PALETTE = ("crop", "color_jitter", "cutout", "scale", "rotate")

CROP_FRACTION = 0.125
BRIGHTNESS = 0.25
SATURATION = (0.0, 2.0)
CONTRAST = (0.5, 1.5)
CUTOUT_FRACTION = 0.5
SCALE = (0.8, 1.2)
ROTATE_DEGREES = 15.0


@dataclass(frozen=True)
class AugSpec:
    op: str
    shift: tuple[int, int] = (0, 0)
    brightness: float = 0.0
    saturation: float = 1.0
    contrast: float = 1.0
    cutout_center: tuple[int, int] = (0, 0)
    cutout_size: tuple[int, int] = (0, 0)
    flip: bool = False
    scale: float = 1.0
    angle: float = 0.0


def sample_aug(rng: np.random.Generator, palette=PALETTE, image_shape=(1, 32, 32)) -> AugSpec:
    """Pick one operation uniformly from ``palette`` and draw its parameters."""
    palette = tuple(palette)
    if not palette:
        raise ValueError("augmentation palette is empty")
    unknown = set(palette) - set(PALETTE)
    if unknown:
        raise ValueError(f"unknown augmentation(s): {sorted(unknown)}")
    _, h, w = image_shape
    op = palette[int(rng.integers(len(palette)))]
    if op == "crop":
        my, mx = int(h * CROP_FRACTION), int(w * CROP_FRACTION)
        return AugSpec(op, shift=(int(rng.integers(-my, my + 1)), int(rng.integers(-mx, mx + 1))))
    if op == "color_jitter":
        return AugSpec(
            op,
            brightness=float(rng.uniform(-BRIGHTNESS, BRIGHTNESS)),
            saturation=float(rng.uniform(*SATURATION)),
            contrast=float(rng.uniform(*CONTRAST)),
        )
    if op == "cutout":
        return AugSpec(
            op,
            cutout_center=(int(rng.integers(h)), int(rng.integers(w))),
            cutout_size=(int(h * CUTOUT_FRACTION), int(w * CUTOUT_FRACTION)),
        )
    if op == "flip":
        return AugSpec(op, flip=bool(rng.integers(2)))
    if op == "scale":
        return AugSpec(op, scale=float(rng.uniform(*SCALE)))
    return AugSpec(op, angle=float(rng.uniform(-ROTATE_DEGREES, ROTATE_DEGREES)))


@lru_cache(maxsize=512)
def resample_matrix(h: int, w: int, a00: float, a01: float, a10: float, a11: float,
                    ty: float = 0.0, tx: float = 0.0) -> sp.csr_matrix:
    """Bilinear sampling matrix with zero fill.

    Output pixel p (row, col) reads the input at ``A @ (p - c) + c + t``
    where c is the image centre; returns an (h*w, h*w) sparse matrix.
    """
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = yy.ravel() - cy, xx.ravel() - cx
    sy = a00 * dy + a01 * dx + cy + ty
    sx = a10 * dy + a11 * dx + cx + tx
    y0, x0 = np.floor(sy), np.floor(sx)
    fy, fx = sy - y0, sx - x0
    rows, cols, vals = [], [], []
    out_idx = np.arange(h * w)
    for oy, wy in ((0, 1.0 - fy), (1, fy)):
        for ox, wx in ((0, 1.0 - fx), (1, fx)):
            yi, xi = (y0 + oy).astype(np.int64), (x0 + ox).astype(np.int64)
            weight = wy * wx
            ok = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w) & (weight != 0.0)
            rows.append(out_idx[ok])
            cols.append(yi[ok] * w + xi[ok])
            vals.append(weight[ok])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(h * w, h * w)
    )


def _per_image_mean(x: Tensor, axes) -> Tensor:
    return x.mean(axis=axes, keepdims=True).expand(x.shape)


def apply_aug(spec: AugSpec, x: Tensor) -> Tensor:
    """Apply ``spec`` to an N x C x H x W batch; differentiable in ``x``."""
    if not isinstance(x, Tensor):
        x = Tensor._wrap(np.asarray(x, dtype=np.float64))
    _, c, h, w = x.shape
    op = spec.op
    if op == "flip":
        return hflip(x) if spec.flip else x
    if op == "crop":
        dy, dx = spec.shift
        if dy == 0 and dx == 0:
            return x
        return spatial_map(x, resample_matrix(h, w, 1.0, 0.0, 0.0, 1.0, float(-dy), float(-dx)))
    if op == "scale":
        s = spec.scale
        return spatial_map(x, resample_matrix(h, w, 1.0 / s, 0.0, 0.0, 1.0 / s))
    if op == "rotate":
        t = np.deg2rad(spec.angle)
        cos, sin = float(np.cos(t)), float(np.sin(t))
        # inverse rotation: where each output pixel comes from
        return spatial_map(x, resample_matrix(h, w, cos, -sin, sin, cos))
    if op == "cutout":
        mask = np.ones((1, 1, h, w))
        (cy, cx), (bh, bw) = spec.cutout_center, spec.cutout_size
        y0, x0 = cy - bh // 2, cx - bw // 2
        mask[..., max(y0, 0):y0 + bh, max(x0, 0):x0 + bw] = 0.0
        return x * np.broadcast_to(mask, x.shape)
    if op == "color_jitter":
        out = x + spec.brightness
        if c > 1:
            m = _per_image_mean(out, 1)
            out = (out - m) * spec.saturation + m
            m = _per_image_mean(out, (1, 2, 3))
            out = (out - m) * spec.contrast + m
        return out
    raise ValueError(f"unknown augmentation {op!r}")


def vflip(x: Tensor) -> Tensor:
    return x.flip(2)


_VARIANTS = {
    "hflip": hflip,
    "vflip": vflip,
    "rotate15": lambda x: apply_aug(AugSpec("rotate", angle=15.0), x),
    "scale1.2": lambda x: apply_aug(AugSpec("scale", scale=1.2), x),
}


def variant_transform(name: str):
    """Transform used in place of the horizontal flip for ablation variants."""
    try:
        return _VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(_VARIANTS)}") from None


__all__ = ["AugSpec", "PALETTE", "DIGIT_PALETTE", "sample_aug", "apply_aug", "resample_matrix", "variant_transform"]
