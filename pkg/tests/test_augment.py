import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flipdistill.augment import (
    PALETTE,
    AugSpec,
    apply_aug,
    resample_matrix,
    sample_aug,
    variant_transform,
)
from flipdistill.convnet import make_rng
from flipdistill.tensor import Tensor, backward, hflip

from conftest import numeric_grad, rel_err


def _specs(shape=(1, 8, 8), n=40, seed=0, palette=PALETTE):
    rng = make_rng(seed)
    return [sample_aug(rng, palette, shape) for _ in range(n)]


def test_single_op_palette():
    assert all(s.op == "flip" for s in _specs(palette=("flip",)))


def test_same_seed_same_spec():
    assert _specs(seed=4) == _specs(seed=4)
    assert _specs(seed=4) != _specs(seed=5)


def test_empty_or_unknown_palette():
    with pytest.raises(ValueError):
        sample_aug(make_rng(0), ())
    with pytest.raises(ValueError):
        sample_aug(make_rng(0), ("mixup",))


def test_parameter_ranges_over_many_draws():
    specs = _specs((3, 32, 32), n=10_000, seed=1)
    ops = {s.op for s in specs}
    assert ops == set(PALETTE)
    for s in specs:
        assert max(abs(s.shift[0]), abs(s.shift[1])) <= 4
        assert -0.25 <= s.brightness <= 0.25
        assert 0.0 <= s.saturation <= 2.0 and 0.5 <= s.contrast <= 1.5
        assert 0.8 <= s.scale <= 1.2
        assert -15.0 <= s.angle <= 15.0
        if s.op == "cutout":
            assert s.cutout_size == (16, 16)
            assert 0 <= s.cutout_center[0] < 32 and 0 <= s.cutout_center[1] < 32
    flips = [s.flip for s in specs if s.op == "flip"]
    assert 0.4 < np.mean(flips) < 0.6
    shifts = {s.shift for s in specs if s.op == "crop"}
    assert (4, -4) in shifts and (-4, 4) in shifts


def test_flip_spec_is_hflip(rng):
    x = Tensor(rng.standard_normal((2, 1, 4, 5)))
    assert np.array_equal(apply_aug(AugSpec("flip", flip=True), x).data, hflip(x).data)
    assert np.array_equal(apply_aug(AugSpec("flip", flip=False), x).data, x.data)


@pytest.mark.parametrize(
    "spec",
    [
        AugSpec("crop", shift=(0, 0)),
        AugSpec("rotate", angle=0.0),
        AugSpec("scale", scale=1.0),
        AugSpec("color_jitter", brightness=0.0, saturation=1.0, contrast=1.0),
        AugSpec("cutout", cutout_center=(2, 2), cutout_size=(0, 0)),
    ],
)
@pytest.mark.parametrize("channels", [1, 3])
def test_identity_parameters(spec, channels, rng):
    x = rng.standard_normal((2, channels, 8, 8))
    assert np.abs(apply_aug(spec, Tensor(x)).data - x).max() < 1e-12


def test_crop_moves_content_by_shift():
    x = np.zeros((1, 1, 8, 8))
    x[0, 0, 3, 3] = 1.0
    out = apply_aug(AugSpec("crop", shift=(2, -1)), Tensor(x)).data
    assert out[0, 0, 5, 2] == 1.0 and out.sum() == 1.0


def test_cutout_zeroes_a_box():
    out = apply_aug(AugSpec("cutout", cutout_center=(4, 4), cutout_size=(4, 4)), Tensor(np.ones((1, 1, 8, 8)))).data
    assert out[0, 0, 2:6, 2:6].sum() == 0 and out.sum() == 64 - 16


def test_cutout_clips_at_border():
    out = apply_aug(AugSpec("cutout", cutout_center=(0, 7), cutout_size=(4, 4)), Tensor(np.ones((1, 1, 8, 8)))).data
    # rows -2..1 clip to 0..1, columns 5..8 clip to 5..7
    assert out.sum() == 64 - 2 * 3


def test_rotate_quarter_turn_permutes_pixels(rng):
    x = rng.standard_normal((1, 1, 6, 6))
    out = apply_aug(AugSpec("rotate", angle=90.0), Tensor(x)).data
    assert np.allclose(np.sort(out.ravel()), np.sort(x.ravel()), atol=1e-12)


def test_rotation_gradient():
    x0 = np.random.default_rng(0).standard_normal((1, 1, 8, 8))
    m = np.random.default_rng(1).standard_normal((1, 1, 8, 8))
    spec = AugSpec("rotate", angle=10.0)
    x = Tensor(x0, requires_grad=True)
    backward((apply_aug(spec, x) * m).sum())
    num = numeric_grad(lambda v: (apply_aug(spec, Tensor(v)).data * m).sum(), x0)
    assert rel_err(x.grad, num) < 1e-3


@pytest.mark.parametrize("spec", _specs((3, 8, 8), n=20, seed=9))
def test_every_op_differentiable(spec):
    r = np.random.default_rng(0)
    x0, m = r.standard_normal((2, 3, 8, 8)), r.standard_normal((2, 3, 8, 8))
    x = Tensor(x0, requires_grad=True)
    backward((apply_aug(spec, x) * m).sum())
    num = numeric_grad(lambda v: (apply_aug(spec, Tensor(v)).data * m).sum(), x0)
    assert rel_err(x.grad, num) < 1e-4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linear_or_affine(seed):
    r = np.random.default_rng(seed)
    spec = sample_aug(make_rng(seed), PALETTE, (3, 8, 8))
    a, b = r.standard_normal((1, 3, 8, 8)), r.standard_normal((1, 3, 8, 8))
    f = lambda v: apply_aug(spec, Tensor(v)).data  # noqa: E731
    if spec.op == "color_jitter":
        # affine: f(a + b) = f(a) + f(b) - f(0)
        assert np.abs(f(a + b) - (f(a) + f(b) - f(np.zeros_like(a)))).max() < 1e-10
    else:
        assert np.abs(f(a + b) - (f(a) + f(b))).max() < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e6, 1e6))
def test_finite_in_finite_out(seed, scale):
    spec = sample_aug(make_rng(seed), PALETTE, (3, 8, 8))
    x = np.random.default_rng(seed).standard_normal((1, 3, 8, 8)) * scale
    assert np.isfinite(apply_aug(spec, Tensor(x)).data).all()


def test_saturation_zero_makes_grey(rng):
    out = apply_aug(AugSpec("color_jitter", saturation=0.0), Tensor(rng.standard_normal((1, 3, 4, 4)))).data
    assert np.allclose(out[0, 0], out[0, 1]) and np.allclose(out[0, 1], out[0, 2])


def test_grayscale_colour_is_brightness_only(rng):
    x = rng.standard_normal((1, 1, 4, 4))
    out = apply_aug(AugSpec("color_jitter", brightness=0.2, saturation=0.0, contrast=0.5), Tensor(x)).data
    assert np.allclose(out, x + 0.2)


def test_resample_matrix_rows_sum_to_at_most_one():
    m = resample_matrix(8, 8, 0.8, 0.1, -0.1, 0.8, 0.5, -0.5)
    rows = np.asarray(m.sum(axis=1)).ravel()
    assert (rows <= 1 + 1e-12).all() and (rows >= 0).all()


def test_variants(rng):
    x = Tensor(rng.standard_normal((1, 1, 8, 8)))
    assert np.array_equal(variant_transform("hflip")(x).data, x.data[..., ::-1])
    assert np.array_equal(variant_transform("vflip")(x).data, x.data[..., ::-1, :])
    assert variant_transform("rotate15")(x).shape == x.shape
    assert variant_transform("scale1.2")(x).shape == x.shape
    with pytest.raises(ValueError):
        variant_transform("shear")


def test_unknown_op():
    with pytest.raises(ValueError):
        apply_aug(AugSpec("mixup"), Tensor(np.zeros((1, 1, 4, 4))))
