import math

import numpy as np
import pytest

from flipdistill.convnet import (
    cross_entropy,
    default_blocks,
    feature_maps,
    features,
    init_params,
    logits,
    make_rng,
    predict,
)
from flipdistill.tensor import ShapeError, Tensor, backward, log_softmax

from conftest import numeric_grad, rel_err


def small(seed=0, shape=(1, 8, 8), classes=3, blocks=2, width=4, **kw):
    return init_params(seed, shape, classes, blocks=blocks, width=width, **kw)


def test_head_dim_for_32px():
    p = init_params(0, (3, 32, 32), 10, blocks=3)
    assert p.feature_dim == 128 * 4 * 4 == 2048
    assert p.blocks == 3 and p.width == 128
    assert all(w.shape[0] == 128 for w in p.conv_w)


def test_padded_mnist_geometry_matches():
    assert init_params(0, (1, 32, 32), 10).feature_dim == 2048
    assert default_blocks(32) == 3 and default_blocks(64) == 4


def test_same_seed_same_params():
    a, b = init_params(5, (1, 16, 16), 4, blocks=2), init_params(5, (1, 16, 16), 4, blocks=2)
    for x, y in zip(a.parameters(), b.parameters()):
        assert np.array_equal(x.data, y.data)


def test_generator_stream_is_pcg64():
    assert make_rng(3).bit_generator.state["bit_generator"] == "PCG64"
    assert np.array_equal(make_rng(3).random(4), np.random.Generator(np.random.PCG64(3)).random(4))


def test_he_uniform_bounds():
    p = init_params(1, (3, 32, 32), 10)
    assert np.abs(p.conv_w[0].data).max() <= math.sqrt(6 / 27)
    assert np.abs(p.conv_w[1].data).max() <= math.sqrt(6 / (128 * 9))
    assert not any(b.data.any() for b in p.conv_b)


def test_indivisible_input_rejected():
    with pytest.raises(ShapeError):
        init_params(0, (1, 28, 28), 10, blocks=3)
    with pytest.raises(ValueError):
        init_params(0, (1, 32, 32), 10, blocks=0)


def test_zero_input_gives_zero_features():
    p = small()
    assert not features(p, np.zeros((2, 1, 8, 8))).data.any()


def test_feature_shape():
    p = init_params(0, (1, 32, 32), 10)
    assert features(p, np.zeros((2, 1, 32, 32))).shape == (2, 2048)


def test_input_shape_checked():
    with pytest.raises(ShapeError):
        features(small(), np.zeros((1, 1, 16, 16)))


@pytest.mark.parametrize("seed", range(20))
def test_feature_pixel_gradient(seed):
    p = small(seed)
    x0 = np.random.default_rng(seed).standard_normal((2, 1, 8, 8))
    x = Tensor(x0, requires_grad=True)
    backward(features(p, x).sum())
    num = numeric_grad(lambda v: features(p, v).sum().item(), x0)
    assert rel_err(x.grad, num) < 1e-4


def test_instance_norm_switch_changes_output():
    x = np.random.default_rng(0).standard_normal((2, 1, 8, 8))
    a = features(small(1), x).data
    b = features(small(1, instance_norm=True), x).data
    assert a.shape == b.shape and not np.allclose(a, b)


@pytest.mark.parametrize("seed", range(5))
def test_instance_norm_gradient(seed):
    p = small(seed, instance_norm=True)
    x0 = np.random.default_rng(seed).standard_normal((1, 1, 8, 8))
    x = Tensor(x0, requires_grad=True)
    backward(features(p, x).sum())
    num = numeric_grad(lambda v: features(p, v).sum().item(), x0)
    assert rel_err(x.grad, num) < 1e-4


def test_zero_head_gives_bias_rows():
    p = small()
    p.head_w = Tensor(np.zeros_like(p.head_w.data))
    p.head_b = Tensor(np.array([0.5, -1.0, 2.0]))
    out = logits(p, np.random.default_rng(0).standard_normal((4, 1, 8, 8))).data
    assert out.shape == (4, 3)
    assert np.array_equal(out, np.tile([0.5, -1.0, 2.0], (4, 1)))


def test_feature_maps_shapes():
    act, pooled = feature_maps(small(), np.zeros((3, 1, 8, 8)))
    assert act.shape == (3, 4, 4, 4) and pooled.shape == (3, 4, 2, 2)


def test_cross_entropy_uniform_is_log_k():
    assert math.isclose(cross_entropy(Tensor(np.zeros((5, 10))), np.arange(5)).item(), math.log(10), rel_tol=1e-14)


def test_cross_entropy_confident_goes_to_zero():
    z = np.zeros((2, 4))
    z[0, 1] = z[1, 3] = 1e3
    assert cross_entropy(Tensor(z), [1, 3]).item() < 1e-12


def test_cross_entropy_label_range():
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [-1, 0])


@pytest.mark.parametrize("seed", range(20))
def test_cross_entropy_gradient(seed):
    r = np.random.default_rng(seed)
    z0 = r.standard_normal((4, 5)) * 2
    y = r.integers(0, 5, 4)
    z = Tensor(z0, requires_grad=True)
    loss = cross_entropy(z, y)
    assert loss.item() >= 0
    backward(loss)
    num = numeric_grad(lambda v: cross_entropy(Tensor(v), y).item(), z0)
    assert rel_err(z.grad, num) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_end_to_end_pixel_gradient(seed):
    p = small(seed)
    r = np.random.default_rng(seed)
    x0 = r.standard_normal((2, 1, 8, 8))
    y = r.integers(0, 3, 2)
    x = Tensor(x0, requires_grad=True)
    backward(cross_entropy(logits(p, x), y))
    num = numeric_grad(lambda v: cross_entropy(logits(p, v), y).item(), x0)
    assert rel_err(x.grad, num) < 1e-4


def test_softmax_rows_sum_to_one():
    z = np.random.default_rng(0).standard_normal((6, 10)) * 20
    assert np.abs(np.exp(log_softmax(Tensor(z)).data).sum(axis=1) - 1).max() < 1e-12


def test_predict_chunks_consistently():
    p = small(2)
    x = np.random.default_rng(1).standard_normal((7, 1, 8, 8))
    assert np.array_equal(predict(p, x, batch=3), logits(p, x).data.argmax(axis=1))
    assert predict(p, x[:0]).shape == (0,)


def test_copy_is_independent():
    p = small()
    q = p.copy()
    q.conv_w[0].data += 1.0
    assert not np.array_equal(p.conv_w[0].data, q.conv_w[0].data)
