import json
from pathlib import Path

import numpy as np
import pytest

from flipdistill.config import DistillConfig
from flipdistill.convnet import cross_entropy, init_params, logits, make_rng
from flipdistill.dataio import ImageBatch, RealSet, load_dataset
from flipdistill.harness import (
    Manifest,
    TrainingError,
    accuracy,
    baseline_random_real,
    config_seeds,
    evaluate,
    git_blob_hash,
    load_real,
    random_real_subset,
    retrain_eval,
    summarize,
    train_network,
)
from flipdistill.tensor import backward

DATA = Path(__file__).resolve().parents[1] / "data" / "mnist-subset"


def toy_halves(n=20, seed=0, size=8):
    """Class 0 is bright on the left half, class 1 on the right."""
    r = np.random.default_rng(seed)
    x = r.normal(0, 0.1, (n, 1, size, size))
    y = np.arange(n) % 2
    x[y == 0, :, :, : size // 2] += 1.0
    x[y == 1, :, :, size // 2:] += 1.0
    return ImageBatch(x, y)


# -- config -------------------------------------------------------------------------


def test_retraining_defaults():
    cfg = DistillConfig()
    assert (cfg.lr_net, cfg.momentum_net, cfg.weight_decay) == (0.01, 0.9, 5e-4)
    assert cfg.epochs == 300 and cfg.drop_epoch == 150 and cfg.lr_drop_factor == 0.1
    assert cfg.replace(lr_drop_epoch=7).drop_epoch == 7


def test_config_round_trip(tmp_path):
    cfg = DistillConfig(method="DC", fyi=True, ipc=10, distill_palette=("flip", "crop"), notes={"why": "test"})
    cfg.save(tmp_path / "c.json")
    back = DistillConfig.load(tmp_path / "c.json")
    assert back == cfg and back.digest() == cfg.digest()
    assert cfg.replace(ipc=11).digest() != cfg.digest()


@pytest.mark.parametrize(
    "change",
    [
        {"method": "MTT"},
        {"ipc": 0},
        {"iterations": -1},
        {"lr_syn": 0.0},
        {"momentum_net": -0.1},
        {"batch_real": 0},
        {"init": "zeros"},
        {"retrain_palette": ("mixup",)},
    ],
)
def test_config_validation(change):
    with pytest.raises(ValueError):
        DistillConfig(**change).validate()


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        DistillConfig.from_dict({"ipcc": 3})


# -- retraining ----------------------------------------------------------------------


def test_single_full_batch_step_matches_hand_update():
    cfg = DistillConfig(epochs=1, width=4, blocks=2, retrain_aug=False, batch_train=64, lr_net=0.05, weight_decay=0.01)
    data = toy_halves(12)
    trained = train_network(cfg, data, make_rng(3), 2)
    # replay: same generator, so the same initial weights
    p = init_params(make_rng(3), (1, 8, 8), 2, 2, 4).requires_grad_(True)
    backward(cross_entropy(logits(p, data.images), data.labels))
    for before, after in zip(p.parameters(), trained.parameters()):
        g = before.grad if before.grad is not None else 0.0
        want = before.data - 0.05 * (g + 0.01 * before.data)
        assert np.allclose(after.data, want, rtol=1e-9, atol=1e-12)
    assert trained.trained


def test_training_learns_a_separable_toy():
    cfg = DistillConfig(epochs=40, width=8, blocks=2, retrain_aug=False, batch_train=8)
    acc = retrain_eval(cfg, toy_halves(20), toy_halves(40, seed=1), 0)
    assert acc == 1.0


def test_zero_epochs_is_chance_on_mnist():
    _, test, _ = load_dataset("mnist", DATA)
    cfg = DistillConfig(epochs=0, width=16)
    accs = [retrain_eval(cfg, toy_halves(10, size=32), test, s) for s in range(20)]
    assert abs(np.mean(accs) - 0.1) < 0.05


def test_retraining_is_deterministic():
    cfg = DistillConfig(epochs=3, width=4, blocks=2, batch_train=4)
    data, test = toy_halves(10), toy_halves(10, seed=2)
    assert evaluate(cfg, data, test, [5, 6]) == evaluate(cfg, data, test, [5, 6])


def test_non_finite_loss_raises():
    data = toy_halves(4)
    data.images[0, 0, 0, 0] = np.nan
    with pytest.raises(TrainingError):
        train_network(DistillConfig(epochs=1, width=4, blocks=2), data, make_rng(0))


def test_empty_training_set():
    with pytest.raises(ValueError):
        train_network(DistillConfig(), ImageBatch(np.zeros((0, 1, 8, 8)), np.zeros(0, int)), make_rng(0))


def test_synthetic_array_input():
    arr = np.stack([toy_halves(4).images[[0, 2]], toy_halves(4).images[[1, 3]]])  # 2 x 2 x 1 x 8 x 8
    cfg = DistillConfig(epochs=30, width=8, blocks=2, retrain_aug=False)
    assert retrain_eval(cfg, arr, toy_halves(20, seed=4), 1) >= 0.9


@pytest.mark.slow
def test_hundred_real_images_per_class_exceed_ninety_percent():
    real, test = load_real(DistillConfig())
    subset = random_real_subset(real, 100, make_rng(0))
    cfg = DistillConfig(epochs=20, width=32, retrain_aug=False, batch_train=64)
    assert retrain_eval(cfg, subset, test, 0) > 0.9


# -- baseline, summaries, manifest ------------------------------------------------


def test_random_real_subset_shapes_and_determinism():
    r = np.random.default_rng(0)
    real = RealSet([r.standard_normal((5, 1, 4, 4)), r.standard_normal((2, 1, 4, 4))])
    a = random_real_subset(real, 3, make_rng(9))
    b = random_real_subset(real, 3, make_rng(9))
    assert a.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert np.array_equal(a.images, b.images)
    assert all(any(np.array_equal(im, row) for row in real.by_class[0]) for im in a.images[:3])


def test_baseline_is_deterministic():
    real = RealSet.from_batch(toy_halves(20))
    cfg = DistillConfig(ipc=2, epochs=5, width=4, blocks=2)
    test = toy_halves(10, seed=5)
    assert baseline_random_real(cfg, real, test, 3) == baseline_random_real(cfg, real, test, 3)


def test_accuracy_counts_matches():
    p = init_params(0, (1, 8, 8), 2, 2, 4)
    data = toy_halves(6)
    pred = logits(p, data.images).data.argmax(axis=1)
    assert accuracy(p, data) == np.mean(pred == data.labels)


def test_summarize():
    assert summarize([0.5, 0.7]) == pytest.approx((0.6, 0.1))


def test_git_blob_hash_matches_git():
    # `printf hello | git hash-object --stdin`
    assert git_blob_hash(b"hello") == "b6fc4c620b67d95f953a5c1c1230aaab5db5a1b0"


def test_manifest(tmp_path):
    out = tmp_path / "a.bin"
    out.write_bytes(b"abc")
    cfg = DistillConfig(ipc=2)
    path = Manifest("distill", cfg, config_seeds(cfg), [out]).write(tmp_path / "m.json")
    m = json.loads(path.read_text())
    assert m["config_sha256"] == cfg.digest()
    assert m["seeds"]["theta_seed"] == 1 and m["seeds"]["eval_seeds"] == 10
    assert m["outputs"]["a.bin"]["bytes"] == 3
    assert m["outputs"]["a.bin"]["git_blob"] == git_blob_hash(b"abc")
    assert "package_version" in m
