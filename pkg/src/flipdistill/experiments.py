"""Desk-scale experiments on the bundled MNIST subset, with an on-disk cache.

The paired runs distil the same data with and without flip-concatenation
from identical seeds, so the two arms see the same networks, real batches
and augmentations; only the objective differs.  Results are cached under a
key made of the run's config digest and a fingerprint of the package code
(docstrings and comments excluded), so editing prose does not invalidate
hours of computation but editing arithmetic does.
"""

from __future__ import annotations

import ast
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .augment import DIGIT_PALETTE
from .config import DistillConfig
from .dataio import load_synthetic, save_synthetic
from .diagnostics import pixel_symmetry, synthetic_score, theta_pool
from .harness import PACKAGE_ROOT, baseline_random_real, load_real, retrain_eval, run_distill

log = logging.getLogger(__name__)

DEFAULT_CACHE = PACKAGE_ROOT / ".experiment_cache"
FINGERPRINT_MODULES = (
    "tensor", "convnet", "augment", "objectives", "dataio", "config", "harness", "diagnostics",
)
SCORE_THETA_SEED = 7007
PAIR_SEEDS = 5

# Desk-scale settings shared by the acceptance experiments.
DESK = DistillConfig(
    dataset="mnist",
    data_dir="data/mnist-subset",
    method="DM",
    ipc=1,
    iterations=2000,
    lr_syn=0.1,
    momentum_syn=0.5,
    batch_real=4,
    dsa=True,
    distill_palette=DIGIT_PALETTE,
    retrain_palette=DIGIT_PALETTE,
    epochs=300,
    eval_seeds=10,
)


def _strip_docstrings(tree: ast.AST) -> ast.AST:
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if isinstance(body, list) and body and isinstance(body[0], ast.Expr) \
                and isinstance(getattr(body[0], "value", None), ast.Constant) \
                and isinstance(body[0].value.value, str):
            node.body = body[1:] or [ast.Pass()]
    return ast.fix_missing_locations(tree)


def code_fingerprint(modules=FINGERPRINT_MODULES) -> str:
    """Hash of the package's executable code, blind to comments and docstrings."""
    h = hashlib.sha256()
    src = Path(__file__).resolve().parent
    for name in modules:
        tree = _strip_docstrings(ast.parse((src / f"{name}.py").read_text()))
        h.update(name.encode() + b"\0" + ast.dump(tree).encode())
    return h.hexdigest()[:16]


class Cache:
    def __init__(self, root=None):
        self.root = Path(root or DEFAULT_CACHE)
        self.code = code_fingerprint()

    def key(self, kind: str, cfg: DistillConfig, extra: str = "") -> Path:
        digest = hashlib.sha256(f"{kind}|{cfg.digest()}|{extra}|{self.code}".encode()).hexdigest()[:20]
        return self.root / f"{kind}-{digest}"

    def get_json(self, path: Path):
        f = path.with_suffix(".json")
        return json.loads(f.read_text()) if f.exists() else None

    def put_json(self, path: Path, value) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(value, indent=1, sort_keys=True))
        tmp.replace(path.with_suffix(".json"))


def pair_config(seed_index: int, fyi: bool, base: DistillConfig = DESK, **changes) -> DistillConfig:
    s = 100 * seed_index
    return base.replace(fyi=fyi, data_seed=s, theta_seed=s + 1, aug_seed=s + 2, **changes)


def _distill_key(cache: Cache, cfg: DistillConfig) -> Path:
    return cache.key("distill", cfg, f"score-thetas={SCORE_THETA_SEED}")


def distill_cached(cfg: DistillConfig, cache: Cache, real=None) -> dict:
    """Run (or fetch) one distillation; returns a summary dict with the DFRG path."""
    key = _distill_key(cache, cfg)
    hit = cache.get_json(key)
    if hit is not None:
        # stored relative to the cache so a moved checkout keeps its results
        hit["dfrg"] = str(cache.root / Path(hit["dfrg"]).name)
        if Path(hit["dfrg"]).exists():
            return hit
    log.info("distilling %s (fyi=%s, seeds %d/%d/%d)", cfg.dataset, cfg.fyi, cfg.data_seed, cfg.theta_seed, cfg.aug_seed)
    syn, dlog = run_distill(cfg, real)
    dfrg = key.with_suffix(".dfrg")
    dfrg.parent.mkdir(parents=True, exist_ok=True)
    save_synthetic(dfrg, syn.to_array(), syn.mean, syn.std)
    arr = syn.to_array()
    thetas = theta_pool(10, arr.shape[2:], arr.shape[0], SCORE_THETA_SEED, width=cfg.width)
    summary = {
        "config": cfg.to_dict(),
        "dfrg": dfrg.name,
        "final_loss": dlog.final_loss(),
        "losses": dlog.losses,
        "score_stored": synthetic_score(arr, thetas),
        "score_augmented": synthetic_score(arr, thetas, augmented=True),
        "pixel_symmetry": pixel_symmetry(arr.reshape(-1, *arr.shape[2:])),
    }
    cache.put_json(key, summary)
    return {**summary, "dfrg": str(dfrg)}


def retrain_cached(cfg: DistillConfig, dfrg, seed: int, cache: Cache, test=None) -> float:
    data = Path(dfrg).read_bytes()
    key = cache.key("eval", cfg, f"{hashlib.sha256(data).hexdigest()}|{seed}")
    hit = cache.get_json(key)
    if hit is not None:
        return hit["accuracy"]
    if test is None:
        _, test = load_real(cfg)
    acc = retrain_eval(cfg, load_synthetic(dfrg), test, seed)
    cache.put_json(key, {"accuracy": acc, "seed": seed})
    return acc


def baseline_cached(cfg: DistillConfig, seed: int, cache: Cache, real=None, test=None) -> float:
    key = cache.key("baseline", cfg, str(seed))
    hit = cache.get_json(key)
    if hit is not None:
        return hit["accuracy"]
    if real is None or test is None:
        real, test = load_real(cfg)
    acc = baseline_random_real(cfg, real, test, seed)
    cache.put_json(key, {"accuracy": acc, "seed": seed})
    return acc


def paired_runs(cache: Cache, base: DistillConfig = DESK, seeds: int = PAIR_SEEDS) -> list[tuple[dict, dict]]:
    """(without, with) flip-concatenation summaries for each seed index."""
    real = None
    out = []
    for i in range(seeds):
        pair = []
        for fyi in (False, True):
            cfg = pair_config(i, fyi, base)
            if real is None and cache.get_json(_distill_key(cache, cfg)) is None:
                real, _ = load_real(cfg)
            pair.append(distill_cached(cfg, cache, real))
        out.append(tuple(pair))
    return out


def symmetric_runs(cache: Cache, iterations: int = 1000, seeds: int = PAIR_SEEDS):
    """Paired runs on the flip-closed MNIST subset."""
    base = DESK.replace(flip_closed=True, iterations=iterations)
    return paired_runs(cache, base, seeds)


def end_task(cache: Cache, pairs=None, base: DistillConfig = DESK) -> dict:
    """Retrained accuracy of the paired sets and of the random-real baseline.

    Each of the 5 distilled sets per arm is retrained under 2 evaluation
    seeds, giving 10 evaluations per arm; the baseline uses 10 seeds, each
    drawing its own random real images.
    """
    pairs = pairs if pairs is not None else paired_runs(cache, base)
    per_set = max(1, base.eval_seeds // len(pairs))
    real = test = None
    result = {"DM": [], "DM+FYI": [], "random-real": []}
    for i, (plain, fyi) in enumerate(pairs):
        for j in range(per_set):
            seed = base.eval_seed + per_set * i + j
            for name, run in (("DM", plain), ("DM+FYI", fyi)):
                cfg = DistillConfig.from_dict(run["config"])
                result[name].append(retrain_cached(cfg, run["dfrg"], seed, cache))
    for k in range(base.eval_seeds):
        cfg = base
        if real is None and cache.get_json(cache.key("baseline", cfg, str(base.eval_seed + k))) is None:
            real, test = load_real(cfg)
        result["random-real"].append(baseline_cached(cfg, base.eval_seed + k, cache, real, test))
    return {k: (float(np.mean(v)), v) for k, v in result.items()}


def main() -> None:
    """Fill the cache for every experiment (hours on one core)."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cache = Cache()
    pairs = paired_runs(cache)
    for plain, fyi in pairs:
        log.info("pair: loss %.2f vs %.2f, score %.2f vs %.2f", plain["final_loss"], fyi["final_loss"],
                 plain["score_stored"], fyi["score_stored"])
    res = end_task(cache, pairs)
    log.info("end task: %s", {k: v[0] for k, v in res.items()})
    for plain, fyi in symmetric_runs(cache):
        log.info("flip-closed pair: pixel symmetry %.4f vs %.4f", plain["pixel_symmetry"], fyi["pixel_symmetry"])


if __name__ == "__main__":
    main()
