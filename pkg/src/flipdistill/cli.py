"""Command-line entry point: ``flipdistill <subcommand> ...``.

Every subcommand writes a JSON manifest next to its main output.  On failure
the process prints one JSON line ``{"error": <type>, "message": <text>}`` to
stderr and exits with status 1 (2 for argument errors, as argparse does).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .augment import variant_transform
from .config import DistillConfig
from .convnet import make_rng
from .dataio import export_grid, load_dataset, load_synthetic, make_flip_closed, save_synthetic
from .diagnostics import (
    attention_symmetry,
    dm_score_from_features,
    feature_matrix,
    median_score,
    score_curve,
    synthetic_score,
    theta_pool,
    write_csv,
    write_grid_csv,
    write_heatmap,
)
from .harness import (
    Manifest,
    config_seeds,
    eval_seeds,
    evaluate,
    load_real,
    resolve_data_dir,
    run_distill,
    summarize,
    train_network,
)
from .tensor import Tensor, no_grad

log = logging.getLogger("flipdistill")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _load_config(path) -> DistillConfig:
    return (DistillConfig.load(path) if path else DistillConfig()).validate()


def cmd_distill(args) -> int:
    cfg = _load_config(args.config)
    if args.iterations is not None:
        cfg = cfg.replace(iterations=args.iterations)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    every = max(1, cfg.iterations // 20)

    def progress(it, loss):
        if it % every == 0:
            log.info("iteration %d loss %.6g", it, loss)

    syn, dlog = run_distill(cfg, progress=progress)
    save_synthetic(out, syn.to_array(), syn.mean, syn.std)
    loss_csv = out.with_suffix(".loss.csv")
    write_csv(loss_csv, ("iteration", "loss"), enumerate(dlog.losses))
    outputs = [out, loss_csv]
    if dlog.scores:
        trace_csv = out.with_suffix(".scores.csv")
        keys = ("iteration", "score_stored", "score_augmented", "flip_feature_distance")
        write_csv(trace_csv, keys, ([e[k] for k in keys] for e in dlog.scores))
        outputs.append(trace_csv)
    Manifest("distill", cfg, config_seeds(cfg), outputs).write(_manifest_path(out))
    print(f"wrote {out} final_loss={dlog.final_loss():.6g}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    syn = load_synthetic(args.syn)
    _, test = load_real(cfg)
    seeds = eval_seeds(cfg, args.seeds)
    rows = evaluate(cfg, syn, test, seeds)
    mean, std = summarize([a for _, a in rows])
    out = Path(args.out) if args.out else Path(args.syn).with_suffix(".eval.csv")
    write_csv(out, ("seed", "accuracy"), rows)
    Manifest("eval", cfg, {**config_seeds(cfg), "eval_seed_list": seeds}, [out]).write(_manifest_path(out))
    print(f"accuracy {mean:.4f} +- {std:.4f} over {len(rows)} seeds")
    return 0


def cmd_score(args) -> int:
    cfg = _load_config(args.config)
    if args.syn:
        syn = load_synthetic(args.syn)
        shape = syn.images.shape[2:]
        thetas = theta_pool(args.theta_samples, shape, syn.classes, args.theta_seed, width=cfg.width)
        value = synthetic_score(syn.images, thetas, metric=args.metric, augmented=args.augmented)
        source = str(args.syn)
    else:
        train, _, meta = load_dataset(args.dataset, resolve_data_dir(args.data_dir or cfg.data_dir))
        order = make_rng(args.subset_seed).permutation(len(train))[: args.limit]
        batch = train.subset(np.sort(order))
        if args.flip_closed:
            batch = make_flip_closed(batch)
        thetas = theta_pool(args.theta_samples, batch.images.shape[1:], meta.classes, args.theta_seed, width=cfg.width)
        value = median_score(thetas, batch.images, metric=args.metric, labels=batch.labels)
        source = f"{args.dataset}[{len(batch)}]"
    print(repr(float(value)))
    if args.out:
        out = Path(args.out)
        write_csv(out, ("source", "metric", "theta_samples", "score"), [(source, args.metric, args.theta_samples, value)])
        seeds = {"theta_seed": args.theta_seed, "subset_seed": args.subset_seed}
        Manifest("score", cfg, seeds, [out]).write(_manifest_path(out))
    return 0


def cmd_export_grid(args) -> int:
    syn = load_synthetic(args.syn)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    h, w = export_grid(out, syn.images, syn.mean, syn.std)
    Manifest("export-grid", None, {}, [out]).write(_manifest_path(out))
    print(f"wrote {out} ({syn.classes} x {syn.ipc} tiles, {h}x{w} pixels)")
    return 0


def cmd_audit(args) -> int:
    cfg = _load_config(args.config).replace(dataset=args.dataset)
    if args.data_dir:
        cfg = cfg.replace(data_dir=args.data_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, _, meta = load_dataset(cfg.dataset, resolve_data_dir(cfg.data_dir))
    shape = train.images.shape[1:]
    thetas = theta_pool(args.theta_samples, shape, meta.classes, args.theta_seed, width=cfg.width)
    sizes = [int(s) for s in args.sizes.split(",")]
    outputs = []

    curve = score_curve(train.images, sizes, thetas, make_rng(args.subset_seed))
    rows = [(n, "hflip", v) for n, v in curve]
    for name in args.variants.split(",") if args.variants else []:
        transform = variant_transform(name)
        order = make_rng(args.subset_seed).permutation(len(train))[: max(sizes)]
        sub = train.images[order]
        with no_grad():
            moved = transform(Tensor._wrap(sub)).data
        table = []
        for p in thetas:
            f, ff = feature_matrix(p, sub), feature_matrix(p, moved)
            table.append([dm_score_from_features(f[:n], ff[:n]) for n in sorted(sizes)])
        rows += [(n, name, float(v)) for n, v in zip(sorted(sizes), np.median(table, axis=0))]
    curve_csv = out_dir / "score_curve.csv"
    write_csv(curve_csv, ("n_images", "transform", "median_score"), rows)
    outputs.append(curve_csv)

    if args.train_epochs > 0:
        rng = make_rng(args.subset_seed + 1)
        idx = np.sort(rng.permutation(len(train))[: args.train_limit])
        net_cfg = cfg.replace(epochs=args.train_epochs, retrain_aug=False, batch_train=64)
        p = train_network(net_cfg, train.subset(idx), rng, meta.classes)
        for c in range(meta.classes):
            images = train.images[train.labels == c][: args.cam_images]
            hist = attention_symmetry(p, images, c)
            grid_csv = out_dir / f"attention_class{c}.csv"
            heat = out_dir / f"attention_class{c}.pgm"
            write_grid_csv(grid_csv, hist)
            write_heatmap(heat, hist)
            outputs += [grid_csv, heat]
    seeds = {"theta_seed": args.theta_seed, "subset_seed": args.subset_seed}
    Manifest("audit", cfg, seeds, outputs).write(out_dir / "audit.manifest.json")
    for n, name, v in rows:
        print(f"{name} n={n} score={v:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flipdistill", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING", help="python logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("distill", help="optimise a synthetic set and save it as DFRG")
    d.add_argument("--config", help="JSON config file (defaults used when omitted)")
    d.add_argument("--out", required=True, help="output .dfrg path")
    d.add_argument("--iterations", type=int, help="override the configured iteration count")
    d.set_defaults(func=cmd_distill)

    e = sub.add_parser("eval", help="retrain on a synthetic set and report test accuracy")
    e.add_argument("--syn", required=True)
    e.add_argument("--config")
    e.add_argument("--seeds", type=int, help="number of evaluation seeds (default from config)")
    e.add_argument("--out", help="CSV path (default <syn>.eval.csv)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("score", help="unequalness score of a synthetic set or a dataset sample")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--syn")
    src.add_argument("--dataset")
    s.add_argument("--config")
    s.add_argument("--data-dir")
    s.add_argument("--theta-samples", type=int, default=10)
    s.add_argument("--theta-seed", type=int, default=0)
    s.add_argument("--metric", choices=("DM", "DC"), default="DM")
    s.add_argument("--limit", type=int, default=1000, help="dataset images to score")
    s.add_argument("--subset-seed", type=int, default=0)
    s.add_argument("--flip-closed", action="store_true", help="score the sample joined with its mirrors")
    s.add_argument("--augmented", action="store_true", help="score each class of --syn joined with its mirrors")
    s.add_argument("--out", help="optional CSV output")
    s.set_defaults(func=cmd_score)

    g = sub.add_parser("export-grid", help="write synthetic images as a PGM or PNG grid")
    g.add_argument("--syn", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_export_grid)

    a = sub.add_parser("audit", help="score curve and attention histograms of a real dataset")
    a.add_argument("--dataset", required=True)
    a.add_argument("--config")
    a.add_argument("--data-dir")
    a.add_argument("--out-dir", default="audit")
    a.add_argument("--sizes", default="1,10,100,1000")
    a.add_argument("--variants", default="", help="comma list from vflip,rotate15,scale1.2")
    a.add_argument("--theta-samples", type=int, default=10)
    a.add_argument("--theta-seed", type=int, default=0)
    a.add_argument("--subset-seed", type=int, default=0)
    a.add_argument("--train-epochs", type=int, default=2, help="epochs for the CAM network (0 skips CAM)")
    a.add_argument("--train-limit", type=int, default=1000)
    a.add_argument("--cam-images", type=int, default=100, help="images per class for the histograms")
    a.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one machine-readable line, no traceback
        msg = json.dumps({"error": type(exc).__name__, "message": str(exc).splitlines()[0] if str(exc) else ""})
        print(msg, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
