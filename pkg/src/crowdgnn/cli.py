"""Command-line entry point: prep, dump-graph, train, eval, sweep, export-plot.

Exit codes: 0 success, 1 runtime failure, 2 usage/input error. The default
scene directory can be set with the CROWDGNN_DATA_DIR environment variable;
a JSON config file (--config) provides flag defaults, flags override it.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from .data import DatasetSplit, leave_one_out_split, load_scene_dir
from .evaluate import evaluate
from .graphs import (
    ApproachSense,
    GraphConfig,
    Kernel,
    Neighborhood,
    Normalization,
    build_graph_sequence,
    social_stgcnn_baseline_config,
)
from .model import ModelConfig, ModelParameters, forward_raw
from .gaussian import constrain, cholesky_factor
from .train import TrainConfig, train, write_history_csv

GRAPH_CHOICES = [n.value for n in Neighborhood]
KERNEL_CHOICES = [k.value for k in Kernel]


class UsageError(Exception):
    pass


def _add_data_flags(p):
    p.add_argument(
        "--scene-dir",
        default=os.environ.get("CROWDGNN_DATA_DIR"),
        help="directory of per-scene .txt trajectory files",
    )
    p.add_argument("--t-obs", type=int, default=8)
    p.add_argument("--t-pred", type=int, default=12)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--val-fraction", type=float, default=0.1)


def _add_graph_flags(p):
    p.add_argument("--graph", choices=GRAPH_CHOICES, default="view")
    p.add_argument("--kernel", choices=KERNEL_CHOICES, default="inv")
    p.add_argument("--epsilon", type=float, default=5.0)
    p.add_argument(
        "--approach-sense",
        choices=[s.value for s in ApproachSense],
        default="prose",
    )
    p.add_argument("--self-loops", action="store_true")
    p.add_argument(
        "--normalization",
        choices=[n.value for n in Normalization],
        default="laplacian",
    )


def _graph_cfg(args) -> GraphConfig:
    return GraphConfig(
        neighborhood=args.graph,
        kernel=args.kernel,
        epsilon=args.epsilon,
        approach_sense=args.approach_sense,
        self_loops=args.self_loops,
        normalization=args.normalization,
    )


def _require_scene_dir(args) -> Path:
    if not args.scene_dir:
        raise UsageError("--scene-dir (or CROWDGNN_DATA_DIR) is required")
    d = Path(args.scene_dir)
    if not d.is_dir():
        raise UsageError(f"scene directory not found: {d}")
    return d


def _load_split(args) -> DatasetSplit:
    scene_dir = _require_scene_dir(args)
    scenes = load_scene_dir(
        scene_dir, t_obs=args.t_obs, t_pred=args.t_pred, stride=args.stride
    )
    if not scenes:
        raise UsageError("no scene files")
    return leave_one_out_split(
        scenes, args.held_out, val_fraction=args.val_fraction, seed=args.seed
    )


def _echo(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


# ---- subcommands ------------------------------------------------------------


def cmd_prep(args) -> int:
    scene_dir = _require_scene_dir(args)
    scenes = load_scene_dir(
        scene_dir, t_obs=args.t_obs, t_pred=args.t_pred, stride=args.stride
    )
    if not scenes:
        raise UsageError("no scene files")
    split = leave_one_out_split(
        scenes, args.held_out, val_fraction=args.val_fraction, seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, windows in [("train", split.train), ("val", split.val), ("test", split.test)]:
        data_mod.save_windows(out / f"{name}.npz", windows)
    manifest = {
        "format_version": data_mod.ARCHIVE_FORMAT_VERSION,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "scenes": {name: len(w) for name, w in sorted(scenes.items())},
        "held_out": args.held_out,
        "window_counts": {
            "train": len(split.train),
            "val": len(split.val),
            "test": len(split.test),
        },
        "config_echo": _echo(
            args, ["scene_dir", "held_out", "t_obs", "t_pred", "stride",
                   "val_fraction", "seed"]
        ),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {out}/{{train,val,test}}.npz + manifest.json")
    return 0


def cmd_dump_graph(args) -> int:
    windows = data_mod.load_windows(args.archive)
    cfg = _graph_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    selected = [
        w for w in windows if args.window_id is None or w.window_id == args.window_id
    ]
    if args.window_id is not None and not selected:
        raise UsageError(f"unknown window id {args.window_id!r}")
    for w in selected:
        seq = build_graph_sequence(w, cfg)
        doc = {
            "window_id": w.window_id,
            "config_echo": cfg.to_dict(),
            "adjacency": seq.adjacency.tolist(),
            "degree": seq.degree.tolist(),
            "normalized": seq.normalized.tolist(),
        }
        fname = w.window_id.replace(":", "_") + ".json"
        with open(out / fname, "w") as fh:
            json.dump(doc, fh)
    print(f"wrote {len(selected)} graph document(s) to {out}")
    return 0


def cmd_train(args) -> int:
    split = _load_split(args)
    graph_cfg = _graph_cfg(args)
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr_initial=args.lr_initial,
        lr_after=args.lr_after,
        lr_switch_epoch=min(args.lr_switch_epoch, args.epochs),
        seed=args.seed,
        clip_norm=args.clip_norm,
    )
    model_cfg = ModelConfig(t_obs=args.t_obs, t_pred=args.t_pred)

    def log(rec):
        print(
            f"epoch {rec.epoch:4d}  train_nll {rec.train_nll:+.4f}  "
            f"val_nll {rec.val_nll:+.4f}  lr {rec.lr:g}"
        )

    params, history = train(
        split, graph_cfg, train_cfg, model_cfg, ckpt_path=args.out,
        log=log if not args.quiet else None,
    )
    params.save(
        args.out,
        extra_config={
            "graph_config": graph_cfg.to_dict(),
            "train_config": train_cfg.to_dict(),
        },
    )
    if args.history:
        write_history_csv(args.history, history)
    print(f"saved checkpoint to {args.out}")
    return 0


def cmd_eval(args) -> int:
    params, extra = ModelParameters.load(args.ckpt)
    graph_cfg = GraphConfig(**extra["graph_config"]) if "graph_config" in extra else _graph_cfg(args)
    args.t_obs = params.cfg.t_obs
    args.t_pred = params.cfg.t_pred
    split = _load_split(args)
    report = evaluate(
        split.test,
        graph_cfg,
        params,
        k=args.samples,
        seed=args.seed,
        independent_min=args.independent_min,
        config_echo={
            "checkpoint": str(args.ckpt),
            "held_out": args.held_out,
            "train_config": extra.get("train_config", {}),
        },
    )
    report.save(args.report)
    print(f"ADE {report.ade_mean:.4f}  FDE {report.fde_mean:.4f} -> {args.report}")
    return 0


SWEEP_GRID = [
    ("social-stgcnn-baseline", None, None),
    ("view", Neighborhood.VIEW, Kernel.INVERSE_NORM),
    ("view-thresh", Neighborhood.VIEW_THRESH, Kernel.INVERSE_NORM),
    ("approach", Neighborhood.APPROACH, Kernel.INVERSE_NORM),
    ("view-approach", Neighborhood.VIEW_APPROACH, Kernel.INVERSE_NORM),
    ("view", Neighborhood.VIEW, Kernel.EXP_DECAY),
    ("view-thresh", Neighborhood.VIEW_THRESH, Kernel.EXP_DECAY),
    ("approach", Neighborhood.APPROACH, Kernel.EXP_DECAY),
    ("view-approach", Neighborhood.VIEW_APPROACH, Kernel.EXP_DECAY),
]


def cmd_sweep(args) -> int:
    split = _load_split(args)
    if args.subsample < 1.0:
        rng = np.random.default_rng(args.seed)

        def sub(ws):
            n = max(1, int(round(args.subsample * len(ws)))) if ws else 0
            idx = rng.choice(len(ws), size=n, replace=False) if ws else []
            return [ws[i] for i in sorted(idx)]

        split = DatasetSplit(
            train=sub(split.train), val=sub(split.val), test=sub(split.test),
            held_out_scene=split.held_out_scene,
        )
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr_initial=args.lr_initial,
        lr_after=args.lr_after,
        lr_switch_epoch=min(args.lr_switch_epoch, args.epochs),
        clip_norm=args.clip_norm,
        seed=args.seed,
    )
    model_cfg = ModelConfig(t_obs=args.t_obs, t_pred=args.t_pred)
    rows = []
    for name, nb, kernel in SWEEP_GRID:
        if nb is None:
            graph_cfg = social_stgcnn_baseline_config()
            kernel_name = graph_cfg.kernel.value
        else:
            graph_cfg = GraphConfig(neighborhood=nb, kernel=kernel)
            kernel_name = kernel.value
        params, _ = train(split, graph_cfg, train_cfg, model_cfg)
        report = evaluate(split.test, graph_cfg, params, k=args.samples, seed=args.seed)
        rows.append((name, kernel_name, report.ade_mean, report.fde_mean))
        if not args.quiet:
            print(
                f"{name:24s} kernel={kernel_name:4s} "
                f"ADE {report.ade_mean:.3f}  FDE {report.fde_mean:.3f}"
            )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "kernel", f"{args.held_out}_ade", f"{args.held_out}_fde"])
        for name, kernel_name, a, f in rows:
            writer.writerow([name, kernel_name, f"{a:.6f}", f"{f:.6f}"])
    print(f"wrote sweep table to {args.out}")
    return 0


def cmd_export_plot(args) -> int:
    params, extra = ModelParameters.load(args.ckpt)
    graph_cfg = GraphConfig(**extra["graph_config"])
    windows = data_mod.load_windows(args.archive)
    matches = [w for w in windows if w.window_id == args.window_id]
    if not matches:
        raise UsageError(f"unknown window id {args.window_id!r}")
    w = matches[0]
    rows = []
    for i in range(w.n_peds):
        for t in range(w.t_obs):
            rows.append((i, t, "observed", -1, w.positions[i, t, 0], w.positions[i, t, 1]))
        for t in range(w.t_pred):
            rows.append(
                (i, w.t_obs + t, "truth", -1,
                 w.positions[i, w.t_obs + t, 0], w.positions[i, w.t_obs + t, 1])
            )
    if args.samples > 0:
        from .evaluate import predict_gaussians, sample_trajectory, _sample_seed

        g = predict_gaussians(w, graph_cfg, params)
        last_obs = w.positions[:, w.t_obs - 1]
        for s in range(args.samples):
            rng = _sample_seed(args.seed, w.window_id, s)
            pred = sample_trajectory(g, last_obs, rng)
            for i in range(w.n_peds):
                for t in range(w.t_pred):
                    rows.append((i, w.t_obs + t, "sample", s, pred[i, t, 0], pred[i, t, 1]))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ped_id", "frame", "kind", "sample_idx", "x", "y"])
        for r in rows:
            writer.writerow([r[0], r[1], r[2], r[3], repr(float(r[4])), repr(float(r[5]))])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdgnn", description="Pedestrian trajectory prediction toolkit"
    )
    parser.add_argument("--config", help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="parse scenes, window, split, and archive")
    _add_data_flags(p)
    p.add_argument("--held-out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for archives")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("dump-graph", help="emit adjacency JSON per window")
    _add_graph_flags(p)
    p.add_argument("--archive", required=True, help="window archive (.npz)")
    p.add_argument("--window-id", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_dump_graph)

    p = sub.add_parser("train", help="train a model")
    _add_data_flags(p)
    _add_graph_flags(p)
    p.add_argument("--held-out", required=True)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr-initial", type=float, default=0.01)
    p.add_argument("--lr-after", type=float, default=0.002)
    p.add_argument("--lr-switch-epoch", type=int, default=150)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", default=None, help="loss history CSV path")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="best-of-k ADE/FDE on the held-out scene")
    _add_data_flags(p)
    _add_graph_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--held-out", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--independent-min", action="store_true")
    p.add_argument("--report", required=True, help="output JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/eval the neighborhood x kernel grid")
    _add_data_flags(p)
    p.add_argument("--held-out", required=True)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr-initial", type=float, default=0.01)
    p.add_argument("--lr-after", type=float, default=0.002)
    p.add_argument("--lr-switch-epoch", type=int, default=150)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--subsample", type=float, default=1.0,
                   help="fraction of windows to keep in each split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-plot", help="CSV of observed/truth/sampled points")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--window-id", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_plot)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Use a JSON config file as flag defaults; command-line flags override."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    rest = argv[:i] + argv[i + 2 :]
    known = set()
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        for a in action._actions:
            known.update(s.lstrip("-").replace("-", "_") for s in a.option_strings)
    extra = []
    for key, value in cfg.items():
        norm = key.replace("-", "_")
        if norm not in known:
            raise UsageError(f"{path}: unknown config key {key!r}")
        flag = "--" + norm.replace("_", "-")
        if flag in rest:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    # insert after the subcommand token
    for j, tok in enumerate(rest):
        if not tok.startswith("-"):
            return rest[: j + 1] + extra + rest[j + 1 :]
    return rest + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, data_mod.TrajectoryParseError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
