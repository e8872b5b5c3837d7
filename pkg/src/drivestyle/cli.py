"""Command-line entry point: ``drivestyle <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import models as M
from .evaluation import (METHODS, ExperimentConfig, evaluate_saved_model, load_any_model,
                         run_experiment, split_dataset)
from .geodata import TrajectoryError, load_dataset, load_trip, synth_dataset, validate_sampling, write_dataset
from .streaming import StreamingPredictor
from .transform import TransformConfig, export_heatmap, save_matrix, transform_trip


class UsageError(Exception):
    pass


def _emit(args, obj, text):
    print(json.dumps(obj, sort_keys=True) if args.json else text)


def cmd_synth(args):
    ds, personas = synth_dataset(args.drivers, args.trips, args.seed,
                                 min_duration=args.min_duration, max_duration=args.max_duration)
    write_dataset(ds, args.out, decimals=args.decimals)
    info = {"drivers": len(ds.drivers), "trips": len(ds), "out": str(args.out),
            "personas": {d: vars(p) for d, p in zip(ds.drivers, personas)}}
    _emit(args, info, f"wrote {len(ds)} trips for {len(ds.drivers)} drivers to {args.out}")


def cmd_validate(args):
    ds = load_dataset(args.data)
    reports = [validate_sampling(t, args.min_rate, args.ls) for t in ds.all_trips()]
    if args.json:
        print(json.dumps([r.to_dict() for r in reports], sort_keys=True))
    else:
        for r in reports:
            print(r.to_line())
    return 0


def cmd_transform(args):
    cfg = TransformConfig(args.ls, args.lf)
    ds = load_dataset(args.data)
    out = Path(args.out)
    summary = {"ls": cfg.ls, "lf": cfg.lf, "trips": {}, "skipped": []}
    for traj in ds.all_trips():
        ms = transform_trip(traj, cfg)
        key = f"{traj.driver_id}/{traj.trip_id}"
        summary["trips"][key] = len(ms)
        if not ms:
            summary["skipped"].append(key)
            continue
        (out / traj.driver_id).mkdir(parents=True, exist_ok=True)
        for m in ms:
            save_matrix(m, out / traj.driver_id / f"{traj.trip_id}_{m.segment_index}.dsfm")
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    total = sum(summary["trips"].values())
    text = "\n".join([f"{k}: {v} segments" for k, v in summary["trips"].items()] +
                     [f"skipped (shorter than one segment): {k}" for k in summary["skipped"]] +
                     [f"{total} matrices of {35}x{cfg.n_frames} written to {out}"])
    _emit(args, summary, text)


CONFIG_FLAGS = {
    "method": "method", "data": "data_root", "out": "out_dir", "ls": "ls", "lf": "lf",
    "seed": "seed", "train_frac": "train_frac", "epochs": "epochs", "batch_size": "batch_size",
    "optimizer": "optimizer", "lr": "learning_rate", "decay": "decay", "momentum": "momentum",
    "rho": "rho", "epsilon": "epsilon", "clip_norm": "clip_norm", "hidden": "hidden",
    "cnn_epochs": "cnn_epochs", "cnn_lr": "cnn_learning_rate", "cnn_batch_size": "cnn_batch_size",
    "rounds": "gbdt_rounds", "depth": "gbdt_depth", "shrinkage": "shrinkage",
    "aggregation": "aggregation", "heatmaps": "heatmaps",
}


def build_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    for flag, key in CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    if "method" not in base:
        raise UsageError("--method is required (or set 'method' in --config)")
    if base["method"] not in METHODS:
        raise UsageError(f"unknown method {base['method']!r}; choose from {', '.join(METHODS)}")
    if not base.get("data_root"):
        raise UsageError("--data is required (or set 'data_root' in --config)")
    return ExperimentConfig.from_dict(base)


def cmd_train(args):
    cfg = build_config(args)
    if not cfg.out_dir:
        raise UsageError("train needs --out")
    report, _ = run_experiment(cfg)
    _emit(args, report.metrics, f"artifacts written to {cfg.out_dir}\n{report.table()}")


def cmd_evaluate(args):
    if args.model:
        if not args.data:
            raise UsageError("--data is required")
        report = evaluate_saved_model(args.model, load_dataset(args.data), args.aggregation)
    else:
        report, _ = run_experiment(build_config(args))
    _emit(args, report.metrics, report.table())


def _read_points(fh):
    header = fh.readline()
    if header.strip() not in ("x,y", "x,y,t"):
        raise TrajectoryError(f"expected header 'x,y', got {header.strip()!r}")
    for lineno, line in enumerate(fh, start=2):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        try:
            yield float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            raise TrajectoryError(f"line {lineno}: cannot parse {line.strip()!r}") from None


def cmd_stream(args):
    model = load_any_model(args.model)
    meta = model.meta
    cfg = TransformConfig(meta.get("ls", 256), meta.get("lf", 4))
    if meta.get("method") == "tripgbdt":
        raise UsageError("trip-level models cannot make partial-trip predictions")
    sp = StreamingPredictor(model, cfg, aggregation=meta.get("aggregation", "sum"),
                            emit_every=args.emit_every, labels=meta.get("drivers"))
    fh = sys.stdin if args.trip in (None, "-") else open(args.trip, encoding="utf-8")
    try:
        for x, y in _read_points(fh):
            for e in sp.push(x, y):
                _emit(args, e.to_dict(), e.to_line())
                sys.stdout.flush()
    finally:
        if fh is not sys.stdin:
            fh.close()
    for e in sp.finish():
        _emit(args, e.to_dict(), e.to_line())


def cmd_inspect(args):
    model = load_any_model(args.model)
    rec = M.recurrent_layer_indices(model) if hasattr(model, "layers") else []
    if not rec:
        raise UsageError("inspect needs a recurrent model (irnn, pretrain-irnn or stacked-irnn)")
    units = model.layers[rec[-1]].units
    neurons = [int(n) for n in args.neurons.split(",")] if args.neurons else list(range(min(3, units)))
    bad = [n for n in neurons if not 0 <= n < units]
    if bad:
        raise UsageError(f"neuron index out of range 0..{units - 1}: {bad}")
    meta = model.meta
    cfg = TransformConfig(meta.get("ls", 256), meta.get("lf", 4))
    ds = load_dataset(args.data)
    split = split_dataset(ds, meta.get("train_frac", 0.8), meta.get("seed", 0))
    trips = {(t.driver_id, t.trip_id): t for t in ds.all_trips()}
    matrices = []
    for d in ds.drivers:
        for t in split.train[d]:
            matrices += transform_trip(trips[(d, t)], cfg)
    top = M.top_activations(model, matrices, k=args.k)
    out = Path(args.out)
    result = {}
    for n in neurons:
        ndir = out / f"neuron_{n}"
        ndir.mkdir(parents=True, exist_ok=True)
        entries = []
        for rank, (seg_id, act) in enumerate(top[n], start=1):
            m = matrices[seg_id]
            export_heatmap(m, ndir / f"rank{rank}_{m.driver_id}_{m.trip_id}_seg{m.segment_index}.ppm",
                           scale=args.scale)
            entries.append({"rank": rank, "segment": seg_id, "driver_id": m.driver_id,
                            "trip_id": m.trip_id, "segment_index": m.segment_index,
                            "activation": act})
        result[str(n)] = entries
    (out / "top_activations.json").write_text(json.dumps(result, sort_keys=True, indent=1) + "\n")
    text = "\n".join(f"neuron {n}: " + ", ".join(f"{e['driver_id']}/{e['trip_id']}#{e['segment_index']}"
                                                 f"={e['activation']:.4g}" for e in es)
                     for n, es in result.items())
    _emit(args, result, text)


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON file of experiment settings; flags override it")
    p.add_argument("--method", choices=list(METHODS))
    p.add_argument("--data", help="dataset root (<root>/<driver>/<trip>.csv)")
    p.add_argument("--out", help="output directory for model and report")
    p.add_argument("--ls", type=int)
    p.add_argument("--lf", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-frac", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--optimizer", choices=["sgd_nesterov", "rmsprop"])
    p.add_argument("--lr", type=float, help="learning rate (default 0.05 SGD, 1e-6 RMSProp)")
    p.add_argument("--decay", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--cnn-epochs", type=int, help="CNN stage of pretrain-irnn")
    p.add_argument("--cnn-lr", type=float, help="CNN stage of pretrain-irnn")
    p.add_argument("--cnn-batch-size", type=int, help="CNN stage of pretrain-irnn")
    p.add_argument("--rounds", type=int, help="boosting rounds")
    p.add_argument("--depth", type=int, help="max tree depth")
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--aggregation", choices=["sum", "log"])
    p.add_argument("--heatmaps", type=int, help="number of test-segment heatmaps to export")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivestyle", description="Driving-style learning from GPS trips")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--drivers", type=int, default=5)
    p.add_argument("--trips", type=int, default=40, help="trips per driver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--min-duration", type=int, default=500)
    p.add_argument("--max-duration", type=int, default=900)
    p.add_argument("--decimals", type=int, default=None, help="round coordinates when writing")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check sampling rates and trip lengths")
    p.add_argument("--data", required=True)
    p.add_argument("--min-rate", type=float, default=0.1)
    p.add_argument("--ls", type=int, default=256)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("transform", help="turn trips into statistical feature matrices")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ls", type=int, default=256)
    p.add_argument("--lf", type=int, default=4)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="train and evaluate a method, writing model and report")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print the accuracy table for a method or a saved model")
    _add_experiment_flags(p)
    p.add_argument("--model", help="saved model; evaluated on the test split stored with it")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stream", help="rolling predictions while a trip is being recorded")
    p.add_argument("--model", required=True)
    p.add_argument("--trip", help="trip CSV; '-' or omitted reads standard input")
    p.add_argument("--emit-every", type=int, default=1, help="emit after this many new segments")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("inspect", help="top-activating training segments of recurrent neurons")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--neurons", help="comma-separated neuron indices (default 0,1,2)")
    p.add_argument("--scale", type=int, default=4, help="heatmap upscaling factor")
    p.set_defaults(func=cmd_inspect)

    for p in sub.choices.values():
        p.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (TrajectoryError, ValueError, FileNotFoundError, FloatingPointError) as e:
        print(f"drivestyle: error: {e}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
