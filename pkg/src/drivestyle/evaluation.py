"""Train/test splitting, segment-to-trip vote aggregation, metrics and the experiment harness."""
from __future__ import annotations

import json
import logging
import math
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import models as M
from .baseline import GbdtModel, gbdt_predict, gbdt_train, trip_features, unfold_matrix
from .geodata import Dataset, load_dataset
from .nn import load_model, save_model
from .transform import TransformConfig, export_heatmap, transform_trip

log = logging.getLogger(__name__)

METHODS = {
    "cnn": "CNN",
    "nopoolcnn": "NoPoolCNN",
    "irnn": "IRNN",
    "pretrain-irnn": "PretrainIRNN",
    "stacked-irnn": "StackedIRNN",
    "gbdt": "GBDT",
    "tripgbdt": "TripGBDT",
}
NETWORK_METHODS = ("cnn", "nopoolcnn", "irnn", "pretrain-irnn", "stacked-irnn")


# --- splitting ---------------------------------------------------------------

@dataclass
class Split:
    train: dict[str, list[str]]
    test: dict[str, list[str]]
    seed: int
    frac: float

    def __post_init__(self):
        for d in self.train:
            if set(self.train[d]) & set(self.test.get(d, [])):
                raise ValueError(f"train and test overlap for driver {d}")


def split_dataset(ds: Dataset, frac: float = 0.8, seed: int = 0) -> Split:
    """Per-driver seeded shuffle; floor(frac * n) trips train, the rest (at least one) test."""
    if not 0 < frac < 1:
        raise ValueError("frac must lie strictly between 0 and 1")
    train, test = {}, {}
    for i, d in enumerate(ds.drivers):
        ids = [t.trip_id for t in ds.trips[d]]
        if len(ids) < 2:
            raise ValueError(f"driver {d} needs at least 2 trips to split")
        perm = np.random.default_rng([seed, i]).permutation(len(ids))
        n_train = min(int(math.floor(frac * len(ids))), len(ids) - 1)
        train[d] = [ids[j] for j in perm[:n_train]]
        test[d] = [ids[j] for j in perm[n_train:]]
    return Split(train, test, seed, frac)


# --- aggregation and metrics -----------------------------------------------

def aggregate_trip(segment_probs, mode: str = "sum") -> np.ndarray:
    """Sum the segment probability vectors in order (or their logs with ``mode="log"``)."""
    probs = [np.asarray(p, dtype=np.float64) for p in segment_probs]
    if not probs:
        raise ValueError("trip has no segments to aggregate")
    if any(p.shape != probs[0].shape for p in probs):
        raise ValueError("segment probability vectors differ in length")
    if mode == "log":
        probs = [np.log(np.maximum(p, 1e-300)) for p in probs]
    elif mode != "sum":
        raise ValueError(f"unknown aggregation mode {mode!r}")
    total = probs[0].copy()
    for p in probs[1:]:
        total = total + p
    return total


def top_k(scores, k: int = 5) -> list[int]:
    """Class indices of the k largest scores, ties going to the lower index."""
    scores = np.asarray(scores)
    return [int(i) for i in np.lexsort((np.arange(len(scores)), -scores))[:k]]


@dataclass
class TripResult:
    driver_id: str
    trip_id: str
    label: int
    segment_probs: np.ndarray | None = None   # (segments, classes); None for trip-level methods
    scores: np.ndarray | None = None


@dataclass
class PredictionReport:
    method: str
    num_classes: int
    metrics: dict
    trips: list[dict]
    confusion: list[list[int]]
    excluded_trips: int
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def table(self) -> str:
        return format_table([(self.method, self.metrics)])


def _pct(v):
    return "-" if v is None else f"{100 * v:.1f}"


def format_table(rows) -> str:
    lines = [f"{'Method':<14}{'Seg (%)':>9}{'Trip (%)':>10}{'Trip Top-5 (%)':>16}"]
    for name, m in rows:
        lines.append(f"{name:<14}{_pct(m.get('segment_accuracy')):>9}"
                     f"{_pct(m.get('trip_accuracy')):>10}{_pct(m.get('trip_top5_accuracy')):>16}")
    return "\n".join(lines)


def compute_metrics(results: list[TripResult], num_classes: int, method: str = "",
                    aggregation: str = "sum", history=None) -> PredictionReport:
    """Segment, trip and trip top-5 accuracy over test trips.

    Trips with no segments are excluded from trip metrics and counted. For
    trip-level methods (no ``segment_probs``) segment accuracy is ``None``.
    """
    seg_total = seg_correct = 0
    trip_total = trip_correct = top5_correct = 0
    excluded = 0
    confusion = [[0] * num_classes for _ in range(num_classes)]
    trips = []
    segment_level = any(r.segment_probs is not None for r in results)
    for r in results:
        entry = {"driver_id": r.driver_id, "trip_id": r.trip_id, "label": r.label}
        scores = r.scores
        if r.segment_probs is not None:
            sp = np.asarray(r.segment_probs)
            entry["segment_probs"] = sp.tolist()
            if len(sp) == 0:
                excluded += 1
                entry["excluded"] = True
                trips.append(entry)
                continue
            seg_total += len(sp)
            seg_correct += int(sum(top_k(p, 1)[0] == r.label for p in sp))
            if scores is None:
                scores = aggregate_trip(sp, aggregation)
        if scores is None:
            excluded += 1
            entry["excluded"] = True
            trips.append(entry)
            continue
        ranked = top_k(scores, 5)
        trip_total += 1
        trip_correct += ranked[0] == r.label
        top5_correct += r.label in ranked
        confusion[r.label][ranked[0]] += 1
        entry.update(scores=np.asarray(scores).tolist(), prediction=ranked[0], top5=ranked)
        trips.append(entry)
    metrics = {
        "segment_accuracy": (seg_correct / seg_total if seg_total else None) if segment_level else None,
        "trip_accuracy": trip_correct / trip_total if trip_total else None,
        "trip_top5_accuracy": top5_correct / trip_total if trip_total else None,
        "test_segments": seg_total,
        "test_trips": trip_total,
    }
    return PredictionReport(method, num_classes, metrics, trips, confusion, excluded, list(history or []))


# --- experiment harness ------------------------------------------------------

@dataclass
class ExperimentConfig:
    method: str = "cnn"
    data_root: str | None = None
    out_dir: str | None = None
    ls: int = 256
    lf: int = 4
    seed: int = 0
    train_frac: float = 0.8
    epochs: int = 30
    batch_size: int = 128
    optimizer: str | None = None
    learning_rate: float | None = None
    decay: float = 1e-6
    momentum: float = 0.9
    rho: float = 0.9
    epsilon: float = 1e-6
    clip_norm: float | None = None
    hidden: int = 100
    # CNN stage of pretrain-irnn; None reuses the values above
    cnn_epochs: int | None = None
    cnn_learning_rate: float | None = None
    cnn_batch_size: int | None = None
    gbdt_rounds: int = 50
    gbdt_depth: int = 6
    shrinkage: float = 0.1
    aggregation: str = "sum"
    heatmaps: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")

    @property
    def transform(self) -> TransformConfig:
        return TransformConfig(self.ls, self.lf)

    def train_config(self, cnn_stage: bool = False) -> M.TrainConfig:
        if cnn_stage:
            return M.TrainConfig(batch_size=self.cnn_batch_size or self.batch_size,
                                 epochs=self.cnn_epochs or self.epochs, seed=self.seed,
                                 optimizer="sgd_nesterov", learning_rate=self.cnn_learning_rate,
                                 decay=self.decay, momentum=self.momentum)
        return M.TrainConfig(batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
                             optimizer=self.optimizer, learning_rate=self.learning_rate,
                             decay=self.decay, momentum=self.momentum, rho=self.rho,
                             epsilon=self.epsilon, clip_norm=self.clip_norm)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _trip_map(ds: Dataset):
    return {(t.driver_id, t.trip_id): t for t in ds.all_trips()}


def predict_segments(model, matrices) -> np.ndarray:
    """Per-segment probabilities from a network or a segment-level boosted-tree model."""
    if len(matrices) == 0:
        n = model.num_classes
        return np.empty((0, n))
    if isinstance(model, GbdtModel):
        return gbdt_predict(model, np.stack([unfold_matrix(m) for m in matrices]))
    return M.predict_proba(model, matrices)


def _model_meta(cfg: ExperimentConfig, ds: Dataset) -> dict:
    return {"method": cfg.method, "ls": cfg.ls, "lf": cfg.lf, "seed": cfg.seed,
            "train_frac": cfg.train_frac, "drivers": list(ds.drivers), "aggregation": cfg.aggregation}


def fit_method(cfg: ExperimentConfig, ds: Dataset, split: Split):
    """Train the configured method on the training side of ``split``; returns ``(model, history)``."""
    trips = _trip_map(ds)
    labels = {d: i for i, d in enumerate(ds.drivers)}
    k = len(ds.drivers)
    train_keys = [(d, t) for d in ds.drivers for t in split.train[d]]
    if cfg.method == "tripgbdt":
        x = np.stack([trip_features(trips[key]).values for key in train_keys])
        y = [labels[d] for d, _ in train_keys]
        model = gbdt_train(x, y, max_depth=cfg.gbdt_depth, rounds=cfg.gbdt_rounds,
                           shrinkage=cfg.shrinkage, num_classes=k)
        return model, model.train_loss
    tcfg = cfg.transform
    xs, ys = [], []
    for key in train_keys:
        ms = transform_trip(trips[key], tcfg)
        xs += [m.values for m in ms]
        ys += [labels[key[0]]] * len(ms)
    if not xs:
        raise ValueError("no training segments: every training trip is shorter than one segment")
    x = np.stack(xs)
    y = np.array(ys)
    shape = (x.shape[1], x.shape[2])
    if cfg.method == "gbdt":
        model = gbdt_train(x.reshape(len(x), -1), y, max_depth=cfg.gbdt_depth,
                           rounds=cfg.gbdt_rounds, shrinkage=cfg.shrinkage, num_classes=k)
        return model, model.train_loss
    arch = METHODS[cfg.method]
    if arch == "PretrainIRNN":
        cnn = M.build_cnn(shape, k, seed=cfg.seed)
        _, cnn_hist = M.train(cnn, x, y, cfg.train_config(cnn_stage=True))
        model = M.build_pretrain_irnn(cnn, k, hidden=cfg.hidden, seed=cfg.seed)
        _, hist = M.train(model, x, y, cfg.train_config())
        return model, [{"stage": "cnn", **h} for h in cnn_hist] + [{"stage": "irnn", **h} for h in hist]
    if arch in ("IRNN", "StackedIRNN"):
        model = M.BUILDERS[arch](shape, k, hidden=cfg.hidden, seed=cfg.seed)
    else:
        model = M.BUILDERS[arch](shape, k, seed=cfg.seed)
    _, hist = M.train(model, x, y, cfg.train_config())
    return model, hist


def evaluate(model, ds: Dataset, split: Split, cfg: ExperimentConfig, history=None) -> PredictionReport:
    trips = _trip_map(ds)
    labels = {d: i for i, d in enumerate(ds.drivers)}
    results = []
    for d in ds.drivers:
        for t in split.test[d]:
            traj = trips[(d, t)]
            if cfg.method == "tripgbdt":
                scores = gbdt_predict(model, trip_features(traj).values)
                results.append(TripResult(d, t, labels[d], scores=scores))
            else:
                ms = transform_trip(traj, cfg.transform)
                results.append(TripResult(d, t, labels[d], segment_probs=predict_segments(model, ms)))
    return compute_metrics(results, len(ds.drivers), METHODS[cfg.method], cfg.aggregation, history)


def model_filename(method: str) -> str:
    return "model.json" if method in ("gbdt", "tripgbdt") else "model.dsnn"


def save_any_model(model, path):
    if isinstance(model, GbdtModel):
        model.save(path)
    else:
        save_model(model, path)


def load_any_model(path):
    raw = Path(path).read_bytes()
    if raw[:4] == b"DSNN":
        return load_model(path)
    return GbdtModel.from_json(raw.decode("utf-8"))


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None):
    """Load, split, train, evaluate and (if ``out_dir`` is set) write artifacts.

    Artifacts are staged in a temporary directory and moved into ``out_dir``
    only after everything succeeded. Returns ``(report, model)``.
    """
    ds = dataset if dataset is not None else load_dataset(cfg.data_root)
    split = split_dataset(ds, cfg.train_frac, cfg.seed)
    model, history = fit_method(cfg, ds, split)
    model.meta = {**model.meta, **_model_meta(cfg, ds)}
    report = evaluate(model, ds, split, cfg, history)
    if cfg.out_dir:
        write_artifacts(cfg, ds, split, model, report)
    return report, model


def write_artifacts(cfg, ds, split, model, report):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        save_any_model(model, stage / model_filename(cfg.method))
        (stage / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (stage / "report.txt").write_text(report.table() + "\n", encoding="utf-8")
        (stage / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n",
                                           encoding="utf-8")
        if cfg.heatmaps and cfg.method != "tripgbdt":
            hdir = stage / "heatmaps"
            hdir.mkdir()
            trips = _trip_map(ds)
            written = 0
            for d in ds.drivers:
                for t in split.test[d]:
                    for m in transform_trip(trips[(d, t)], cfg.transform):
                        if written >= cfg.heatmaps:
                            break
                        export_heatmap(m, hdir / f"{d}_{t}_{m.segment_index}.ppm", scale=4)
                        written += 1
        for item in sorted(stage.iterdir()):
            target = out / item.name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
            item.rename(target)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def evaluate_saved_model(model_path, ds: Dataset, aggregation: str | None = None) -> PredictionReport:
    """Re-evaluate a saved model on the test split recorded in its metadata."""
    model = load_any_model(model_path)
    meta = model.meta
    if meta.get("drivers") and list(meta["drivers"]) != list(ds.drivers):
        raise ValueError("dataset drivers do not match the drivers the model was trained on")
    cfg = ExperimentConfig(method=meta["method"], ls=meta["ls"], lf=meta["lf"], seed=meta["seed"],
                           train_frac=meta["train_frac"],
                           aggregation=aggregation or meta.get("aggregation", "sum"))
    split = split_dataset(ds, cfg.train_frac, cfg.seed)
    return evaluate(model, ds, split, cfg)
