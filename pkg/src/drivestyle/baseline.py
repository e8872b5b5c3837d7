"""Gradient-boosted tree baselines.

``GBDT`` boosts trees on unfolded 35 x F matrices; ``TripGBDT`` boosts trees
on handcrafted whole-trip features (global statistics plus per-turn-angle
statistics, averaged over several downsampling rates).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geodata import Trajectory
from .transform import BASIC_FEATURES, STATISTICS, FeatureMatrix, _stats_sorted, basic_features

ANGLE_BINS = (0, 10, 20, 30, 45, 60, 90, 120, 180)
DOWNSAMPLE_RATES = (1, 2, 3, 4, 5)
GBDT_FORMAT = "drivestyle-gbdt"
GBDT_VERSION = 1


def unfold_matrix(m) -> np.ndarray:
    values = m.values if isinstance(m, FeatureMatrix) else np.asarray(m)
    return values.reshape(-1).copy()


# --- handcrafted trip features ---------------------------------------------

def _bin_labels():
    edges = ANGLE_BINS
    labels = [f"[{a},{b})" for a, b in zip(edges[:-2], edges[1:-1])]
    return labels + [f"[{edges[-2]},{edges[-1]}]"]


@dataclass(frozen=True)
class TripFeatureLayout:
    names: tuple

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def default(cls) -> "TripFeatureLayout":
        stat_names = [f"{f}.{s}" for f in BASIC_FEATURES for s in STATISTICS]
        names = [f"global.{n}" for n in stat_names]
        names += ["global.duration", "global.length", "global.avg_speed",
                  "global.bbox_area", "global.bbox_edge_x", "global.bbox_edge_y"]
        for b in _bin_labels():
            names += [f"angle{b}.{n}" for n in stat_names]
        names += [f"angle{b}.present" for b in _bin_labels()]
        return cls(tuple(names))


TRIP_LAYOUT = TripFeatureLayout.default()
BBOX_FEATURES = ("global.bbox_area", "global.bbox_edge_x", "global.bbox_edge_y")


@dataclass
class TripFeatureVector:
    values: np.ndarray
    layout: TripFeatureLayout = TRIP_LAYOUT
    driver_id: str = ""
    trip_id: str = ""

    def __post_init__(self):
        if len(self.values) != self.layout.dimension:
            raise ValueError(f"vector has {len(self.values)} entries, layout {self.layout.dimension}")


def _seven(x: np.ndarray) -> np.ndarray:
    """Seven statistics of each row of a (5, n) array, feature-major."""
    return _stats_sorted(np.sort(x, axis=1)).T.reshape(-1)


def _single_rate_features(points: np.ndarray, dt: float) -> np.ndarray:
    traj = Trajectory(points, dt)
    bf = basic_features(traj).values
    duration = (len(points) - 1) * dt
    if duration <= 0:
        raise ValueError("degenerate trip with zero duration")
    steps = np.diff(points, axis=0)
    length = float(np.hypot(steps[:, 0], steps[:, 1]).sum())
    edge_x = float(points[:, 0].max() - points[:, 0].min())
    edge_y = float(points[:, 1].max() - points[:, 1].min())
    glob = np.concatenate([_seven(bf), [duration, length, length / duration,
                                        edge_x * edge_y, edge_x, edge_y]])
    # turning angle at each column, degrees in [0, 180]
    angle = np.degrees(bf[4] * dt)
    nb = len(ANGLE_BINS) - 1
    which = np.clip(np.searchsorted(ANGLE_BINS, angle, side="right") - 1, 0, nb - 1)
    local = np.zeros(nb * 35)
    present = np.zeros(nb)
    for b in range(nb):
        sel = which == b
        if sel.any():
            local[b * 35:(b + 1) * 35] = _seven(bf[:, sel])
            present[b] = 1.0
    return np.concatenate([glob, local, present])


def trip_features(traj: Trajectory, rates=DOWNSAMPLE_RATES, combine: str = "mean") -> TripFeatureVector:
    """Handcrafted trip features computed at each downsampling rate.

    Rate k keeps every k-th point. ``combine="mean"`` averages the per-rate
    vectors; ``"concat"`` concatenates them. Rates leaving fewer than 8 points
    are skipped.
    """
    per_rate = []
    for k in rates:
        sub = traj.points[::k]
        if len(sub) < 8:
            continue
        per_rate.append(_single_rate_features(sub, traj.sample_interval * k))
    if not per_rate:
        raise ValueError("trip too short for any downsampling rate")
    if combine == "mean":
        return TripFeatureVector(np.mean(per_rate, axis=0), TRIP_LAYOUT, traj.driver_id, traj.trip_id)
    if combine == "concat":
        if len(per_rate) != len(rates):
            raise ValueError("trip too short for concatenated features at every rate")
        names = tuple(f"r{k}.{n}" for k in rates for n in TRIP_LAYOUT.names)
        return TripFeatureVector(np.concatenate(per_rate), TripFeatureLayout(names),
                                 traj.driver_id, traj.trip_id)
    raise ValueError(f"unknown combine mode {combine!r}")


def write_trip_features_csv(vectors: list[TripFeatureVector], path):
    if not vectors:
        raise ValueError("no vectors to write")
    layout = vectors[0].layout
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["driver_id", "trip_id", *layout.names])
        for v in vectors:
            w.writerow([v.driver_id, v.trip_id, *(repr(float(x)) for x in v.values)])


# --- trees -------------------------------------------------------------------

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            n = node[active]
            go_left = x[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"value": float(self.value[i])}
        return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                "left": self.to_dict(int(self.left[i])), "right": self.to_dict(int(self.right[i]))}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feat, thr, left, right, val = [], [], [], [], []

        def add(node):
            i = len(feat)
            feat.append(-1), thr.append(0.0), left.append(-1), right.append(-1), val.append(0.0)
            if "value" in node:
                val[i] = node["value"]
            else:
                feat[i], thr[i] = node["feature"], node["threshold"]
                left[i] = add(node["left"])
                right[i] = add(node["right"])
            return i

        add(d)
        return cls(np.array(feat), np.array(thr, float), np.array(left), np.array(right),
                   np.array(val, float))


def _best_split(x, order, members, r, min_leaf):
    """Exact greedy variance-reduction split over all features for one node.

    ``order`` is the per-feature argsort of the full training matrix, shape
    (d, n). Returns ``(gain, feature, threshold)`` or ``None``.
    """
    d = order.shape[0]
    c = int(members.sum())
    if c < 2 * min_leaf:
        return None
    sel = order[members[order]].reshape(d, c)
    xs = x[sel, np.arange(d)[:, None]]
    cum = np.cumsum(r[sel], axis=1)
    total = cum[:, -1:]
    n_left = np.arange(1, c, dtype=np.float64)
    gl = cum[:, :-1]
    gain = gl ** 2 / n_left + (total - gl) ** 2 / (c - n_left) - total ** 2 / c
    valid = xs[:, :-1] < xs[:, 1:]
    if min_leaf > 1:
        valid[:, :min_leaf - 1] = False
        valid[:, c - min_leaf:] = False
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    j, i = divmod(flat, c - 1)
    best = gain[j, i]
    if not np.isfinite(best) or best <= 1e-12 * max(1.0, float(total[0, 0]) ** 2 / c):
        return None
    lo, hi = xs[j, i], xs[j, i + 1]
    thr = lo + (hi - lo) / 2
    if not lo <= thr < hi:
        thr = lo
    return float(best), j, float(thr)


def _fit_tree(x, order, r, hess, max_depth, min_leaf, leaf_scale):
    n = len(x)
    feat, thr, left, right, val = [], [], [], [], []

    def leaf_value(members):
        den = hess[members].sum()
        num = r[members].sum()
        return leaf_scale * num / den if den > 1e-12 else 0.0

    def grow(members, depth):
        i = len(feat)
        feat.append(-1), thr.append(0.0), left.append(-1), right.append(-1), val.append(0.0)
        split = _best_split(x, order, members, r, min_leaf) if depth < max_depth else None
        if split is None:
            val[i] = leaf_value(members)
            return i
        _, j, t = split
        go_left = members & (x[:, j] <= t)
        feat[i], thr[i] = j, t
        left[i] = grow(go_left, depth + 1)
        right[i] = grow(members & ~go_left, depth + 1)
        return i

    grow(np.ones(n, dtype=bool), 0)
    return Tree(np.array(feat), np.array(thr, float), np.array(left), np.array(right),
                np.array(val, float))


@dataclass
class GbdtModel:
    num_classes: int
    shrinkage: float
    max_depth: int
    trees: list = field(default_factory=list)   # trees[round][class]
    train_loss: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return len(self.trees)

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        f = np.zeros((len(x), self.num_classes))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                f[:, k] += self.shrinkage * tree.predict(x)
        return f

    def to_json(self) -> str:
        doc = {"format": GBDT_FORMAT, "version": GBDT_VERSION, "num_classes": self.num_classes,
               "shrinkage": self.shrinkage, "max_depth": self.max_depth,
               "train_loss": self.train_loss, "meta": self.meta,
               "trees": [[t.to_dict() for t in rt] for rt in self.trees]}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        if doc.get("format") != GBDT_FORMAT:
            raise ValueError("not a boosted-tree model file")
        if doc.get("version") != GBDT_VERSION:
            raise ValueError(f"unsupported boosted-tree model version {doc.get('version')}")
        return cls(doc["num_classes"], doc["shrinkage"], doc["max_depth"],
                   [[Tree.from_dict(t) for t in rt] for rt in doc["trees"]],
                   doc.get("train_loss", []), doc.get("meta", {}))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GbdtModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _softmax(f):
    z = f - f.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(p, y):
    return float(-np.log(np.maximum(p[np.arange(len(y)), y], 1e-300)).mean())


def gbdt_train(x, y, max_depth: int = 6, rounds: int = 50, shrinkage: float = 0.1,
               num_classes: int | None = None, min_samples_leaf: int = 1) -> GbdtModel:
    """Multiclass softmax gradient boosting with one regression tree per class per round.

    Trees are grown by exact greedy variance reduction on the pseudo-residuals
    ``onehot - p``; leaves take the one-step Newton value
    ``(K-1)/K * sum(r) / sum(|r|(1-|r|))``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be (n, d) with one label per row")
    k = int(num_classes if num_classes is not None else y.max() + 1)
    if k < 2:
        raise ValueError("need at least 2 classes")
    if y.min() < 0 or y.max() >= k:
        raise ValueError("labels out of range")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    order = np.argsort(x, axis=0, kind="stable").T.copy()
    onehot = np.eye(k)[y]
    model = GbdtModel(k, shrinkage, max_depth)
    f = np.zeros((len(x), k))
    p = _softmax(f)
    model.train_loss.append(_cross_entropy(p, y))
    for _ in range(rounds):
        round_trees = []
        for c in range(k):
            r = onehot[:, c] - p[:, c]
            hess = np.abs(r) * (1.0 - np.abs(r))
            round_trees.append(_fit_tree(x, order, r, hess, max_depth, min_samples_leaf, (k - 1) / k))
        for c, tree in enumerate(round_trees):
            f[:, c] += shrinkage * tree.predict(x)
        p = _softmax(f)
        model.trees.append(round_trees)
        model.train_loss.append(_cross_entropy(p, y))
    return model


def gbdt_predict(model: GbdtModel, x) -> np.ndarray:
    """Class probabilities; a single vector gives a single probability vector."""
    x = np.asarray(x, dtype=np.float64)
    p = _softmax(model.decision_function(x))
    return p[0] if x.ndim == 1 else p
