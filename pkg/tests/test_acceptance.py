"""End-to-end acceptance criteria, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import math
import statistics
import time

import numpy as np

from conftest import line_trip
from drivestyle.baseline import gbdt_train, trip_features
from drivestyle.cli import main
from drivestyle.evaluation import split_dataset
from drivestyle.geodata import Trajectory, write_dataset
from drivestyle.models import (build_cnn, build_irnn, build_nopool_cnn, build_pretrain_irnn, top_activations)
from drivestyle.nn import (Conv1D, Dense, Flatten, MaxPool1D, Model, RecurrentReLU, Sigmoid, Softmax,
                           gradient_check, input_gradient_check, recurrent_relu_step)
from drivestyle.streaming import stream_points
from drivestyle.transform import TransformConfig, frame_stats, transform_trip


def test_criterion_01_transform_conformance():
    for n, count in ((259, 1), (1003, 6)):
        traj = Trajectory(np.cumsum(np.random.default_rng(n).normal(0, 5, (n, 2)), axis=0))
        t0 = time.perf_counter()
        ms = transform_trip(traj)
        elapsed = time.perf_counter() - t0
        assert len(ms) == count
        assert all(m.values.shape == (35, 128) for m in ms)
        assert elapsed < 1.0
    assert transform_trip(line_trip(258)) == []


def reference_seven(frame):
    s = sorted(frame)
    n = len(s)
    out = [sum(s) / n, s[0], s[-1]]
    for p in (0.25, 0.5, 0.75):
        h = (n - 1) * p
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        out.append(s[lo] + (h - lo) * (s[hi] - s[lo]))
    out.append(statistics.pstdev(frame))
    return out


def test_criterion_02_statistics_oracle(record_property):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    checked = 0
    worst = 0.0
    for ls, lf, segments in ((256, 4, 16), (64, 16, 8), (32, 2, 2)):
        cfg = TransformConfig(ls, lf)
        for _ in range(segments):
            x = rng.normal(0, 10, (5, ls)) * rng.uniform(0.01, 10)
            m = frame_stats(x, cfg).values.reshape(5, 7, -1)
            half = lf // 2
            for f in range(5):
                for i in range(cfg.n_frames):
                    ref = reference_seven(x[f, i * half:i * half + lf].tolist())
                    worst = max(worst, float(np.max(np.abs(m[f, :, i] - ref))))
                    checked += 1
    record_property("detail", f"{checked} frames, max abs err {worst:.1e}")
    assert checked >= 10_000
    assert worst <= 1e-12
    assert time.perf_counter() - t0 < 10


def test_criterion_03_geometry_invariance():
    rng = np.random.default_rng(3)
    for trial in range(5):
        steps = rng.normal(0, 6, (700, 2))
        pts = np.round(np.cumsum(steps, axis=0) * 16) / 16      # 1/16 m grid, exact in binary
        base = transform_trip(Trajectory(pts))
        assert len(base) == 4
        # exact translations: offsets on the same grid keep every coordinate representable
        offset = rng.integers(-10**6, 10**6, 2) + rng.integers(0, 16, 2) / 16
        moved = transform_trip(Trajectory(pts + offset))
        assert all(np.array_equal(a.values, b.values) for a, b in zip(base, moved))
        # rotations
        angle = rng.uniform(0, 2 * math.pi)
        c, s = math.cos(angle), math.sin(angle)
        rotated = transform_trip(Trajectory(pts @ np.array([[c, s], [-s, c]])))
        for a, b in zip(base, rotated):
            assert np.max(np.abs(a.values - b.values)) <= 1e-9
        # an arbitrary real offset rounds the coordinates themselves; entries agree to 1e-9
        real = transform_trip(Trajectory(pts + rng.uniform(-1e4, 1e4, 2)))
        for a, b in zip(base, real):
            assert np.max(np.abs(a.values - b.values)) <= 1e-9


def _gc_models():
    r = np.random.default_rng(4)
    return {
        "conv1d": (Model([Conv1D(3, 4, 3, rng=r), Flatten(), Dense(4 * 8, 3, rng=r), Softmax()], (3, 10), 3),
                   r.normal(size=(3, 10))),
        "maxpool1d": (Model([MaxPool1D(2), Flatten(), Dense(3 * 5, 3, rng=r), Softmax()], (3, 10), 3),
                      r.normal(size=(3, 10))),
        "dense+sigmoid": (Model([Flatten(), Dense(12, 6, rng=r), Sigmoid(), Dense(6, 3, rng=r), Softmax()],
                                (3, 4), 3), r.normal(size=(3, 4))),
        "recurrent_relu": (Model([RecurrentReLU(3, 5, return_sequences=True, rng=r, input_std=0.5),
                                  RecurrentReLU(5, 4, rng=r, input_std=0.5), Dense(4, 3, rng=r), Softmax()],
                                 (3, 12), 3), r.normal(size=(3, 12)) + 0.5),
        "softmax+cross-entropy": (Model([Flatten(), Dense(6, 3, rng=r), Softmax()], (2, 3), 3),
                                  r.normal(size=(2, 3))),
    }


def test_criterion_04_gradient_checks(record_property):
    t0 = time.perf_counter()
    results = {}
    for name, (model, x) in _gc_models().items():
        for label in range(3):
            err = max(gradient_check(model, x, label, step=1e-5),
                      input_gradient_check(model, x, label, step=1e-5))
            results[name] = max(results.get(name, 0.0), err)
    record_property("detail", "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in results.items()))
    assert all(err < 1e-4 for err in results.values()), results
    assert time.perf_counter() - t0 < 60


def test_criterion_05_architecture_shapes():
    cnn = build_cnn((35, 128), 50)
    extents = [s[1] for i, s in enumerate(cnn.shapes()) if cnn.layers[i].kind in ("conv1d", "maxpool1d")]
    assert [128] + extents == [128, 124, 62, 60, 30, 28]
    assert cnn.shapes()[8] == (1792,)
    nopool = build_nopool_cnn((35, 128), 50)
    assert (7680,) in nopool.shapes()
    pre = build_pretrain_irnn(cnn)
    rec = pre.layers[8]
    assert rec.kind == "recurrent_relu" and rec.in_features == 64 and pre.shapes()[7] == (64, 28)
    irnn = build_irnn((35, 128), 50)
    assert np.array_equal(irnn.layers[0].params["W_hh"], np.eye(100))


def test_criterion_06_synthetic_identification(trained, record_property):
    acc = {k: r.metrics["trip_accuracy"] for k, r in trained.reports.items()}
    record_property("detail", "trip accuracy " + ", ".join(f"{k}={v:.3f}" for k, v in acc.items()) +
                    f"; training {sum(trained.seconds.values()):.0f}s")
    assert acc["cnn"] >= 0.80
    assert acc["stacked-irnn"] >= 0.80
    assert acc["gbdt"] >= 0.50
    assert sum(trained.seconds.values()) < 15 * 60


def test_criterion_07_vote_consistency(trained):
    trips = {(t.driver_id, t.trip_id): t for t in trained.ds.all_trips()}
    checked = 0
    for name, report in trained.reports.items():
        m = report.metrics
        assert m["trip_top5_accuracy"] >= m["trip_accuracy"]
        model = trained.models[name]
        for entry in report.trips:
            traj = trips[(entry["driver_id"], entry["trip_id"])]
            final = stream_points(model, traj.points, TransformConfig())[-1]
            assert final.scores.tolist() == entry["scores"]
            checked += 1
    assert checked == 3 * 40


def test_criterion_08_boosting_sanity(synthetic):
    ds = synthetic[0]
    split = split_dataset(ds, 0.8, 0)
    trips = {(t.driver_id, t.trip_id): t for t in ds.all_trips()}
    keys = [(d, t) for d in ds.drivers for t in split.train[d]]
    x = np.stack([trip_features(trips[k]).values for k in keys])
    y = [ds.label_of(d) for d, _ in keys]
    for depth in (6, 20):
        model = gbdt_train(x, y, max_depth=depth, rounds=50)
        loss = np.array(model.train_loss)
        assert len(loss) == 51
        assert np.all(np.diff(loss) <= 0)
        assert max(t.depth() for rnd in model.trees for t in rnd) <= depth


def test_criterion_09_determinism(synthetic, tmp_path, capsys):
    data = tmp_path / "data"
    write_dataset(synthetic[0], data)
    runs = {
        "cnn": ["--epochs", "1", "--batch-size", "32"],
        "nopoolcnn": ["--epochs", "1", "--batch-size", "32"],
        "irnn": ["--epochs", "1", "--batch-size", "32", "--hidden", "16"],
        "pretrain-irnn": ["--epochs", "1", "--cnn-epochs", "1", "--batch-size", "32", "--hidden", "16"],
        "stacked-irnn": ["--epochs", "1", "--batch-size", "32", "--hidden", "16", "--lr", "1e-4"],
        "gbdt": ["--rounds", "2", "--depth", "3"],
        "tripgbdt": ["--rounds", "5", "--depth", "6"],
    }
    for method, extra in runs.items():
        snapshots, printed = [], []
        for _ in range(2):
            out = tmp_path / method
            assert main(["train", "--method", method, "--data", str(data), "--out", str(out), "--seed", "7",
                         *extra]) == 0
            snapshots.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()})
            model = next(p for p in out.iterdir() if p.name.startswith("model."))
            capsys.readouterr()
            assert main(["evaluate", "--model", str(model), "--data", str(data), "--json"]) == 0
            printed.append(capsys.readouterr().out)
        assert snapshots[0] == snapshots[1], method
        assert printed[0] == printed[1], method
        assert set(snapshots[0]) >= {"report.json", "report.txt", "config.json"}


def oracle_final_states(model, matrices):
    """Final hidden state of the second recurrent layer, stepping each segment by hand."""
    l1, l2 = model.layers[0], model.layers[1]
    finals = []
    for m in matrices:
        x = model.standardize(m.values)
        h1 = np.zeros(l1.units)
        seq = []
        for t in range(x.shape[1]):
            h1 = recurrent_relu_step(x[:, t], h1, l1.params["W_in"], l1.params["W_hh"], l1.params["b"])
            seq.append(h1)
        h2 = np.zeros(l2.units)
        for s in seq:
            h2 = recurrent_relu_step(s, h2, l2.params["W_in"], l2.params["W_hh"], l2.params["b"])
        finals.append(h2)
    return np.array(finals)


def test_criterion_10_inspection(trained, record_property):
    model = trained.models["stacked-irnn"]
    trips = {(t.driver_id, t.trip_id): t for t in trained.ds.all_trips()}
    matrices = []
    for d in trained.ds.drivers:
        for t in trained.split.train[d]:
            matrices += transform_trip(trips[(d, t)])
    top = top_activations(model, matrices, k=5)
    assert len(top) == 100
    finals = oracle_final_states(model, matrices)
    for j, row in enumerate(top):
        assert len(row) == 5
        acts = [a for _, a in row]
        assert acts == sorted(acts, reverse=True)
        want = sorted(range(len(matrices)), key=lambda i: (-finals[i, j], i))[:5]
        assert [i for i, _ in row] == want
        np.testing.assert_allclose(acts, finals[want, j], rtol=1e-10, atol=1e-12)
    active = sum(1 for row in top if row[0][1] > 0)
    record_property("detail", f"{len(matrices)} segments, {active}/100 neurons with positive top activation")
    assert active > 0
