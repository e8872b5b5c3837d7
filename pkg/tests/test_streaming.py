import numpy as np
import pytest

from conftest import circle_trip
from drivestyle.evaluation import aggregate_trip, predict_segments
from drivestyle.geodata import Trajectory
from drivestyle.models import build_cnn, build_stacked_irnn
from drivestyle.streaming import StreamingPredictor, stream_points
from drivestyle.transform import TransformConfig, transform_trip

CFG = TransformConfig(64, 4)


@pytest.fixture(scope="module")
def model():
    m = build_stacked_irnn((35, 32), 4, hidden=8, seed=3)
    for layer in m.layers[:2]:
        layer.params["W_in"] *= 300
    m.norm = (np.zeros(35), np.ones(35) * 3.0)
    return m


def wiggly_trip(n, seed=0):
    rng = np.random.default_rng(seed)
    heading = np.cumsum(rng.normal(0, 0.2, n))
    speed = 8 + np.cumsum(rng.normal(0, 0.3, n)).clip(-6, 6)
    pts = np.cumsum(np.c_[speed * np.cos(heading), speed * np.sin(heading)], axis=0)
    pts[40:46] = pts[39]  # a stop, so carried headings matter
    return Trajectory(pts - pts[0])


def test_six_segments_six_emissions(model):
    n = 3 + 64 + 5 * 32  # exactly six segments
    traj = wiggly_trip(n)
    batch = transform_trip(traj, CFG)
    assert len(batch) == 6
    emissions = stream_points(model, traj.points, CFG)
    assert [e.segments for e in emissions] == [1, 2, 3, 4, 5, 6]
    probs = predict_segments(model, batch)
    for k, e in enumerate(emissions, start=1):
        assert np.array_equal(e.scores, aggregate_trip(probs[:k]))
    assert emissions[-1].top1 == int(np.argmax(aggregate_trip(probs)))


def test_single_segment(model):
    traj = wiggly_trip(3 + 64 + 10, seed=2)
    [e] = stream_points(model, traj.points, CFG)
    seg = predict_segments(model, transform_trip(traj, CFG))[0]
    assert np.array_equal(e.scores, seg)
    assert e.top1 == int(seg.argmax())


def test_insufficient_data(model):
    [e] = stream_points(model, wiggly_trip(50).points, CFG)
    assert e.insufficient
    assert e.to_dict()["status"] == "insufficient data"
    assert "insufficient" in e.to_line()


def test_emit_every_and_flush(model):
    traj = wiggly_trip(3 + 64 + 4 * 32)  # five segments
    emissions = stream_points(model, traj.points, CFG, emit_every=2)
    assert [e.segments for e in emissions] == [2, 4, 5]
    with pytest.raises(ValueError):
        StreamingPredictor(model, CFG, emit_every=0)


def test_labels_and_cnn_model():
    cnn = build_cnn((35, 32), 3, seed=1)
    traj = circle_trip(200, 150.0, 6.0)
    out = stream_points(cnn, traj.points, CFG, labels=["a", "b", "c"])
    last = out[-1].to_dict()
    assert last["top1_driver"] in ("a", "b", "c")
    assert len(last["top5_drivers"]) == 3
    probs = predict_segments(cnn, transform_trip(traj, CFG))
    assert np.array_equal(out[-1].scores, aggregate_trip(probs))
