import time

import numpy as np
import pytest

from drivestyle.evaluation import ExperimentConfig, run_experiment, split_dataset
from drivestyle.geodata import Trajectory, synth_dataset

# Desk-scale settings used wherever a trained synthetic model is needed.
SYNTH_SEED = 2026
DESK_CONFIGS = {
    "cnn": dict(method="cnn", epochs=30, batch_size=32),
    "stacked-irnn": dict(method="stacked-irnn", epochs=20, batch_size=32, learning_rate=1e-4, clip_norm=1.0),
    "gbdt": dict(method="gbdt", gbdt_rounds=20, gbdt_depth=6),
}

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    entry = _acceptance.setdefault(report.nodeid.split("::")[-1], {"outcome": "passed", "seconds": 0.0,
                                                                   "detail": ""})
    entry["seconds"] += report.duration
    if report.failed:
        entry["outcome"] = "failed"
    for key, value in report.user_properties:
        if key == "detail":
            entry["detail"] = value


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, e in _acceptance.items():
        line = f"{'PASS' if e['outcome'] == 'passed' else 'FAIL':<5} {name}  ({e['seconds']:.1f}s)"
        terminalreporter.write_line(line + (f"  {e['detail']}" if e["detail"] else ""))


def line_trip(n, speed=5.0, direction=(1.0, 0.0), origin=(0.0, 0.0), dt=1.0, **kw):
    d = np.asarray(direction, float)
    d = d / np.hypot(*d)
    t = np.arange(n)[:, None]
    return Trajectory(np.asarray(origin) + speed * dt * t * d, dt, **kw)


def circle_trip(n, radius, speed, dt=1.0):
    w = speed / radius
    t = np.arange(n) * dt
    return Trajectory(np.c_[radius * np.cos(w * t), radius * np.sin(w * t)], dt)


@pytest.fixture(scope="session")
def synthetic():
    ds, personas = synth_dataset(5, 40, SYNTH_SEED)
    return ds, personas


class TrainedRun:
    def __init__(self, ds):
        self.ds = ds
        self.split = split_dataset(ds, 0.8, 0)
        self.reports, self.models, self.seconds = {}, {}, {}
        for name, kw in DESK_CONFIGS.items():
            t0 = time.perf_counter()
            report, model = run_experiment(ExperimentConfig(**kw), dataset=ds)
            self.seconds[name] = time.perf_counter() - t0
            self.reports[name], self.models[name] = report, model


@pytest.fixture(scope="session")
def trained(synthetic):
    return TrainedRun(synthetic[0])
