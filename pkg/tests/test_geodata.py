import json

import numpy as np
import pytest

from drivestyle.geodata import (DriverPersona, Trajectory, TrajectoryError, load_dataset, load_trip,
                                random_personas, save_trip, synth_dataset, synth_trip, validate_sampling,
                                write_dataset)
from drivestyle.transform import basic_features


def write(path, text):
    path.write_text(text)
    return path


def test_load_trip_parses_rows(tmp_path):
    rows = "\n".join(f"{i},0" for i in range(10))
    traj = load_trip(write(tmp_path / "1.csv", "x,y\n" + rows + "\n"), driver_id="7")
    assert len(traj) == 10
    assert traj.sample_interval == 1.0
    assert traj.trip_id == "1" and traj.driver_id == "7"
    np.testing.assert_array_equal(traj.points[:, 0], np.arange(10))


def test_load_trip_origin_at_zero(tmp_path):
    text = "x,y\n0.0,0.0\n" + "\n".join(f"{1.5 * i},{-0.5 * i}" for i in range(1, 12))
    traj = load_trip(write(tmp_path / "t.csv", text))
    assert tuple(traj.points[0]) == (0.0, 0.0)


def test_load_trip_bad_row_names_line(tmp_path):
    text = "x,y\n" + "\n".join(f"{i},0" for i in range(5)) + "\na,b\n" + "\n".join(f"{i},0" for i in range(5))
    with pytest.raises(TrajectoryError, match=r":7:"):
        load_trip(write(tmp_path / "t.csv", text))


@pytest.mark.parametrize("text", [
    "x,y\n" + "\n".join(f"{i},0" for i in range(7)),           # too short
    "x,y\n" + "\n".join(f"{i},0" for i in range(9)) + "\nnan,1",  # non-finite
    "lat,lon\n" + "\n".join(f"{i},0" for i in range(9)),        # bad header
])
def test_load_trip_rejects(tmp_path, text):
    with pytest.raises(TrajectoryError):
        load_trip(write(tmp_path / "t.csv", text))


def test_optional_time_column(tmp_path):
    good = "x,y,t\n" + "\n".join(f"{i},0,{2 * i}" for i in range(9))
    assert load_trip(write(tmp_path / "a.csv", good)).sample_interval == 2.0
    bad = "x,y,t\n" + "\n".join(f"{i},0,{i * i}" for i in range(9))
    with pytest.raises(TrajectoryError, match="uniform"):
        load_trip(write(tmp_path / "b.csv", bad))


def test_roundtrip_at_declared_precision(tmp_path):
    text = "x,y\n" + "\n".join(f"{0.1 * i:.1f},{-2.3 * i:.1f}" for i in range(20)) + "\n"
    src = write(tmp_path / "a.csv", text)
    traj = load_trip(src)
    save_trip(traj, tmp_path / "b.csv", decimals=1)
    assert (tmp_path / "b.csv").read_text() == text
    save_trip(traj, tmp_path / "c.csv")
    np.testing.assert_array_equal(load_trip(tmp_path / "c.csv").points, traj.points)


def test_load_dataset_lexicographic(tmp_path):
    for d in ("1", "10", "2"):
        (tmp_path / d).mkdir()
        write(tmp_path / d / "1.csv", "x,y\n" + "\n".join(f"{i},0" for i in range(9)))
    ds = load_dataset(tmp_path)
    assert ds.drivers == ["1", "10", "2"]
    assert ds.label_of("2") == 2
    assert len(ds) == 3


def test_load_dataset_errors(tmp_path):
    with pytest.raises(TrajectoryError):
        load_dataset(tmp_path)
    (tmp_path / "1").mkdir()
    with pytest.raises(TrajectoryError):
        load_dataset(tmp_path)


def test_dataset_on_disk_roundtrip(tmp_path):
    ds, _ = synth_dataset(3, 4, seed=3, min_duration=60, max_duration=80)
    write_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.drivers == ds.drivers
    assert len(back) == 12
    for d in ds.drivers:
        for a, b in zip(ds.trips[d], back.trips[d]):
            assert a.trip_id == b.trip_id
            np.testing.assert_array_equal(a.points, b.points)


@pytest.mark.parametrize("interval,flagged", [(1.0, False), (15.0, True), (10.0, False)])
def test_validate_sampling(interval, flagged):
    traj = Trajectory(np.c_[np.arange(300.0), np.zeros(300)], interval)
    rep = validate_sampling(traj, 0.1)
    assert ("low_rate" in rep.flags) == flagged
    assert json.loads(rep.to_json())["passed"] == (not flagged)


def test_validate_flags_short_trip():
    traj = Trajectory(np.c_[np.arange(100.0), np.zeros(100)])
    assert "shorter_than_segment" in validate_sampling(traj).flags


PERSONA = DriverPersona(cruise_speed=12.0, accel_aggressiveness=2.0, corner_slowdown=0.5,
                        jerk_noise=0.3, turn_rate_preference=0.4)


def test_synth_noiseless_straight_reaches_constant_speed():
    p = DriverPersona(10.0, 2.0, 0.5, 0.0, 0.4)
    traj = synth_trip(p, [(0, 0), (5000, 0)], 200, seed=1)
    speed = basic_features(traj).values[0]
    np.testing.assert_allclose(speed[20:], 10.0, rtol=0, atol=1e-9)


def test_synth_deterministic():
    route = [(0, 0), (300, 0), (300, 300), (0, 300)]
    a = synth_trip(PERSONA, route, 300, seed=5)
    b = synth_trip(PERSONA, route, 300, seed=5)
    np.testing.assert_array_equal(a.points, b.points)
    c = synth_trip(PERSONA, route, 300, seed=6)
    assert not np.array_equal(a.points, c.points)


def test_synth_faster_persona_is_faster():
    route = [(0, 0), (800, 0), (800, 600), (0, 600), (0, 1200)]
    slow = synth_trip(DriverPersona(10, 2, 0.5, 0.2, 0.4), route, 400, seed=2)
    fast = synth_trip(DriverPersona(30, 2, 0.5, 0.2, 0.4), route, 400, seed=2)
    assert basic_features(fast).values[0].mean() > basic_features(slow).values[0].mean()


def test_synth_errors():
    with pytest.raises(ValueError):
        synth_trip(PERSONA, [(0, 0), (0, 0)], 100, seed=0)
    with pytest.raises(ValueError):
        synth_trip(PERSONA, [(0, 0), (10, 0)], 5, seed=0)
    with pytest.raises(ValueError):
        DriverPersona(0.0, 1, 0.5, 0.1, 0.1)
    with pytest.raises(ValueError):
        DriverPersona(10.0, 1, 1.5, 0.1, 0.1)


def test_synth_output_is_valid_and_1hz():
    rng = np.random.default_rng(0)
    for i, p in enumerate(random_personas(8, rng)):
        traj = synth_trip(p, [(0, 0), (400, 0), (400, 400)], 120, seed=i)
        assert validate_sampling(traj, 1.0, segment_length=None).passed
        assert np.all(np.isfinite(traj.points))


def test_personas_distinct_speeds():
    ps = random_personas(5, np.random.default_rng(1))
    speeds = sorted(p.cruise_speed for p in ps)
    assert min(np.diff(speeds)) > 1.0
