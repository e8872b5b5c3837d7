"""Trip loading, validation and synthetic trip generation.

Trips follow the public telematics layout: ``root/<driver_id>/<trip_id>.csv``
with a ``x,y`` header and one planar position (meters) per second.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_POINTS = 8


class TrajectoryError(ValueError):
    """Raised for malformed or invalid trip data."""


@dataclass(frozen=True)
class Trajectory:
    points: np.ndarray
    sample_interval: float = 1.0
    driver_id: str = ""
    trip_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise TrajectoryError(f"points must have shape (T, 2), got {pts.shape}")
        if len(pts) < MIN_POINTS:
            raise TrajectoryError(
                f"trip {self.trip_id!r} has {len(pts)} points, need at least {MIN_POINTS}")
        if not np.all(np.isfinite(pts)):
            raise TrajectoryError(f"trip {self.trip_id!r} has non-finite coordinates")
        if not (self.sample_interval > 0 and math.isfinite(self.sample_interval)):
            raise TrajectoryError("sample_interval must be a positive finite number")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def with_points(self, points) -> "Trajectory":
        return Trajectory(points, self.sample_interval, self.driver_id, self.trip_id)


@dataclass
class Dataset:
    trips: dict[str, list[Trajectory]]
    drivers: list[str]

    def __post_init__(self):
        missing = set(self.trips) - set(self.drivers)
        if missing:
            raise ValueError(f"trips reference unknown drivers: {sorted(missing)}")

    def label_of(self, driver_id: str) -> int:
        return self.drivers.index(driver_id)

    def all_trips(self):
        for d in self.drivers:
            yield from self.trips.get(d, [])

    def __len__(self):
        return sum(len(v) for v in self.trips.values())


@dataclass(frozen=True)
class DriverPersona:
    cruise_speed: float
    accel_aggressiveness: float
    corner_slowdown: float
    jerk_noise: float
    turn_rate_preference: float

    def __post_init__(self):
        vals = [self.cruise_speed, self.accel_aggressiveness, self.corner_slowdown,
                self.jerk_noise, self.turn_rate_preference]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("persona fields must be finite")
        if self.cruise_speed <= 0:
            raise ValueError("cruise_speed must be positive")
        if not 0.0 <= self.corner_slowdown <= 1.0:
            raise ValueError("corner_slowdown must lie in [0, 1]")
        if self.accel_aggressiveness <= 0 or self.turn_rate_preference <= 0:
            raise ValueError("accel_aggressiveness and turn_rate_preference must be positive")
        if self.jerk_noise < 0:
            raise ValueError("jerk_noise must be non-negative")


@dataclass
class ValidationReport:
    driver_id: str
    trip_id: str
    sample_interval: float
    rate: float
    min_rate: float
    num_points: int
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        return {"driver_id": self.driver_id, "trip_id": self.trip_id,
                "sample_interval": self.sample_interval, "rate": self.rate,
                "min_rate": self.min_rate, "num_points": self.num_points,
                "passed": self.passed, "flags": list(self.flags)}

    def to_line(self) -> str:
        status = "ok" if self.passed else "FLAGGED " + ",".join(self.flags)
        return (f"{self.driver_id}/{self.trip_id}: {self.num_points} points, "
                f"{self.rate:g} Hz (min {self.min_rate:g}) {status}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _parse_number(text: str, lineno: int, path) -> float:
    try:
        v = float(text)
    except ValueError:
        raise TrajectoryError(f"{path}:{lineno}: cannot parse {text.strip()!r} as a number") from None
    if not math.isfinite(v):
        raise TrajectoryError(f"{path}:{lineno}: non-finite value {text.strip()!r}")
    return v


def parse_trip_lines(lines, driver_id="", trip_id="", source="<stream>") -> Trajectory:
    """Parse an iterable of CSV lines (header first) into a Trajectory."""
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise TrajectoryError(f"{source}: empty file") from None
    cols = [c.strip() for c in header.strip().split(",")]
    if cols not in (["x", "y"], ["x", "y", "t"]):
        raise TrajectoryError(f"{source}:1: expected header 'x,y' or 'x,y,t', got {header.strip()!r}")
    ncol = len(cols)
    rows = []
    for lineno, line in enumerate(it, start=2):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != ncol:
            raise TrajectoryError(f"{source}:{lineno}: expected {ncol} fields, got {len(parts)}")
        rows.append([_parse_number(p, lineno, source) for p in parts])
    if len(rows) < MIN_POINTS:
        raise TrajectoryError(f"{source}: {len(rows)} points, need at least {MIN_POINTS}")
    arr = np.array(rows, dtype=np.float64)
    interval = 1.0
    if ncol == 3:
        dt = np.diff(arr[:, 2])
        if not np.all(dt == dt[0]) or dt[0] <= 0:
            raise TrajectoryError(f"{source}: timestamps in column 't' are not uniform")
        interval = float(dt[0])
    return Trajectory(arr[:, :2], interval, str(driver_id), str(trip_id))


def load_trip(path, driver_id="", trip_id=None) -> Trajectory:
    path = Path(path)
    if trip_id is None:
        trip_id = path.stem
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trip_lines(fh, driver_id, trip_id, source=str(path))


def save_trip(traj: Trajectory, path, decimals: int | None = None):
    """Write a trip in the ``x,y`` layout.

    With ``decimals=None`` values are written with the shortest round-trip
    representation, so loading the file back is bit-exact.
    """
    fmt = repr if decimals is None else (lambda v: f"{v:.{decimals}f}")
    lines = ["x,y"]
    if traj.sample_interval != 1.0:
        lines = ["x,y,t"]
        for i, (x, y) in enumerate(traj.points):
            lines.append(f"{fmt(float(x))},{fmt(float(y))},{fmt(i * traj.sample_interval)}")
    else:
        lines.extend(f"{fmt(float(x))},{fmt(float(y))}" for x, y in traj.points)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _trip_sort_key(name: str):
    # numeric trip ids sort numerically, others lexicographically after them
    stem = Path(name).stem
    return (0, int(stem), "") if stem.isdigit() else (1, 0, stem)


def load_dataset(root) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    driver_dirs = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not driver_dirs:
        raise TrajectoryError(f"dataset root {root} contains no driver directories")
    trips = {}
    for d in driver_dirs:
        files = sorted((f for f in os.listdir(root / d) if f.endswith(".csv")), key=_trip_sort_key)
        if not files:
            raise TrajectoryError(f"driver directory {root / d} has no trip files")
        trips[d] = [load_trip(root / d / f, driver_id=d) for f in files]
    return Dataset(trips=trips, drivers=driver_dirs)


def validate_sampling(traj: Trajectory, min_rate: float = 0.1,
                      segment_length: int | None = 256) -> ValidationReport:
    """Check the effective sampling rate and, optionally, whether the trip fills one segment."""
    rate = 1.0 / traj.sample_interval
    flags = []
    if rate < min_rate:
        flags.append("low_rate")
    if segment_length is not None and len(traj) - 3 < segment_length:
        flags.append("shorter_than_segment")
    return ValidationReport(traj.driver_id, traj.trip_id, traj.sample_interval, rate,
                            min_rate, len(traj), flags)


# --- synthetic data -------------------------------------------------------

CORNER_ANGLE = math.radians(30.0)


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def synth_trip(persona: DriverPersona, route, duration: int, seed: int,
               driver_id: str = "", trip_id: str = "") -> Trajectory:
    """Simulate a point-mass vehicle driving ``route`` at 1 Hz.

    The vehicle steers toward the next waypoint at no more than the persona's
    turn rate, brakes ahead of corners sharper than 30 degrees, and clamps its
    longitudinal acceleration to ``accel_aggressiveness``. Past the final
    waypoint it keeps its heading.
    """
    route = np.asarray(route, dtype=np.float64)
    if route.ndim != 2 or route.shape[1] != 2 or len(route) < 2:
        raise ValueError("route needs at least 2 waypoints of shape (n, 2)")
    if duration < MIN_POINTS:
        raise ValueError(f"duration must be at least {MIN_POINTS} s")
    legs = np.diff(route, axis=0)
    if np.any(np.hypot(legs[:, 0], legs[:, 1]) < 1e-9):
        raise ValueError("route has coincident consecutive waypoints")

    rng = np.random.default_rng(seed)
    headings = np.arctan2(legs[:, 1], legs[:, 0])
    # corner sharpness at each interior waypoint
    turn = np.zeros(len(route))
    turn[1:-1] = np.abs(_wrap_arr(np.diff(headings)))

    a_max = persona.accel_aggressiveness
    omega_max = persona.turn_rate_preference
    corner_speed = persona.cruise_speed * (1.0 - persona.corner_slowdown)

    pos = route[0].copy()
    heading = float(headings[0])
    speed = 0.0
    target = 1
    out = np.empty((duration, 2))
    out[0] = pos
    for t in range(1, duration):
        if target < len(route):
            d = route[target] - pos
            dist = math.hypot(d[0], d[1])
            capture = max(2.0 * speed / omega_max, 1.5 * speed, 1.0)
            if dist < capture:
                target += 1
        v_goal = persona.cruise_speed
        if target < len(route):
            d = route[target] - pos
            dist = math.hypot(d[0], d[1])
            if target < len(route) - 1 and turn[target] > CORNER_ANGLE:
                # speed from which we can still brake to corner speed
                v_goal = min(v_goal, math.sqrt(corner_speed ** 2 + 2.0 * a_max * dist))
            desired = math.atan2(d[1], d[0])
            dh = _wrap(desired - heading)
            heading = _wrap(heading + max(-omega_max, min(omega_max, dh)))
        acc = v_goal - speed
        if persona.jerk_noise > 0:
            acc += rng.normal(0.0, persona.jerk_noise)
        acc = max(-a_max, min(a_max, acc))
        speed = max(0.0, speed + acc)
        pos = pos + speed * np.array([math.cos(heading), math.sin(heading)])
        out[t] = pos
    out -= out[0]
    return Trajectory(out, 1.0, str(driver_id), str(trip_id))


def _wrap_arr(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def random_route(rng: np.random.Generator, n_legs: int = 12, min_leg=150.0, max_leg=600.0):
    """A random polyline of ``n_legs`` legs with a mix of gentle and sharp turns."""
    pts = [np.zeros(2)]
    heading = rng.uniform(-np.pi, np.pi)
    for _ in range(n_legs):
        if rng.random() < 0.5:
            heading += rng.uniform(-0.3, 0.3)
        else:
            heading += rng.choice([-1, 1]) * rng.uniform(np.pi / 4, 2 * np.pi / 3)
        length = rng.uniform(min_leg, max_leg)
        pts.append(pts[-1] + length * np.array([np.cos(heading), np.sin(heading)]))
    return np.array(pts)


def random_personas(n: int, rng: np.random.Generator) -> list[DriverPersona]:
    """Draw ``n`` personas whose cruise speeds are stratified so drivers stay distinct."""
    order = rng.permutation(n)
    lo, hi = 8.0, 30.0
    width = (hi - lo) / n
    personas = []
    for i in range(n):
        cruise = lo + width * (order[i] + rng.uniform(0.2, 0.8))
        personas.append(DriverPersona(
            cruise_speed=float(cruise),
            accel_aggressiveness=float(rng.uniform(0.8, 4.0)),
            corner_slowdown=float(rng.uniform(0.2, 0.8)),
            jerk_noise=float(rng.uniform(0.05, 0.6)),
            turn_rate_preference=float(rng.uniform(0.15, 0.6)),
        ))
    return personas


def synth_dataset(n_drivers: int, trips_per_driver: int, seed: int,
                  min_duration: int = 500, max_duration: int = 900) -> tuple[Dataset, list[DriverPersona]]:
    """Generate an in-memory dataset of synthetic drivers."""
    rng = np.random.default_rng(seed)
    personas = random_personas(n_drivers, rng)
    width = len(str(n_drivers))
    drivers = [str(i + 1).zfill(width) for i in range(n_drivers)]
    trips = {}
    for d, persona in zip(drivers, personas):
        trips[d] = []
        for j in range(trips_per_driver):
            route = random_route(rng)
            duration = int(rng.integers(min_duration, max_duration + 1))
            # small per-trip variation of the persona's cruise speed
            p = DriverPersona(persona.cruise_speed * float(rng.uniform(0.95, 1.05)),
                              persona.accel_aggressiveness, persona.corner_slowdown,
                              persona.jerk_noise, persona.turn_rate_preference)
            trips[d].append(synth_trip(p, route, duration, int(rng.integers(2**31)),
                                       driver_id=d, trip_id=str(j + 1)))
    return Dataset(trips=trips, drivers=drivers), personas


def write_dataset(ds: Dataset, root, decimals: int | None = None):
    root = Path(root)
    for d in ds.drivers:
        (root / d).mkdir(parents=True, exist_ok=True)
        for traj in ds.trips[d]:
            save_trip(traj, root / d / f"{traj.trip_id}.csv", decimals=decimals)
