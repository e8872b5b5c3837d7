"""Double-windowed transformation of trips into statistical feature matrices.

A trip becomes a 5-row series of basic movement features, the series is cut
into overlapping segments of ``ls`` columns, and each segment is framed into
``2 * ls / lf`` overlapping frames summarised by seven statistics, giving a
35-row matrix per segment.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geodata import Trajectory

BASIC_FEATURES = ("speed", "speed_diff", "accel", "accel_diff", "angular_speed")
STATISTICS = ("mean", "min", "max", "q25", "q50", "q75", "std")
N_ROWS = len(BASIC_FEATURES) * len(STATISTICS)
STATIONARY_SPEED = 1e-6

DSFM_MAGIC = b"DSFM"
DSFM_VERSION = 1


def row_names():
    return [f"{f}.{s}" for f in BASIC_FEATURES for s in STATISTICS]


@dataclass(frozen=True)
class TransformConfig:
    ls: int = 256
    lf: int = 4

    def __post_init__(self):
        ls, lf = self.ls, self.lf
        if lf < 2 or ls % 2 or lf % 2:
            raise ValueError(f"ls and lf must be even with lf >= 2, got ls={ls}, lf={lf}")
        if lf >= ls or ls % lf:
            raise ValueError(f"lf must divide ls and be smaller, got ls={ls}, lf={lf}")

    @property
    def n_frames(self) -> int:
        return 2 * self.ls // self.lf


@dataclass
class BasicFeatureSeries:
    values: np.ndarray  # (5, N)
    driver_id: str = ""
    trip_id: str = ""

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass
class Segment:
    values: np.ndarray  # (5, ls)
    segment_index: int
    driver_id: str = ""
    trip_id: str = ""


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (35, F)
    driver_id: str = ""
    trip_id: str = ""
    segment_index: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape


def basic_features(traj: Trajectory) -> BasicFeatureSeries:
    """Speed, speed change, acceleration, acceleration change and angular speed.

    Forward differences throughout; the series are trimmed to the common
    range so a trip of T points yields T - 3 columns.
    """
    p = traj.points
    dt = traj.sample_interval
    if len(p) < 4:
        raise ValueError("trip too short to compute basic features")
    v = np.diff(p, axis=0) / dt                         # T-1
    speed = np.hypot(v[:, 0], v[:, 1])
    acc = np.diff(v, axis=0) / dt                       # T-2
    acc_norm = np.hypot(acc[:, 0], acc[:, 1])

    theta = np.arctan2(v[:, 1], v[:, 0])
    moving = speed >= STATIONARY_SPEED
    if not moving.all():
        # carry the last valid heading through stationary steps
        idx = np.where(moving, np.arange(len(theta)), -1)
        np.maximum.accumulate(idx, out=idx)
        first = np.argmax(moving) if moving.any() else 0
        idx[idx < 0] = first
        theta = theta[idx] if moving.any() else np.zeros_like(theta)
    dtheta = np.diff(theta)
    wrapped = np.abs((dtheta + np.pi) % (2 * np.pi) - np.pi)
    wrapped[~moving[1:]] = 0.0
    ang = wrapped / dt                                  # T-2

    n = len(p) - 3
    values = np.empty((5, n))
    values[0] = speed[:n]
    values[1] = np.diff(speed)[:n]
    values[2] = acc_norm[:n]
    values[3] = np.diff(acc_norm)[:n]
    values[4] = ang[:n]
    return BasicFeatureSeries(values, traj.driver_id, traj.trip_id)


def segment_series(series: BasicFeatureSeries, cfg: TransformConfig) -> list[Segment]:
    ls, half = cfg.ls, cfg.ls // 2
    n = series.n
    if n < ls:
        return []
    count = (n - ls) // half + 1
    return [Segment(series.values[:, k * half:k * half + ls], k, series.driver_id, series.trip_id)
            for k in range(count)]


def _stats_sorted(s: np.ndarray) -> np.ndarray:
    """Seven statistics along the last axis of already-sorted data.

    Returns an array with a new leading axis of length 7.
    """
    n = s.shape[-1]
    out = np.empty((7,) + s.shape[:-1])
    out[0] = s.mean(axis=-1)
    out[1] = s[..., 0]
    out[2] = s[..., -1]
    for j, p in enumerate((0.25, 0.5, 0.75)):
        h = (n - 1) * p
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        out[3 + j] = s[..., lo] + (h - lo) * (s[..., hi] - s[..., lo])
    out[6] = s.std(axis=-1)
    return out


def frame_stats(seg: Segment | np.ndarray, cfg: TransformConfig) -> FeatureMatrix:
    """Summarise a 5 x ls segment as a 35 x (2*ls/lf) matrix.

    Frame i covers columns [i*lf/2, i*lf/2 + lf); the last frame runs past the
    segment end and keeps only its remaining lf/2 columns.
    """
    if isinstance(seg, Segment):
        x, labels = seg.values, (seg.driver_id, seg.trip_id, seg.segment_index)
    else:
        x, labels = np.asarray(seg, dtype=np.float64), ("", "", 0)
    ls, lf = cfg.ls, cfg.lf
    if x.shape != (5, ls):
        raise ValueError(f"segment must be 5 x {ls}, got {x.shape}")
    step = lf // 2
    full = sliding_window_view(x, lf, axis=1)[:, ::step]     # (5, F-1, lf)
    tail = x[:, ls - step:]                                  # (5, lf/2)
    full_stats = _stats_sorted(np.sort(full, axis=-1))       # (7, 5, F-1)
    tail_stats = _stats_sorted(np.sort(tail, axis=-1))       # (7, 5)
    stats = np.concatenate([full_stats, tail_stats[:, :, None]], axis=2)
    # rows: feature-major, statistic-minor
    m = np.ascontiguousarray(stats.transpose(1, 0, 2).reshape(N_ROWS, cfg.n_frames))
    return FeatureMatrix(m, labels[0], labels[1], labels[2])


def transform_trip(traj: Trajectory, cfg: TransformConfig | None = None) -> list[FeatureMatrix]:
    cfg = cfg or TransformConfig()
    if len(traj) - 3 < cfg.ls:
        return []
    series = basic_features(traj)
    return [frame_stats(s, cfg) for s in segment_series(series, cfg)]


# --- persistence ----------------------------------------------------------

def save_matrix(m: FeatureMatrix, path):
    """Binary container: magic, u16 version, u32 rows/cols, float64 data, JSON trailer."""
    rows, cols = m.values.shape
    trailer = json.dumps({"driver_id": m.driver_id, "trip_id": m.trip_id,
                          "segment_index": m.segment_index, "meta": m.meta},
                         sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DSFM_MAGIC)
        fh.write(struct.pack("<HII", DSFM_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(m.values, dtype="<f8").tobytes())
        fh.write(trailer)


def load_matrix(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != DSFM_MAGIC:
        raise ValueError(f"{path}: not a feature matrix file")
    version, rows, cols = struct.unpack_from("<HII", raw, 4)
    if version != DSFM_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    start = 4 + struct.calcsize("<HII")
    end = start + 8 * rows * cols
    if len(raw) < end:
        raise ValueError(f"{path}: truncated matrix data")
    values = np.frombuffer(raw[start:end], dtype="<f8").reshape(rows, cols).astype(np.float64)
    info = json.loads(raw[end:].decode("utf-8")) if len(raw) > end else {}
    return FeatureMatrix(values, info.get("driver_id", ""), info.get("trip_id", ""),
                         info.get("segment_index", 0), info.get("meta", {}))


def heatmap_pixels(values: np.ndarray) -> np.ndarray:
    """Per-row min-max normalisation to 0..255; constant rows map to mid-gray."""
    v = np.asarray(values, dtype=np.float64)
    lo = v.min(axis=1, keepdims=True)
    span = v.max(axis=1, keepdims=True) - lo
    out = np.full(v.shape, 128, dtype=np.uint8)
    ok = span[:, 0] > 0
    out[ok] = np.rint(255.0 * (v[ok] - lo[ok]) / span[ok]).astype(np.uint8)
    return out


def export_heatmap(m: FeatureMatrix | np.ndarray, path, scale: int = 1):
    """Write a binary PPM (P6) heatmap, one pixel per matrix cell times ``scale``."""
    values = m.values if isinstance(m, FeatureMatrix) else m
    if scale < 1:
        raise ValueError("scale must be >= 1")
    gray = heatmap_pixels(values)
    if scale > 1:
        gray = np.repeat(np.repeat(gray, scale, axis=0), scale, axis=1)
    h, w = gray.shape
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM written by :func:`export_heatmap` into an (h, w, 3) array."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
