"""
From GPS points to feature matrices
===================================

A synthetic driver takes a trip, the trip becomes a stack of 35 x 128
matrices, and one matrix is written out as a heatmap.
"""
import tempfile
from pathlib import Path

import numpy as np

from drivestyle import DriverPersona, TransformConfig, basic_features, export_heatmap, synth_trip, transform_trip
from drivestyle.geodata import random_route
from drivestyle.transform import row_names

# a calm driver and a hurried one, on the same route
rng = np.random.default_rng(0)
route = random_route(rng)
calm = DriverPersona(cruise_speed=11.0, accel_aggressiveness=1.0, corner_slowdown=0.6,
                     jerk_noise=0.1, turn_rate_preference=0.2)
hurried = DriverPersona(cruise_speed=24.0, accel_aggressiveness=3.5, corner_slowdown=0.2,
                        jerk_noise=0.6, turn_rate_preference=0.6)
trips = {name: synth_trip(p, route, duration=700, seed=1) for name, p in
         [("calm", calm), ("hurried", hurried)]}

# five basic features per second: speed, its change, acceleration, its change, turning rate
for name, traj in trips.items():
    bf = basic_features(traj).values
    print(f"{name:8s} points={len(traj)}  mean speed={bf[0].mean():5.1f} m/s  "
          f"p95 accel={np.percentile(bf[2], 95):4.2f} m/s^2  max turn={bf[4].max():4.2f} rad/s")

# 256-second segments, half-overlapping; 4-second frames give 128 columns
cfg = TransformConfig()
matrices = transform_trip(trips["hurried"], cfg)
print(len(matrices), "segments of shape", matrices[0].shape)

# rows are feature-major: the seven statistics of speed first, and so on
names = row_names()
m = matrices[0].values
for row in (0, 6, 14, 28):
    print(f"{names[row]:22s} first frames: {np.round(m[row, :5], 2)}")

# a heatmap per matrix, rows min-max scaled separately
out = Path(tempfile.mkdtemp(prefix="drivestyle-demo-"))
for name, traj in trips.items():
    export_heatmap(transform_trip(traj, cfg)[0], out / f"{name}.ppm", scale=4)
print("heatmaps in", out)
