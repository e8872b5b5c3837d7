"""
Boosted-tree baselines
======================

Two non-neural references: trees on the unfolded 4480-value matrices, and
trees on handcrafted whole-trip features.
"""
import numpy as np

from drivestyle.baseline import TRIP_LAYOUT, gbdt_predict, gbdt_train, trip_features
from drivestyle.evaluation import ExperimentConfig, format_table, run_experiment
from drivestyle.geodata import synth_dataset

ds, _ = synth_dataset(n_drivers=5, trips_per_driver=40, seed=7)

# the handcrafted layout: 35 global statistics, 6 geometry values, then the
# same 35 statistics inside each of 8 turning-angle bins, then 8 presence flags
print("trip feature dimension:", TRIP_LAYOUT.dimension)
print("a few names:", TRIP_LAYOUT.names[35:41])

traj = ds.trips["1"][0]
v = trip_features(traj).values
for name in ("global.avg_speed", "global.bbox_area", "angle[0,10).present", "angle[90,120).present"):
    print(f"  {name:24s} {v[TRIP_LAYOUT.index(name)]:.3f}")

# boosting on a toy problem first: the training loss only goes down
rng = np.random.default_rng(0)
x = rng.normal(size=(90, 4))
y = np.arange(90) % 3
x[:, 2] += y
model = gbdt_train(x, y, max_depth=3, rounds=20)
print("\ntoy cross-entropy by round:", np.round(model.train_loss[::5], 3))
print("toy training accuracy:", (gbdt_predict(model, x).argmax(axis=1) == y).mean())

# the two baselines end to end; TripGBDT has no segment accuracy
rows = []
for cfg in (ExperimentConfig(method="gbdt", gbdt_rounds=20, gbdt_depth=6),
            ExperimentConfig(method="tripgbdt", gbdt_rounds=50, gbdt_depth=20)):
    report, model = run_experiment(cfg, dataset=ds)
    depth = max(t.depth() for rnd in model.trees for t in rnd)
    print(f"{report.method}: {model.rounds} rounds, deepest tree {depth}")
    rows.append((report.method, report.metrics))
print()
print(format_table(rows))
