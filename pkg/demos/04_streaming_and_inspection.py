"""
Guessing the driver mid-trip, and what the recurrent units respond to
=====================================================================

A stacked IRNN is trained briefly, then fed one trip point by point. After
each completed segment the running vote is printed. Finally the segments that
most excite a few hidden units are exported as heatmaps.
"""
import tempfile
from pathlib import Path

from drivestyle.evaluation import ExperimentConfig, aggregate_trip, predict_segments, run_experiment, split_dataset
from drivestyle.geodata import synth_dataset
from drivestyle.models import top_activations
from drivestyle.streaming import StreamingPredictor
from drivestyle.transform import TransformConfig, export_heatmap, transform_trip

ds, _ = synth_dataset(n_drivers=4, trips_per_driver=20, seed=11)
cfg = ExperimentConfig(method="stacked-irnn", epochs=15, batch_size=32, learning_rate=1e-4, clip_norm=1.0)
report, model = run_experiment(cfg, dataset=ds)
print(report.table())

split = split_dataset(ds, 0.8, cfg.seed)
driver = ds.drivers[2]
traj = next(t for t in ds.trips[driver] if t.trip_id == split.test[driver][0])
print(f"\nstreaming trip {traj.trip_id} of driver {driver} ({len(traj)} points)")

sp = StreamingPredictor(model, TransformConfig(), labels=ds.drivers)
for x, y in traj.points:
    for e in sp.push(x, y):
        print("  ", e.to_line())
sp.finish()

# the last running score is exactly the offline trip score
batch = aggregate_trip(predict_segments(model, transform_trip(traj)))
print("matches batch vote:", (sp.current().scores == batch).all())

# top five training segments for a few units of the second recurrent layer
matrices = [m for d in ds.drivers for t in ds.trips[d] if t.trip_id in split.train[d]
            for m in transform_trip(t)]
top = top_activations(model, matrices, k=5)
out = Path(tempfile.mkdtemp(prefix="drivestyle-inspect-"))
# many ReLU units end up silent after short training; show the liveliest ones
busiest = sorted(range(len(top)), key=lambda u: -top[u][0][1])[:3]
for unit in busiest:
    picks = ", ".join(f"{matrices[i].driver_id}/{matrices[i].trip_id}#{matrices[i].segment_index}={a:.3g}"
                      for i, a in top[unit])
    print(f"unit {unit}: {picks}")
    for rank, (i, _) in enumerate(top[unit], start=1):
        export_heatmap(matrices[i], out / f"unit{unit}_rank{rank}.ppm", scale=4)
print("heatmaps in", out)
