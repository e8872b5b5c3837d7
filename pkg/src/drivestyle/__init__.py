"""Driving-style characterisation from GPS trips.

Trips are turned into 35 x F statistical feature matrices, classified per
segment by convolutional or recurrent networks (or boosted trees), and the
segment votes are summed into trip-level driver predictions.
"""
from .geodata import (Dataset, DriverPersona, Trajectory, load_dataset, load_trip, synth_dataset,
                      synth_trip, validate_sampling)
from .transform import (FeatureMatrix, TransformConfig, basic_features, export_heatmap, frame_stats,
                        segment_series, transform_trip)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DriverPersona", "Trajectory", "load_dataset", "load_trip", "synth_dataset",
    "synth_trip", "validate_sampling", "FeatureMatrix", "TransformConfig", "basic_features",
    "export_heatmap", "frame_stats", "segment_series", "transform_trip",
]
