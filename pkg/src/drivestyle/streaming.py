"""Online driver prediction from a partial trip.

Points arrive one per sample interval. Every time another full segment can
be cut from the points seen so far, that segment is classified and the vote
over all segments so far is re-aggregated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import aggregate_trip, predict_segments, top_k
from .geodata import Trajectory
from .transform import TransformConfig, basic_features, frame_stats, segment_series


@dataclass
class Emission:
    segments: int
    points: int
    scores: np.ndarray | None
    top1: int | None
    top5: list
    labels: list | None = None

    @property
    def insufficient(self) -> bool:
        return self.scores is None

    def to_dict(self) -> dict:
        if self.insufficient:
            return {"status": "insufficient data", "points": self.points, "segments": 0}
        d = {"status": "ok", "points": self.points, "segments": self.segments,
             "scores": self.scores.tolist(), "top1": self.top1, "top5": self.top5}
        if self.labels:
            d["top1_driver"] = self.labels[self.top1]
            d["top5_drivers"] = [self.labels[i] for i in self.top5]
        return d

    def to_line(self) -> str:
        if self.insufficient:
            return f"points={self.points} insufficient data"
        names = self.top5 if not self.labels else [self.labels[i] for i in self.top5]
        best = names[0]
        return f"points={self.points} segments={self.segments} top1={best} top5={','.join(map(str, names))}"


class StreamingPredictor:
    def __init__(self, model, cfg: TransformConfig | None = None, aggregation: str = "sum",
                 sample_interval: float = 1.0, emit_every: int = 1, labels=None):
        if emit_every < 1:
            raise ValueError("emit_every must be >= 1")
        self.model = model
        self.cfg = cfg or TransformConfig()
        self.aggregation = aggregation
        self.sample_interval = sample_interval
        self.emit_every = emit_every
        self.labels = labels
        self.points: list[tuple[float, float]] = []
        self.segment_probs: list[np.ndarray] = []
        self._last_emitted = 0

    def _next_segment_ready(self) -> bool:
        k = len(self.segment_probs)
        return len(self.points) - 3 >= k * (self.cfg.ls // 2) + self.cfg.ls

    def _classify_next(self):
        pts = np.array(self.points)
        k = len(self.segment_probs)
        end = k * (self.cfg.ls // 2) + self.cfg.ls
        # basic features of the whole prefix, so carried headings match the batch path
        series = basic_features(Trajectory(pts[:end + 3], self.sample_interval))
        seg = segment_series(series, self.cfg)[k]
        m = frame_stats(seg, self.cfg)
        self.segment_probs.append(predict_segments(self.model, [m])[0])

    def current(self) -> Emission:
        if not self.segment_probs:
            return Emission(0, len(self.points), None, None, [], self.labels)
        scores = aggregate_trip(self.segment_probs, self.aggregation)
        ranked = top_k(scores, 5)
        return Emission(len(self.segment_probs), len(self.points), scores, ranked[0], ranked, self.labels)

    def push(self, x: float, y: float) -> list[Emission]:
        """Add one point; returns the emissions it triggered (usually none)."""
        self.points.append((float(x), float(y)))
        out = []
        while self._next_segment_ready():
            self._classify_next()
            if len(self.segment_probs) - self._last_emitted >= self.emit_every:
                self._last_emitted = len(self.segment_probs)
                out.append(self.current())
        return out

    def finish(self) -> list[Emission]:
        """Flush at end of trip: a last emission if one is pending, or an insufficient-data notice."""
        if not self.segment_probs:
            return [self.current()]
        if self._last_emitted != len(self.segment_probs):
            self._last_emitted = len(self.segment_probs)
            return [self.current()]
        return []


def stream_points(model, points, cfg: TransformConfig | None = None, **kwargs) -> list[Emission]:
    sp = StreamingPredictor(model, cfg, **kwargs)
    out = []
    for x, y in points:
        out += sp.push(x, y)
    return out + sp.finish()
