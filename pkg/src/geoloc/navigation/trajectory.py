from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SPACING = 0.25


@dataclass(frozen=True)
class Trajectory:
    """Dense (x, y, heading) samples with cumulative arc length ``s``."""

    points: np.ndarray
    s: np.ndarray

    @classmethod
    def from_points(cls, points) -> Trajectory:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return cls(pts, np.zeros(0))
        seg = np.hypot(*np.diff(pts[:, :2], axis=0).T)
        return cls(pts, np.concatenate([[0.0], np.cumsum(seg)]))

    def __len__(self):
        return len(self.points)

    @property
    def length(self) -> float:
        return float(self.s[-1]) if len(self.s) else 0.0

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(self.s))) if len(self.s) > 1 else 0.0

    def concatenate(self, other: Trajectory) -> Trajectory:
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        tail = other.points
        if np.allclose(tail[0, :2], self.points[-1, :2], atol=1e-9):
            tail = tail[1:]
        return Trajectory.from_points(np.vstack([self.points, tail]))

    @classmethod
    def straight(cls, start, end, spacing: float = 0.2) -> Trajectory:
        start, end = np.asarray(start, float), np.asarray(end, float)
        d = float(np.linalg.norm(end - start))
        n = max(2, int(np.ceil(d / spacing)) + 1)
        xy = start + np.linspace(0.0, 1.0, n)[:, None] * (end - start)
        head = np.full(n, np.arctan2(*(end - start)[::-1]))
        return cls.from_points(np.column_stack([xy, head]))

    def to_geojson(self, properties: dict | None = None) -> dict:
        return {
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[float(x), float(y)] for x, y, _ in self.points]},
            "properties": dict(properties or {}),
        }
