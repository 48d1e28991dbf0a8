"""Geometric-median aggregation of per-orientation location estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Vec2
from .errors import ConfigError

ANCHOR_RADIUS = 1e-12
ANCHOR_NUDGE = 1e-9
_NUDGE_DIR = np.array([1.0, 1.0]) / np.sqrt(2.0)


@dataclass(frozen=True)
class EstimateSet:
    estimates: tuple
    orientations: tuple

    def __post_init__(self):
        if not self.estimates or len(self.estimates) != len(self.orientations):
            raise ConfigError("estimate set needs equal, nonzero numbers of estimates and orientations")

    def points(self) -> np.ndarray:
        return np.array([tuple(e) for e in self.estimates], dtype=float)


@dataclass(frozen=True)
class MedianResult:
    point: Vec2
    iterations: int
    converged: bool


def _objective(pts, t):
    return float(np.sum(np.hypot(*(pts - t).T)))


def geometric_median(points, tol: float = 1e-6, max_iter: int = 200, return_info: bool = False):
    """Weiszfeld iteration from the coordinate-wise mean.

    Stops when the iterate moves less than ``tol``. An iterate sitting on a data
    point is nudged off it first. If some data point scores a lower sum of
    distances than the final iterate, that point is returned instead.
    """
    pts = np.array([tuple(p) for p in points], dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ConfigError("geometric median of an empty set")
    t = pts.mean(axis=0)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        d = np.hypot(*(pts - t).T)
        if np.any(d < ANCHOR_RADIUS):
            t = t + ANCHOR_NUDGE * _NUDGE_DIR
            d = np.hypot(*(pts - t).T)
        w = 1.0 / d
        new = (w[:, None] * pts).sum(axis=0) / w.sum()
        step = float(np.hypot(*(new - t)))
        t = new
        if step < tol:
            converged = True
            break
    scores = np.array([_objective(pts, p) for p in pts])
    j = int(np.argmin(scores))
    if scores[j] < _objective(pts, t):
        t = pts[j]
    point = Vec2(float(t[0]), float(t[1]))
    return MedianResult(point, it, converged) if return_info else point


def aggregate_estimates(model, measurements) -> Vec2:
    """Predict from each ``(PressureTrace, PhaseTrace, azimuth)`` and take the geometric median."""
    from .localizer.model import predict

    if not measurements:
        raise ConfigError("no measurements to aggregate")
    estimates = [predict(model, p, phi, az) for p, phi, az in measurements]
    if len(estimates) == 1:
        return estimates[0]
    return geometric_median(estimates, tol=1e-6, max_iter=200)
