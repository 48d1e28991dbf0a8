"""Matched-field grid search: the reference localizer for noiseless captures."""

from __future__ import annotations

import numpy as np

from ..aircraft import Scene, Simulator
from ..core import Pose2, Vec2
from ..errors import ConfigError


def normalized_correlation(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.vdot(a, b) / (na * nb))


class MatchedFieldSearch:
    """Grid search with unit-norm templates cached per azimuth."""

    def __init__(self, scene: Scene, phi_used, grid, sim: Simulator | None = None):
        self.grid = [Vec2.of(g) for g in grid]
        if not self.grid:
            raise ConfigError("empty search grid")
        self.sim = sim or Simulator(scene)
        self.phi_audio = self.sim.audio_phases(phi_used)
        self._templates = {}

    def templates(self, azimuth: float) -> np.ndarray:
        key = float(azimuth)
        if key not in self._templates:
            rows = []
            for g in self.grid:
                q = self.sim.synthesize(self.sim.coefficients(Pose2(key, g)), self.phi_audio).ravel()
                n = np.linalg.norm(q)
                rows.append(q / n if n > 0 else q)
            self._templates[key] = np.stack(rows)
        return self._templates[key]

    def scores(self, p, azimuth: float) -> np.ndarray:
        x = np.asarray(getattr(p, "samples", p), dtype=float).ravel()
        n = np.linalg.norm(x)
        if n == 0.0:
            return np.zeros(len(self.grid))
        return self.templates(azimuth) @ (x / n)

    def localize(self, p, azimuth: float) -> Vec2:
        """Grid point whose simulated capture best matches ``p`` (first index wins ties)."""
        return self.grid[int(np.argmax(self.scores(p, azimuth)))]


def matched_field_localize(p, phi_used, azimuth: float, scene: Scene, grid, sim: Simulator | None = None) -> Vec2:
    """Grid point whose simulated capture best matches ``p`` (first index wins ties)."""
    return MatchedFieldSearch(scene, phi_used, grid, sim).localize(p, azimuth)
