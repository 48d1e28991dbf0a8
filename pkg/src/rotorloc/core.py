"""Planar geometry, rigid poses and sampling clocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite Vec2 ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y], dtype=dtype or float)

    def __add__(self, other):
        ox, oy = other
        return Vec2(self.x + ox, self.y + oy)

    def __sub__(self, other):
        ox, oy = other
        return Vec2(self.x - ox, self.y - oy)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    @classmethod
    def of(cls, value) -> "Vec2":
        if isinstance(value, Vec2):
            return value
        x, y = value
        return cls(x, y)


def wrap_angle(a: float) -> float:
    """Wrap an angle in radians into the half-open interval (-pi, pi]."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError("cannot wrap a non-finite angle")
    if -math.pi < a <= math.pi:
        return a
    out = math.pi - math.fmod(math.pi - a, TWO_PI)
    if out > math.pi:
        out -= TWO_PI
    if out <= -math.pi:
        out += TWO_PI
    return out


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    out = np.pi - np.mod(np.pi - a, TWO_PI)
    inside = (a > -np.pi) & (a <= np.pi)
    return np.where(inside, a, out)


def rotation(azimuth: float) -> np.ndarray:
    c, s = math.cos(azimuth), math.sin(azimuth)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    """Rigid planar transform: counterclockwise rotation by ``azimuth`` then translation."""

    azimuth: float = 0.0
    position: Vec2 = Vec2(0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "azimuth", wrap_angle(self.azimuth))
        object.__setattr__(self, "position", Vec2.of(self.position))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an ``(..., 2)`` array of local points."""
        pts = np.asarray(points, dtype=float)
        return pts @ rotation(self.azimuth).T + np.asarray(self.position)

    def compose(self, inner: "Pose2") -> "Pose2":
        """Pose equivalent to applying ``inner`` first, then ``self``."""
        pos = self.apply(np.asarray(inner.position))
        return Pose2(self.azimuth + inner.azimuth, Vec2(*pos))


def pose_apply(pose: Pose2, local) -> Vec2:
    return Vec2(*pose.apply(np.asarray(Vec2.of(local))))


@dataclass(frozen=True)
class SampleClock:
    """Audio and encoder sampling clocks plus the speed of sound.

    The audio trace spans ``n_samples / f_s`` seconds; the encoder trace covers
    the same wall-clock span at ``f_e``.
    """

    f_s: float
    f_e: float
    n_samples: int
    c: float = 343.0

    def __post_init__(self):
        if not (self.f_s > 0 and self.f_e > 0 and self.c > 0):
            raise ValueError("sampling rates and speed of sound must be positive")
        if int(self.n_samples) < 1:
            raise ValueError("n_samples must be >= 1")
        object.__setattr__(self, "n_samples", int(self.n_samples))

    @property
    def duration(self) -> float:
        return self.n_samples / self.f_s

    @property
    def n_encoder(self) -> int:
        return max(1, int(round(self.n_samples * self.f_e / self.f_s)))

    def audio_times(self, pad: int = 0) -> np.ndarray:
        return np.arange(-pad, self.n_samples + pad) / self.f_s

    def encoder_times(self) -> np.ndarray:
        return np.arange(self.n_encoder) / self.f_e

    def to_json(self) -> dict:
        return {"f_s": self.f_s, "f_e": self.f_e, "n_samples": self.n_samples, "c": self.c}

    @classmethod
    def from_json(cls, d: dict) -> "SampleClock":
        from .serialization import check_keys

        check_keys(d, {"f_s", "f_e", "n_samples", "c"}, "clock", optional={"c"})
        return cls(float(d["f_s"]), float(d["f_e"]), int(d["n_samples"]), float(d.get("c", 343.0)))
