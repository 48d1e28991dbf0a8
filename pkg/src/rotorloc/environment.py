"""Convex quadrilateral rooms, image sources and geometric perturbations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Vec2
from .errors import EmptyRegion, NotRectangular, OutsideEnvironment
from .serialization import check_keys

DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class Wall:
    a: Vec2
    b: Vec2

    def __post_init__(self):
        object.__setattr__(self, "a", Vec2.of(self.a))
        object.__setattr__(self, "b", Vec2.of(self.b))
        if self.a == self.b:
            raise ValueError("wall endpoints must be distinct")

    @property
    def endpoints(self):
        return self.a, self.b

    def unit_normal(self) -> np.ndarray:
        """Left normal of the directed wall; points into a counterclockwise room."""
        d = np.asarray(self.b) - np.asarray(self.a)
        return np.array([-d[1], d[0]]) / np.hypot(*d)


@dataclass(frozen=True)
class ImageSource:
    position: Vec2
    order: int
    weight: float


def shoelace_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


class Environment:
    """Convex quadrilateral room with a frequency-independent reflection coefficient.

    Vertices are stored counterclockwise; clockwise input is reversed.
    """

    def __init__(self, vertices, gamma: float = 0.5, max_order: int = 1):
        v = np.array(vertices, dtype=float)
        if v.shape != (4, 2) or not np.all(np.isfinite(v)):
            raise ValueError("an environment needs 4 finite 2-D vertices")
        if shoelace_area(v) < 0:
            v = v[::-1].copy()
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {gamma}")
        if int(max_order) != max_order or max_order < 0:
            raise ValueError("max_order must be a non-negative integer")
        edges = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) == 0):
            raise ValueError("degenerate wall")
        turn = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(turn <= 0):
            raise ValueError("environment polygon must be strictly convex")
        v.setflags(write=False)
        self.vertices = v
        self.gamma = float(gamma)
        self.max_order = int(max_order)

    @classmethod
    def rectangle(cls, width: float, height: float, gamma: float = 0.5, max_order: int = 1,
                  origin=(0.0, 0.0)) -> "Environment":
        x0, y0 = origin
        return cls([[x0, y0], [x0 + width, y0], [x0 + width, y0 + height], [x0, y0 + height]],
                   gamma, max_order)

    @property
    def walls(self) -> list:
        v = self.vertices
        return [Wall(Vec2(*v[i]), Vec2(*v[(i + 1) % 4])) for i in range(4)]

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    def replace(self, vertices=None, gamma=None, max_order=None) -> "Environment":
        return Environment(
            self.vertices if vertices is None else vertices,
            self.gamma if gamma is None else gamma,
            self.max_order if max_order is None else max_order,
        )

    def contains(self, points, strict: bool = True) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        v = self.vertices
        inside = np.ones(p.shape[:-1], dtype=bool)
        for i in range(4):
            a, b = v[i], v[(i + 1) % 4]
            cross = (b[0] - a[0]) * (p[..., 1] - a[1]) - (b[1] - a[1]) * (p[..., 0] - a[0])
            inside &= cross > 0 if strict else cross >= 0
        return inside

    def is_axis_aligned_rectangle(self, tol: float = 1e-12) -> bool:
        v = self.vertices
        xs, ys = np.unique(np.round(v[:, 0] / tol) * tol), np.unique(np.round(v[:, 1] / tol) * tol)
        if len(xs) != 2 or len(ys) != 2:
            return False
        edges = np.roll(v, -1, axis=0) - v
        return bool(np.all((np.abs(edges[:, 0]) <= tol) | (np.abs(edges[:, 1]) <= tol)))

    def __eq__(self, other):
        return (isinstance(other, Environment) and np.array_equal(self.vertices, other.vertices)
                and self.gamma == other.gamma and self.max_order == other.max_order)

    def __repr__(self):
        return f"Environment(vertices={self.vertices.tolist()}, gamma={self.gamma}, max_order={self.max_order})"

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "gamma": self.gamma, "max_order": self.max_order}

    @classmethod
    def from_json(cls, d: dict) -> "Environment":
        check_keys(d, {"vertices", "gamma", "max_order"}, "environment")
        return cls(d["vertices"], float(d["gamma"]), int(d["max_order"]))


def reflect_point(p, wall: Wall) -> Vec2:
    """Mirror ``p`` across the infinite line through ``wall``."""
    return Vec2(*_reflect(np.asarray(Vec2.of(p)), np.asarray(wall.a), wall.unit_normal()))


def _reflect(p: np.ndarray, a: np.ndarray, n: np.ndarray) -> np.ndarray:
    dist = (p - a) @ n
    return p - 2.0 * dist[..., None] * n if np.ndim(dist) else p - 2.0 * dist * n


def mirror_images(env: Environment, points, max_order: int):
    """Image-source lattice for many points at once.

    Order-``n`` candidates are reflections of surviving order ``n-1`` images
    across every wall except the one that produced them. A candidate that
    falls within ``DEDUP_TOL`` of an already accepted image (any order) is
    discarded, together with its descendants.

    Returns ``(positions (P, C, 2), orders (C,), alive (P, C))``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    walls = env.walls
    anchors = [np.asarray(w.a) for w in walls]
    normals = [w.unit_normal() for w in walls]

    levels_pos = [pts[:, None, :]]
    levels_alive = [np.ones((len(pts), 1), dtype=bool)]
    parents = [np.array([-1])]
    for _ in range(max_order):
        prev_pos, prev_alive, prev_parent = levels_pos[-1], levels_alive[-1], parents[-1]
        cand_pos, cand_alive, cand_parent = [], [], []
        for c in range(prev_pos.shape[1]):
            for w in range(len(walls)):
                if w == prev_parent[c]:
                    continue
                cand_pos.append(_reflect(prev_pos[:, c, :], anchors[w], normals[w]))
                cand_alive.append(prev_alive[:, c].copy())
                cand_parent.append(w)
        accepted = np.concatenate(levels_pos, axis=1)
        accepted_alive = np.concatenate(levels_alive, axis=1)
        for j, pos in enumerate(cand_pos):
            near = np.linalg.norm(accepted - pos[:, None, :], axis=2) < DEDUP_TOL
            dup = np.any(near & accepted_alive, axis=1)
            for i in range(j):
                dup |= cand_alive[i] & (np.linalg.norm(cand_pos[i] - pos, axis=1) < DEDUP_TOL)
            cand_alive[j] &= ~dup
        levels_pos.append(np.stack(cand_pos, axis=1))
        levels_alive.append(np.stack(cand_alive, axis=1))
        parents.append(np.array(cand_parent))

    positions = np.concatenate(levels_pos, axis=1)
    alive = np.concatenate(levels_alive, axis=1)
    orders = np.concatenate([np.full(lv.shape[1], n) for n, lv in enumerate(levels_pos)])
    return positions, orders, alive


def image_sources(env: Environment, xi, max_order: int | None = None, strict: bool = True) -> list:
    """All image sources of ``xi`` up to ``max_order`` with weights ``gamma**order``."""
    if max_order is None:
        max_order = env.max_order
    xi = np.asarray(Vec2.of(xi))
    if strict and not env.contains(xi):
        raise OutsideEnvironment(f"source {tuple(xi)} is not inside the environment")
    positions, orders, alive = mirror_images(env, xi[None, :], max_order)
    return [
        ImageSource(Vec2(*positions[0, c]), int(orders[c]), env.gamma ** int(orders[c]))
        for c in range(len(orders)) if alive[0, c]
    ]


# ---------------------------------------------------------------------------
# perturbations


def perturb_scale(env: Environment, s: float) -> Environment:
    """Scale the room area by ``s`` about its centroid."""
    if not s > 0:
        raise ValueError("area factor must be positive")
    if s == 1:
        return env
    c = env.centroid
    return env.replace(vertices=c + math.sqrt(s) * (env.vertices - c))


def _require_rectangle(env):
    if not env.is_axis_aligned_rectangle():
        raise NotRectangular("perturbation requires an axis-aligned rectangular room")


def perturb_aspect(env: Environment, r: float) -> Environment:
    """Area-preserving aspect change: width times sqrt(r), height divided by sqrt(r)."""
    if not r > 0:
        raise ValueError("aspect ratio must be positive")
    _require_rectangle(env)
    if r == 1:
        return env
    c = env.centroid
    f = np.array([math.sqrt(r), 1.0 / math.sqrt(r)])
    return env.replace(vertices=c + (env.vertices - c) * f)


def perturb_shear(env: Environment, theta: float) -> Environment:
    """Horizontal shear ``x' = x + (y - y_min) tan(theta)``, ``theta`` in degrees."""
    if not 0 <= theta < 90:
        raise ValueError("shear angle must be in [0, 90) degrees")
    _require_rectangle(env)
    if theta == 0:
        return env
    v = env.vertices.copy()
    v[:, 0] += (v[:, 1] - v[:, 1].min()) * math.tan(math.radians(theta))
    return env.replace(vertices=v)


def viable_region(env: Environment, margin: float) -> Environment:
    """Room polygon offset inward by ``margin`` along every wall normal."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if margin == 0:
        return env
    v = env.vertices
    lines = []
    for w in env.walls:
        n = w.unit_normal()
        lines.append((n, float(n @ np.asarray(w.a)) + margin))
    out = []
    for i in range(4):
        (n1, c1), (n2, c2) = lines[i - 1], lines[i]
        mat = np.array([n1, n2])
        det = np.linalg.det(mat)
        if abs(det) < 1e-15:
            raise EmptyRegion("parallel adjacent walls")
        out.append(np.linalg.solve(mat, [c1, c2]))
    out = np.array(out)
    old_edges = np.roll(v, -1, axis=0) - v
    new_edges = np.roll(out, -1, axis=0) - out
    if np.any(np.einsum("ij,ij->i", old_edges, new_edges) <= 0) or shoelace_area(out) <= 1e-12:
        raise EmptyRegion(f"margin {margin} m leaves no viable region")
    return env.replace(vertices=out)
