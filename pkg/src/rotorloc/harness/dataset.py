"""Pose-grid datasets of simulated captures.

File layout: magic ``MAVD``, u32 version, u32 header length, a sorted-key
JSON header (scene, phases, spec, split), then one ``MAVT`` trace record per
(position, orientation), position-major.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..aircraft import Scene, Simulator
from ..core import Pose2, Vec2, wrap_angle
from ..environment import viable_region
from ..errors import ConfigError
from ..phasemod import PhaseParams
from ..serialization import check_keys
from ..traces import PhaseTrace, PressureTrace, TraceRecord

MAGIC = b"MAVD"
VERSION = 1
SPLIT_RATIOS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class DatasetSpec:
    grid_points_per_side: int = 9
    orientations: int = 8
    margin: float = 0.93
    seed: int = 0
    split: str = "location"  # "location" keeps all orientations of a position together

    def __post_init__(self):
        if self.grid_points_per_side < 1 or self.orientations < 1:
            raise ConfigError("grid_points_per_side and orientations must be positive")
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        if self.split not in ("location", "record"):
            raise ConfigError("split must be 'location' or 'record'")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "DatasetSpec":
        keys = set(cls.__dataclass_fields__)
        check_keys(d, keys, "dataset spec", optional=keys)
        return cls(**d)


def grid_positions(region, n: int) -> np.ndarray:
    """``n x n`` bilinear grid over a convex quadrilateral (uniform for rectangles)."""
    v = region.vertices
    u = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
    uu, vv = np.meshgrid(u, u)
    uu, vv = uu.ravel()[:, None], vv.ravel()[:, None]
    return (1 - uu) * (1 - vv) * v[0] + uu * (1 - vv) * v[1] + uu * vv * v[2] + (1 - uu) * vv * v[3]


def orientation_grid(n: int) -> np.ndarray:
    return np.array([wrap_angle(2.0 * math.pi * j / n) for j in range(n)])


def split_indices(n_locations: int, n_orient: int, seed: int, mode: str = "location") -> dict:
    rng = np.random.default_rng([seed, 7])
    units = n_locations if mode == "location" else n_locations * n_orient
    perm = rng.permutation(units)
    n_train = int(round(SPLIT_RATIOS[0] * units))
    n_val = int(round(SPLIT_RATIOS[1] * units))
    groups = {"train": perm[:n_train], "val": perm[n_train:n_train + n_val], "test": perm[n_train + n_val:]}
    out = {}
    for name, ids in groups.items():
        ids = np.sort(ids)
        if mode == "location":
            ids = (ids[:, None] * n_orient + np.arange(n_orient)[None, :]).ravel()
        out[name] = ids
    return out


class Dataset:
    def __init__(self, scene: Scene, phases: PhaseParams, spec: DatasetSpec, azimuth, positions,
                 pressure, phase, split):
        self.scene = scene
        self.phases = phases
        self.spec = spec
        self.azimuth = np.asarray(azimuth, dtype=float)
        self.positions = np.asarray(positions, dtype=float)
        self.pressure = np.asarray(pressure, dtype=float)
        self.phase = np.asarray(phase, dtype=float)
        self.split = {k: np.asarray(v, dtype=int) for k, v in split.items()}

    def __len__(self):
        return len(self.azimuth)

    def pose(self, i: int) -> Pose2:
        return Pose2(self.azimuth[i], Vec2(*self.positions[i]))

    def poses(self, idx=None) -> list:
        idx = range(len(self)) if idx is None else idx
        return [self.pose(i) for i in idx]

    def record(self, i: int) -> TraceRecord:
        clock = self.scene.clock
        return TraceRecord(self.pose(i), PressureTrace(self.pressure[i], clock), PhaseTrace(self.phase[i], clock))

    def location_groups(self, idx) -> list:
        """Record indices of ``idx`` grouped by shared position, in first-seen order."""
        groups = {}
        for i in idx:
            groups.setdefault(tuple(self.positions[i]), []).append(int(i))
        return list(groups.values())

    def header(self) -> dict:
        return {
            "scene": self.scene.to_json(),
            "phases": self.phases.to_json(),
            "spec": self.spec.to_json(),
            "n_records": len(self),
            "split": {k: v.tolist() for k, v in self.split.items()},
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True, separators=(",", ":")).encode()
        parts = [struct.pack("<4sII", MAGIC, VERSION, len(head)), head]
        parts.extend(self.record(i).to_bytes() for i in range(len(self)))
        return b"".join(parts)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        buf = Path(path).read_bytes()
        magic, version, n_head = struct.unpack_from("<4sII", buf, 0)
        if magic != MAGIC or version != VERSION:
            raise ValueError(f"{path}: not a dataset file")
        header = json.loads(buf[12:12 + n_head])
        scene = Scene.from_json(header["scene"])
        offset = 12 + n_head
        az, pos, pres, ph = [], [], [], []
        for _ in range(header["n_records"]):
            rec, offset = TraceRecord.from_bytes(buf, offset, c=scene.clock.c)
            az.append(rec.pose.azimuth)
            pos.append(tuple(rec.pose.position))
            pres.append(rec.pressure.samples)
            ph.append(rec.phase.samples)
        if offset != len(buf):
            raise ValueError(f"{path}: trailing bytes after {header['n_records']} records")
        return cls(scene, PhaseParams.from_json(header["phases"]), DatasetSpec.from_json(header["spec"]),
                   az, pos, np.stack(pres), np.stack(ph), header["split"])


def make_dataset(scene: Scene, phases: PhaseParams, spec: DatasetSpec, path=None) -> Dataset:
    """Simulate one capture per (grid position, orientation) inside the viable region."""
    region = viable_region(scene.env, spec.margin)
    positions = grid_positions(region, spec.grid_points_per_side)
    orients = orientation_grid(spec.orientations)
    sim = Simulator(scene)
    phi_audio = sim.audio_phases(phases)
    enc = sim.encoder(phases).samples
    az, pos, pres = [], [], []
    for xy in positions:
        for a in orients:
            pose = Pose2(a, Vec2(*xy))
            az.append(pose.azimuth)
            pos.append(xy)
            pres.append(sim.synthesize(sim.coefficients(pose), phi_audio))
    split = split_indices(len(positions), len(orients), spec.seed, spec.split)
    ds = Dataset(scene, phases, spec, az, pos, np.stack(pres),
                 np.broadcast_to(enc, (len(az),) + enc.shape), split)
    if path is not None:
        ds.save(path)
    return ds
