"""Sampled microphone and encoder traces, and their binary file format.

File layout (little-endian): magic ``MAVT``, u32 version=1, u32 M, u32 R,
u32 N, u32 N_e, f64 f_s, f64 f_e, f64 azimuth, f64 t_x, f64 t_y, then M*N
pressures (mic-major) and R*N_e encoder phases (rotor-major).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Pose2, SampleClock, Vec2

MAGIC = b"MAVT"
VERSION = 1
_HEADER = struct.Struct("<4s5I5d")


@dataclass(frozen=True)
class PressureTrace:
    samples: np.ndarray  # (M, N)
    clock: SampleClock

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[1] != self.clock.n_samples:
            raise ValueError(f"trace shape {s.shape} does not match n_samples={self.clock.n_samples}")
        if not np.all(np.isfinite(s)):
            raise ValueError("trace contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def n_mics(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class PhaseTrace:
    samples: np.ndarray  # (R, N_e)
    clock: SampleClock

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ValueError("phase trace must be 2-D (rotors x samples)")
        if not np.all(np.isfinite(s)):
            raise ValueError("phase trace contains non-finite samples")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class TraceRecord:
    """One capture: pose, microphone pressures and encoder phases."""

    pose: Pose2
    pressure: PressureTrace
    phase: PhaseTrace = field(default=None)

    def to_bytes(self) -> bytes:
        p = self.pressure.samples
        ph = self.phase.samples if self.phase is not None else np.zeros((0, 0))
        clock = self.pressure.clock
        head = _HEADER.pack(
            MAGIC, VERSION, p.shape[0], ph.shape[0], p.shape[1], ph.shape[1] if ph.size else 0,
            clock.f_s, clock.f_e, self.pose.azimuth, self.pose.position.x, self.pose.position.y,
        )
        return head + p.astype("<f8").tobytes() + ph.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0, c: float = 343.0):
        """Parse one record; returns ``(record, next_offset)``."""
        magic, version, m, r, n, ne, f_s, f_e, az, tx, ty = _HEADER.unpack_from(buf, offset)
        if magic != MAGIC:
            raise ValueError(f"bad trace magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported trace version {version}")
        offset += _HEADER.size
        p = np.frombuffer(buf, dtype="<f8", count=m * n, offset=offset).reshape(m, n).astype(float)
        offset += 8 * m * n
        ph = np.frombuffer(buf, dtype="<f8", count=r * ne, offset=offset).reshape(r, ne).astype(float)
        offset += 8 * r * ne
        clock = SampleClock(f_s, f_e, n, c)
        phase = PhaseTrace(ph, clock) if r else None
        return cls(Pose2(az, Vec2(tx, ty)), PressureTrace(p, clock), phase), offset


def write_trace(path, record: TraceRecord) -> None:
    Path(path).write_bytes(record.to_bytes())


def read_trace(path, c: float = 343.0) -> TraceRecord:
    buf = Path(path).read_bytes()
    record, end = TraceRecord.from_bytes(buf, 0, c=c)
    if end != len(buf):
        raise ValueError(f"{path}: {len(buf) - end} trailing bytes")
    return record
