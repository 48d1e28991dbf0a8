"""Whole-aircraft pressure field, microphone and encoder sampling, phase gradients.

Every propagation path (rotor r, source s, image i) contributes
``w * alpha_sh * cos(2 k_h (omega t - phi_r(t)) - 2 k_h omega d / c + psi_sh) / (4 pi d)``
to a microphone. Because the pose is static during a capture, the path sum
collapses exactly into one complex coefficient per (mic, rotor, harmonic)::

    p_m(t) = sum_{r,h} Re[ C[m, r, h] * exp(i 2 k_h (omega t - phi_r(t))) ]

:class:`Simulator` works in that form; :func:`drone_field` keeps the direct
per-source sum and serves as the reference it is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.signal import firwin

from .core import Pose2, SampleClock, Vec2
from .environment import Environment, image_sources, mirror_images
from .errors import DegenerateGeometry
from .phasemod import PhaseParams, phase_samples, phi_basis
from .rotor import (EPS_DISTANCE, RotorSourceModel, default_rotor_model, eval_source_signal,
                    propagation)
from .serialization import check_keys
from .traces import PhaseTrace, PressureTrace

RPS_NOMINAL = 23.46
AA_TAPS = 63
AA_CUTOFF = 0.45  # fraction of f_s
AA_PAD = (AA_TAPS - 1) // 2


@dataclass(frozen=True)
class AircraftGeometry:
    """Rotor placements in aircraft coordinates and spin directions (+1 CCW, -1 CW).

    With ``mirror_counter_rotating`` the source layout of a clockwise rotor
    is the mirror image (y -> -y in rotor coordinates) of the fitted
    counterclockwise layout.
    """

    rotor_transforms: tuple
    spin: tuple
    mirror_counter_rotating: bool = True

    def __post_init__(self):
        transforms = tuple(self.rotor_transforms)
        spin = tuple(int(s) for s in self.spin)
        if not transforms or len(transforms) != len(spin):
            raise ValueError("need one spin direction per rotor")
        if any(s not in (1, -1) for s in spin):
            raise ValueError("spin must be +1 or -1")
        object.__setattr__(self, "rotor_transforms", transforms)
        object.__setattr__(self, "spin", spin)

    @property
    def n_rotors(self) -> int:
        return len(self.rotor_transforms)

    def source_positions(self, rotor: RotorSourceModel) -> np.ndarray:
        """Aircraft-frame source positions, shape ``(R, S, 2)``."""
        out = []
        for pose, spin in zip(self.rotor_transforms, self.spin):
            xi = rotor.positions
            if spin < 0 and self.mirror_counter_rotating:
                xi = xi * np.array([1.0, -1.0])
            out.append(pose.apply(xi))
        return np.stack(out)

    def subset(self, rotors) -> "AircraftGeometry":
        rotors = list(rotors)
        return AircraftGeometry(tuple(self.rotor_transforms[r] for r in rotors),
                                tuple(self.spin[r] for r in rotors), self.mirror_counter_rotating)

    def to_json(self) -> dict:
        return {
            "rotors": [[p.position.x, p.position.y, p.azimuth] for p in self.rotor_transforms],
            "spin": list(self.spin),
            "mirror_counter_rotating": self.mirror_counter_rotating,
        }

    @classmethod
    def from_json(cls, d: dict) -> "AircraftGeometry":
        check_keys(d, {"rotors", "spin", "mirror_counter_rotating"}, "geometry",
                   optional={"mirror_counter_rotating"})
        poses = tuple(Pose2(az, Vec2(x, y)) for x, y, az in d["rotors"])
        return cls(poses, tuple(d["spin"]), bool(d.get("mirror_counter_rotating", True)))


@dataclass(frozen=True)
class MicArray:
    positions: np.ndarray  # (M, 2), aircraft coordinates

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1, 2)
        if len(p) == 0:
            raise ValueError("mic array is empty")
        if len(p) > 1:
            gaps = np.linalg.norm(p[:, None] - p[None], axis=2) + np.eye(len(p))
            if np.any(gaps == 0):
                raise ValueError("mic positions must be pairwise distinct")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def n_mics(self) -> int:
        return len(self.positions)

    def __eq__(self, other):
        return isinstance(other, MicArray) and np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash(self.positions.tobytes())


@dataclass(frozen=True, eq=False)
class Scene:
    """Everything the forward model needs besides pose and phases.

    ``rotor=None`` stands for :func:`default_rotor_model` at ``omega``.
    """

    geometry: AircraftGeometry
    mics: MicArray
    env: Environment
    clock: SampleClock
    omega: float
    rotor_model: RotorSourceModel | None = None
    legacy_delay: bool = False

    @cached_property
    def rotor(self) -> RotorSourceModel:
        return self.rotor_model if self.rotor_model is not None else default_rotor_model(self.omega)

    def replace(self, **changes) -> "Scene":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return Scene(**d)

    def to_json(self) -> dict:
        return {
            "geometry": self.geometry.to_json(),
            "mics": self.mics.positions.tolist(),
            "environment": self.env.to_json(),
            "clock": self.clock.to_json(),
            "omega_rad_s": self.omega,
            "rotor": None if self.rotor_model is None else self.rotor_model.to_json(),
            "legacy_delay": self.legacy_delay,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Scene":
        keys = {"geometry", "mics", "environment", "clock", "omega_rad_s", "rotor", "legacy_delay"}
        check_keys(d, keys, "scene", optional={"rotor", "legacy_delay"})
        rotor = d.get("rotor")
        return cls(
            AircraftGeometry.from_json(d["geometry"]),
            MicArray(d["mics"]),
            Environment.from_json(d["environment"]),
            SampleClock.from_json(d["clock"]),
            float(d["omega_rad_s"]),
            None if rotor is None else RotorSourceModel.from_json(rotor),
            bool(d.get("legacy_delay", False)),
        )


def default_setup():
    """Nominal quadrotor: rotors on a 1.42 m square, 8 mics at 0.91 m, 5 m x 5 m room.

    Rotor order is forward-left (CW), forward-right (CCW), rear-left (CCW),
    rear-right (CW); +x points forward.
    """
    half = 0.71
    transforms = (
        Pose2(0.0, Vec2(half, half)),
        Pose2(0.0, Vec2(half, -half)),
        Pose2(0.0, Vec2(-half, half)),
        Pose2(0.0, Vec2(-half, -half)),
    )
    geom = AircraftGeometry(transforms, (-1, 1, 1, -1))
    angles = np.deg2rad(np.arange(8) * 45.0)
    mics = MicArray(0.91 * np.stack([np.cos(angles), np.sin(angles)], axis=1))
    env = Environment.rectangle(5.0, 5.0, gamma=0.5, max_order=1)
    n = 1025
    clock = SampleClock(f_s=n * RPS_NOMINAL / 8.0, f_e=128.0 * RPS_NOMINAL, n_samples=n, c=343.0)
    return geom, mics, env, clock


def default_scene() -> Scene:
    geom, mics, env, clock = default_setup()
    return Scene(geom, mics, env, clock, omega=2.0 * math.pi * RPS_NOMINAL)


def antialias_taps(f_s: float) -> np.ndarray:
    """Linear-phase Hann-windowed sinc, unit DC gain."""
    return firwin(AA_TAPS, AA_CUTOFF * f_s, window="hann", fs=f_s)


# ---------------------------------------------------------------------------
# reference path


def drone_field(x, t, pose: Pose2, phases: PhaseParams, geom: AircraftGeometry,
                rotor: RotorSourceModel, env: Environment, c: float = 343.0,
                legacy_delay: bool = False):
    """Pressure at environment point ``x`` by direct summation over every source image."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    src = pose.apply(geom.source_positions(rotor))  # (R, S, 2)
    out = np.zeros_like(t)
    for r in range(geom.n_rotors):
        shift = np.asarray(phase_samples(phases, np.atleast_1d(t))[r]).reshape(t.shape) / rotor.omega
        for s, source in enumerate(rotor.sources):
            for img in image_sources(env, src[r, s], env.max_order, strict=False):
                if img.weight == 0.0:
                    continue
                d = float(np.hypot(*(x - np.asarray(img.position))))
                if d <= EPS_DISTANCE:
                    raise DegenerateGeometry("field point coincides with a source image")
                delay, gain = propagation(d, rotor.omega, c, legacy_delay)
                out = out + img.weight * gain * eval_source_signal(source, rotor.omega, t - shift - delay)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# fast path


class Simulator:
    """Scene-bound forward model with precomputed time grids and filter."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.rotor = scene.rotor
        self.clock = scene.clock
        self.taps = antialias_taps(self.clock.f_s)
        self.t_audio = self.clock.audio_times(AA_PAD)  # padded grid
        self.t_enc = self.clock.encoder_times()
        self.ks = self.rotor.ks
        omega = self.rotor.omega
        self.carrier = np.exp(2j * np.outer(self.ks, omega * self.t_audio))  # (H, Npad)
        self._z = self.rotor.complex_amplitudes()  # (S, H)
        self._src_aircraft = scene.geometry.source_positions(self.rotor)  # (R, S, 2)

    @property
    def n_mics(self) -> int:
        return self.scene.mics.n_mics

    @property
    def n_rotors(self) -> int:
        return self.scene.geometry.n_rotors

    def coefficients(self, pose: Pose2, env: Environment | None = None) -> np.ndarray:
        """Complex path-sum coefficients ``C``, shape ``(M, R, H)``."""
        env = self.scene.env if env is None else env
        rotor, clock = self.rotor, self.clock
        R, S, _ = self._src_aircraft.shape
        src_env = pose.apply(self._src_aircraft).reshape(-1, 2)
        img_pos, orders, alive = mirror_images(env, src_env, env.max_order)
        weights = np.where(alive, env.gamma ** orders[None, :].astype(float), 0.0)  # (R*S, C)
        mic_env = pose.apply(self.scene.mics.positions)  # (M, 2)
        diff = img_pos[None, :, :, :] - mic_env[:, None, None, :]
        d = np.hypot(diff[..., 0], diff[..., 1])  # (M, R*S, C)
        if np.any((d <= EPS_DISTANCE) & (weights[None] != 0)):
            raise DegenerateGeometry("microphone coincides with a source image")
        d = np.where(weights[None] != 0, d, 1.0)
        delay, gain = propagation(d, rotor.omega, clock.c, self.scene.legacy_delay)
        amp = (weights[None] * gain).reshape(len(mic_env), R, S, -1)
        delay = delay.reshape(len(mic_env), R, S, -1)
        out = np.zeros((len(mic_env), R, len(self.ks)), dtype=complex)
        for h, k in enumerate(self.ks):
            path = (amp * np.exp(-2j * k * rotor.omega * delay)).sum(axis=3)  # (M, R, S)
            out[:, :, h] = path @ self._z[:, h]
        return out

    def audio_phases(self, phases: PhaseParams) -> np.ndarray:
        """``phi_r`` on the padded audio grid, shape ``(R, Npad)``."""
        return phase_samples(phases, self.t_audio)

    def _modulated(self, phi_audio):
        # (R, H, Npad): exp(i 2 k (omega t - phi_r(t)))
        return self.carrier[None] * np.exp(-2j * self.ks[None, :, None] * phi_audio[:, None, :])

    def raw(self, coeffs: np.ndarray, phi_audio: np.ndarray) -> np.ndarray:
        return np.einsum("mrh,rhn->mn", coeffs, self._modulated(phi_audio)).real

    def filter(self, raw: np.ndarray) -> np.ndarray:
        """Apply the anti-alias FIR along the last axis, trimming the padding."""
        flat = raw.reshape(-1, raw.shape[-1])
        out = np.stack([np.convolve(row, self.taps, mode="valid") for row in flat])
        return out.reshape(raw.shape[:-1] + (out.shape[-1],))

    def synthesize(self, coeffs: np.ndarray, phi_audio: np.ndarray) -> np.ndarray:
        return self.filter(self.raw(coeffs, phi_audio))

    def trace(self, pose: Pose2, phases: PhaseParams, env: Environment | None = None,
              phi_audio: np.ndarray | None = None) -> PressureTrace:
        phi_audio = self.audio_phases(phases) if phi_audio is None else phi_audio
        return PressureTrace(self.synthesize(self.coefficients(pose, env), phi_audio), self.clock)

    def encoder(self, phases: PhaseParams) -> PhaseTrace:
        return PhaseTrace(phase_samples(phases, self.t_enc), self.clock)

    def phase_jacobian(self, coeffs: np.ndarray, phi_audio: np.ndarray) -> np.ndarray:
        """``d raw_m(t) / d phi_r(t)`` on the padded grid, shape ``(M, R, Npad)``."""
        mod = self._modulated(phi_audio) * (-2j * self.ks[None, :, None])
        return np.einsum("mrh,rhn->mrn", coeffs, mod).real

    def grad_beta(self, coeffs: np.ndarray, phases: PhaseParams,
                  phi_audio: np.ndarray | None = None) -> np.ndarray:
        """Full Jacobian ``d p_m[n] / d beta_rk``, shape ``(M, N, R, K)``."""
        phi_audio = self.audio_phases(phases) if phi_audio is None else phi_audio
        jac = self.phase_jacobian(coeffs, phi_audio)  # (M, R, Npad)
        basis = phi_basis(phases, self.t_audio)  # (K, Npad)
        raw = jac[:, :, None, :] * basis[None, None, :, :]  # (M, R, K, Npad)
        return np.moveaxis(self.filter(raw), -1, 1)

    def vjp_beta(self, coeffs: np.ndarray, phases: PhaseParams, grad_p: np.ndarray,
                 phi_audio: np.ndarray | None = None, grad_enc: np.ndarray | None = None) -> np.ndarray:
        """Pull back ``dL/dp`` (M, N) and optionally ``dL/dphi_enc`` (R, N_e) onto ``beta``."""
        phi_audio = self.audio_phases(phases) if phi_audio is None else phi_audio
        # adjoint of the valid-mode convolution with a symmetric kernel
        g_raw = np.stack([np.convolve(g, self.taps, mode="full") for g in grad_p])  # (M, Npad)
        jac = self.phase_jacobian(coeffs, phi_audio)
        g_phi = np.einsum("mn,mrn->rn", g_raw, jac)
        out = g_phi @ phi_basis(phases, self.t_audio).T
        if grad_enc is not None:
            out = out + grad_enc @ phi_basis(phases, self.t_enc).T
        return out


def _scene_of(geom, rotor, mics, env, clock, legacy_delay=False):
    return Scene(geom, mics, env, clock, rotor.omega, rotor, legacy_delay)


def simulate_mics(pose: Pose2, phases: PhaseParams, geom: AircraftGeometry, rotor: RotorSourceModel,
                  mics: MicArray, env: Environment, clock: SampleClock,
                  legacy_delay: bool = False) -> PressureTrace:
    """Sampled, anti-alias filtered microphone pressures at ``pose``."""
    return Simulator(_scene_of(geom, rotor, mics, env, clock, legacy_delay)).trace(pose, phases)


def sample_encoder(phases: PhaseParams, clock: SampleClock) -> PhaseTrace:
    """Encoder readings ``phi_r(n / f_e)`` over the audio capture span."""
    return PhaseTrace(phase_samples(phases, clock.encoder_times()), clock)


def grad_mics_wrt_phase(pose: Pose2, phases: PhaseParams, geom: AircraftGeometry,
                        rotor: RotorSourceModel, mics: MicArray, env: Environment,
                        clock: SampleClock, legacy_delay: bool = False) -> np.ndarray:
    """Analytic ``d p_m[n] / d beta_rk`` with shape ``(M, N, R, K)``."""
    sim = Simulator(_scene_of(geom, rotor, mics, env, clock, legacy_delay))
    return sim.grad_beta(sim.coefficients(pose), phases)
