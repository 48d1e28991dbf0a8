"""Sensor and rotor-phase noise injection."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import butter, lfilter

from ..errors import ConfigError, ZeroSignalPower
from ..traces import PressureTrace

PHASE_NOISE_CUTOFF_HZ = 50.0
DEFAULT_LEVELS = {"sensor": [25.0, 30.0, 35.0], "phase": [15.0, 24.0]}


def _noise_power(signal_power: float, snr_db: float) -> float:
    return signal_power / 10.0 ** (snr_db / 10.0)


def inject_sensor_noise_array(x: np.ndarray, snr_db: float, rng) -> np.ndarray:
    """White Gaussian noise at ``snr_db`` relative to the mean-square of ``x``."""
    x = np.asarray(x, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    var = _noise_power(float(np.mean(x * x)), snr_db)
    return x + rng.normal(0.0, math.sqrt(var), size=x.shape)


def inject_sensor_noise(trace: PressureTrace, snr_db: float, rng) -> PressureTrace:
    return PressureTrace(inject_sensor_noise_array(trace.samples, snr_db, rng), trace.clock)


def colored_noise(n: int, f_e: float, rng) -> np.ndarray:
    """Unit-variance white noise through a 2nd-order Butterworth low-pass at 50 Hz."""
    b, a = butter(2, PHASE_NOISE_CUTOFF_HZ, fs=f_e)
    # run-in so the filter state is stationary over the kept samples
    warm = int(math.ceil(10 * f_e / PHASE_NOISE_CUTOFF_HZ))
    y = lfilter(b, a, rng.standard_normal(n + warm))[warm:]
    return y / np.sqrt(np.mean(y * y))


def _phase_noise_scale(phi: np.ndarray, snr_db: float, reference_power) -> float:
    power = float(np.mean(np.asarray(phi) ** 2)) if reference_power is None else float(reference_power)
    if power <= 0.0:
        raise ZeroSignalPower("phase signal is identically zero; pass reference_power for absolute noise")
    return math.sqrt(_noise_power(power, snr_db))


def inject_phase_noise(phi: np.ndarray, snr_db: float, rng, f_e: float, reference_power=None) -> np.ndarray:
    """Add colored noise to phase samples taken at rate ``f_e`` along the last axis.

    The noise power is set relative to the mean square of ``phi`` (or
    ``reference_power`` when given).
    """
    phi = np.asarray(phi, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return phi.copy()
    scale = _phase_noise_scale(phi, snr_db, reference_power)
    flat = phi.reshape(-1, phi.shape[-1])
    noise = np.stack([colored_noise(flat.shape[1], f_e, rng) for _ in flat])
    return phi + scale * noise.reshape(phi.shape)


def phase_noise_realization(sim, phases, snr_db: float, rng, reference_power=None):
    """One noise draw per rotor on both the padded audio grid and the encoder grid.

    The process is generated at the encoder rate over the padded capture span
    and linearly interpolated onto the audio grid, so the microphones and the
    encoder see the same perturbation. Returns ``(noise_audio, noise_enc)``.
    """
    from ..phasemod import phase_samples

    t_a, t_e = sim.t_audio, sim.t_enc
    R = phases.n_rotors
    if math.isinf(snr_db) and snr_db > 0:
        return np.zeros((R, len(t_a))), np.zeros((R, len(t_e)))
    f_e = sim.clock.f_e
    scale = _phase_noise_scale(phase_samples(phases, t_e), snr_db, reference_power)
    i0 = int(math.floor(t_a[0] * f_e)) - 1
    i1 = int(math.ceil(t_a[-1] * f_e)) + 1
    i1 = max(i1, len(t_e))
    grid = np.arange(i0, i1 + 1) / f_e
    noise = scale * np.stack([colored_noise(len(grid), f_e, rng) for _ in range(R)])
    audio = np.stack([np.interp(t_a, grid, row) for row in noise])
    enc = noise[:, -i0:-i0 + len(t_e)]
    return audio, enc


def noisy_training_schedule(kind: str, levels=None) -> dict:
    """Train-config fragment for noise-injected training; the SNR is redrawn every batch."""
    if kind not in DEFAULT_LEVELS:
        raise ConfigError(f"unknown noise kind {kind!r}")
    levels = list(DEFAULT_LEVELS[kind]) if levels is None else [float(x) for x in levels]
    if not levels:
        raise ConfigError("noise level list is empty")
    return {"noise_training": {"kind": kind, "levels": levels}}
