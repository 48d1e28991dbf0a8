"""Rotor phase modulation: sine-series parametrization, constraint penalties, presets.

Each rotor's phase deviation is ``phi_r(t) = sum_k (beta_rk / k) sin(2 pi k t / T_p)``.
Derivatives are the exact time derivatives of that series; the
``literal_derivatives`` switch reproduces the shorter printed forms
``sum_k beta_k cos(.)`` and ``sum_k k beta_k sin(.)`` that drop the chain-rule factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnknownPreset
from .serialization import check_keys

DEFAULT_K = 10
GRID_POINTS = 1024
PRESETS = ("constant", "slow_sine", "fast_sine", "gradual_freq", "offset")


def default_period(omega: float) -> float:
    """Eight nominal revolutions."""
    return 16.0 * math.pi / omega


@dataclass(frozen=True)
class PhaseParams:
    beta: np.ndarray  # (R, K); column j holds harmonic k = j + 1
    period: float
    omega: float

    def __post_init__(self):
        b = np.array(self.beta, dtype=float)
        if b.ndim != 2 or b.shape[1] < 1:
            raise ValueError("beta must be an (R, K) matrix with K >= 1")
        if not np.all(np.isfinite(b)):
            raise ValueError("beta must be finite")
        if not (self.period > 0 and self.omega > 0):
            raise ValueError("period and omega must be positive")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    @classmethod
    def zeros(cls, n_rotors: int, omega: float, n_harmonics: int = DEFAULT_K, period=None):
        return cls(np.zeros((n_rotors, n_harmonics)), period or default_period(omega), omega)

    @property
    def n_rotors(self) -> int:
        return self.beta.shape[0]

    @property
    def n_harmonics(self) -> int:
        return self.beta.shape[1]

    @property
    def ks(self) -> np.ndarray:
        return np.arange(1, self.n_harmonics + 1, dtype=float)

    def with_beta(self, beta) -> "PhaseParams":
        return PhaseParams(beta, self.period, self.omega)

    def to_json(self) -> dict:
        return {"omega_rad_s": self.omega, "period_s": self.period, "beta": self.beta.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "PhaseParams":
        check_keys(d, {"omega_rad_s", "period_s", "beta"}, "phases")
        return cls(np.array(d["beta"], dtype=float), float(d["period_s"]), float(d["omega_rad_s"]))


# Basis matrices, shape (K, n_times). phi = beta @ phi_basis etc.

def phi_basis(params: PhaseParams, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ks = params.ks[:, None]
    return np.sin(2.0 * np.pi * ks * t[None, :] / params.period) / ks


def dphi_basis(params: PhaseParams, t, literal: bool = False) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ks = params.ks[:, None]
    c = np.cos(2.0 * np.pi * ks * t[None, :] / params.period)
    return c if literal else c * (2.0 * np.pi / params.period)


def ddphi_basis(params: PhaseParams, t, literal: bool = False) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ks = params.ks[:, None]
    s = np.sin(2.0 * np.pi * ks * t[None, :] / params.period)
    if literal:
        return ks * s
    return -ks * (2.0 * np.pi / params.period) ** 2 * s


def _eval(basis, params, r, t):
    out = params.beta[r] @ basis
    return float(out[0]) if np.ndim(t) == 0 else out


def phi(params: PhaseParams, r: int, t):
    return _eval(phi_basis(params, t), params, r, t)


def dphi(params: PhaseParams, r: int, t, literal: bool = False):
    return _eval(dphi_basis(params, t, literal), params, r, t)


def ddphi(params: PhaseParams, r: int, t, literal: bool = False):
    return _eval(ddphi_basis(params, t, literal), params, r, t)


def phase_samples(params: PhaseParams, t) -> np.ndarray:
    """``phi_r`` for all rotors at times ``t``; shape ``(R, len(t))``."""
    return params.beta @ phi_basis(params, t)


# ---------------------------------------------------------------------------
# penalties


@dataclass(frozen=True)
class ConstraintConfig:
    omega_max: float = 8000.0
    alpha_max: float = 4000.0
    lambda_omega: float = 0.1
    lambda_alpha: float = 0.1
    lambda_thrust: float = 1.0
    kernel_sigmas: tuple = (1.0, 2.0, 4.0)
    literal_derivatives: bool = False

    def __post_init__(self):
        if not (self.omega_max > 0 and self.alpha_max > 0):
            raise ValueError("omega_max and alpha_max must be positive")
        if min(self.lambda_omega, self.lambda_alpha, self.lambda_thrust) < 0:
            raise ValueError("penalty weights must be non-negative")
        object.__setattr__(self, "kernel_sigmas", tuple(float(s) for s in self.kernel_sigmas))

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["kernel_sigmas"] = list(self.kernel_sigmas)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ConstraintConfig":
        keys = set(cls.__dataclass_fields__)
        check_keys(d, keys, "constraints", optional=keys)
        return cls(**d)


def default_grid(params: PhaseParams, n: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, params.period, n)


def _omega_hinges(params, cfg, grid):
    rate = params.beta @ dphi_basis(params, grid, cfg.literal_derivatives)  # (R, T)
    over = rate + params.omega - cfg.omega_max
    under = -cfg.omega_max - rate - params.omega
    return rate, over, under


def _alpha_hinges(params, cfg, grid):
    acc = params.beta @ ddphi_basis(params, grid, cfg.literal_derivatives)
    return acc, acc - cfg.alpha_max, -cfg.alpha_max - acc


def penalty_omega(params: PhaseParams, cfg: ConstraintConfig, grid=None) -> float:
    grid = default_grid(params) if grid is None else grid
    _, over, under = _omega_hinges(params, cfg, grid)
    return float(np.maximum(over, 0).sum() + np.maximum(under, 0).sum())


def penalty_alpha(params: PhaseParams, cfg: ConstraintConfig, grid=None) -> float:
    grid = default_grid(params) if grid is None else grid
    _, over, under = _alpha_hinges(params, cfg, grid)
    return float(np.maximum(over, 0).sum() + np.maximum(under, 0).sum())


def thrust_kernel(ks, sigmas) -> np.ndarray:
    """Low-pass weight ``G(k)``: a sum of Gaussians of varying bandwidth."""
    ks = np.asarray(ks, dtype=float)
    return sum(np.exp(-ks**2 / (2.0 * s**2)) for s in sigmas)


def penalty_thrust(params: PhaseParams, cfg: ConstraintConfig) -> float:
    g = thrust_kernel(params.ks, cfg.kernel_sigmas)
    return float((params.beta**2 * g[None, :]).sum())


def penalty_terms(params: PhaseParams, cfg: ConstraintConfig, grid=None) -> dict:
    return {
        "omega": penalty_omega(params, cfg, grid),
        "alpha": penalty_alpha(params, cfg, grid),
        "thrust": penalty_thrust(params, cfg),
    }


def penalty_total(params: PhaseParams, cfg: ConstraintConfig, grid=None):
    """Weighted physics penalty and its gradient w.r.t. ``beta`` (shape ``(R, K)``).

    Hinge subgradients are taken as 0 exactly at the kink.
    """
    grid = default_grid(params) if grid is None else grid
    d_basis = dphi_basis(params, grid, cfg.literal_derivatives)
    dd_basis = ddphi_basis(params, grid, cfg.literal_derivatives)
    _, w_over, w_under = _omega_hinges(params, cfg, grid)
    _, a_over, a_under = _alpha_hinges(params, cfg, grid)
    g = thrust_kernel(params.ks, cfg.kernel_sigmas)

    l_w = np.maximum(w_over, 0).sum() + np.maximum(w_under, 0).sum()
    l_a = np.maximum(a_over, 0).sum() + np.maximum(a_under, 0).sum()
    l_t = (params.beta**2 * g[None, :]).sum()
    value = cfg.lambda_omega * l_w + cfg.lambda_alpha * l_a + cfg.lambda_thrust * l_t

    s_w = (w_over > 0).astype(float) - (w_under > 0).astype(float)
    s_a = (a_over > 0).astype(float) - (a_under > 0).astype(float)
    grad = (cfg.lambda_omega * s_w @ d_basis.T
            + cfg.lambda_alpha * s_a @ dd_basis.T
            + cfg.lambda_thrust * 2.0 * params.beta * g[None, :])
    return float(value), grad


# ---------------------------------------------------------------------------
# presets


def preset(name: str, omega: float, n_rotors: int = 4, n_harmonics: int = DEFAULT_K) -> PhaseParams:
    """Handcrafted modulations expressed in the sine basis with period of 8 revolutions.

    ``offset`` keeps only the in-basis part ``cos(delta) sin(x)`` of a sine
    shifted by ``delta = r * 90deg``; the ``sin(delta) cos(x)`` part cannot be
    represented by a pure sine series.
    """
    if name not in PRESETS:
        raise UnknownPreset(f"unknown phase preset {name!r}; choose from {', '.join(PRESETS)}")
    beta = np.zeros((n_rotors, n_harmonics))
    deg = math.pi / 180.0

    def put(r, k, amplitude):
        if k > n_harmonics:
            raise ValueError(f"preset {name!r} needs at least {k} harmonics")
        beta[r, k - 1] = amplitude * k  # phi amplitude = beta_k / k

    if name == "slow_sine":
        for r in range(n_rotors):
            put(r, 1, 20 * deg)
    elif name == "fast_sine":
        for r in range(n_rotors):
            put(r, 10, 2 * deg)
    elif name == "gradual_freq":
        for r in range(n_rotors):
            put(r, 1 + r, (20 - r) * deg)
    elif name == "offset":
        quarter_cos = (1.0, 0.0, -1.0, 0.0)
        for r in range(n_rotors):
            put(r, 1, 20 * deg * quarter_cos[r % 4])
    return PhaseParams(beta, default_period(omega), omega)
