"""Single-rotor phased point-source model and fitting to pressure measurements.

A rotor is a set of fixed omnidirectional point sources, each driven by a sum
of blade-passing harmonics ``sum_k alpha_k cos(2 k omega t + psi_k)`` and
radiating through the free-space Green's function ``1 / (4 pi d)`` with delay
``d / c``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from .core import Vec2, wrap_angle
from .errors import DegenerateGeometry, NonConvergence
from .serialization import check_keys

EPS_DISTANCE = 1e-6
DEFAULT_SEED = 20230411
DEFAULT_HARMONICS = (0.5, 1.0, 2.0, 3.0)
INNER_RADIUS = 0.23
OUTER_RADIUS = 0.51


@dataclass(frozen=True)
class Harmonic:
    k: float
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"harmonic index must be positive, got {self.k}")
        if not math.isfinite(self.amplitude):
            raise ValueError("harmonic amplitude must be finite")
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "phase", wrap_angle(self.phase))


@dataclass(frozen=True)
class PointSource:
    position: Vec2
    harmonics: tuple

    def __post_init__(self):
        object.__setattr__(self, "position", Vec2.of(self.position))
        hs = tuple(self.harmonics)
        if not hs:
            raise ValueError("a point source needs at least one harmonic")
        ks = [h.k for h in hs]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("harmonic indices must be strictly increasing")
        object.__setattr__(self, "harmonics", hs)


@dataclass(frozen=True)
class RotorSourceModel:
    omega: float
    sources: tuple

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.sources:
            raise ValueError("a rotor needs at least one source")
        object.__setattr__(self, "sources", tuple(self.sources))

    # Dense views: harmonic indices are the union over sources; missing
    # entries are masked out with zero amplitude.
    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([[s.position.x, s.position.y] for s in self.sources])

    @cached_property
    def ks(self) -> np.ndarray:
        return np.array(sorted({h.k for s in self.sources for h in s.harmonics}))

    @cached_property
    def _tables(self):
        ks = list(self.ks)
        alpha = np.zeros((len(self.sources), len(ks)))
        psi = np.zeros_like(alpha)
        mask = np.zeros(alpha.shape, dtype=bool)
        for i, s in enumerate(self.sources):
            for h in s.harmonics:
                j = ks.index(h.k)
                alpha[i, j], psi[i, j], mask[i, j] = h.amplitude, h.phase, True
        return alpha, psi, mask

    @property
    def alpha(self) -> np.ndarray:
        return self._tables[0]

    @property
    def psi(self) -> np.ndarray:
        return self._tables[1]

    @property
    def mask(self) -> np.ndarray:
        return self._tables[2]

    @property
    def n_parameters(self) -> int:
        return 2 * int(self.mask.sum())

    def complex_amplitudes(self) -> np.ndarray:
        """``alpha * exp(i psi)`` as an ``(S, H)`` array over :attr:`ks`."""
        return self.alpha * np.exp(1j * self.psi)

    def with_parameters(self, alpha: np.ndarray, psi: np.ndarray) -> "RotorSourceModel":
        ks = self.ks
        sources = []
        for i, s in enumerate(self.sources):
            hs = tuple(
                Harmonic(ks[j], alpha[i, j], psi[i, j]) for j in range(len(ks)) if self.mask[i, j]
            )
            sources.append(PointSource(s.position, hs))
        return RotorSourceModel(self.omega, tuple(sources))

    def to_json(self) -> dict:
        return {
            "omega_rad_s": self.omega,
            "sources": [
                {
                    "xi": [s.position.x, s.position.y],
                    "harmonics": [{"k": h.k, "alpha": h.amplitude, "psi": h.phase} for h in s.harmonics],
                }
                for s in self.sources
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "RotorSourceModel":
        check_keys(d, {"omega_rad_s", "sources"}, "rotor")
        sources = []
        for i, s in enumerate(d["sources"]):
            check_keys(s, {"xi", "harmonics"}, f"rotor.sources[{i}]")
            hs = []
            for h in s["harmonics"]:
                check_keys(h, {"k", "alpha", "psi"}, f"rotor.sources[{i}].harmonics")
                hs.append(Harmonic(h["k"], h["alpha"], h["psi"]))
            sources.append(PointSource(Vec2(*s["xi"]), tuple(hs)))
        return cls(float(d["omega_rad_s"]), tuple(sources))


def eval_source_signal(source: PointSource, omega: float, t):
    """Drive signal of one source at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for h in source.harmonics:
        out = out + h.amplitude * np.cos(2.0 * h.k * omega * t + h.phase)
    return out if out.ndim else float(out)


def propagation(d, omega: float, c: float, legacy_delay: bool = False):
    """Return ``(delay, gain)`` of the free-space impulse response at distance ``d``.

    ``legacy_delay`` reads the delta argument ``omega t - d / c`` literally,
    which gives delay ``d / (c omega)`` and an extra ``1 / omega`` gain.
    """
    d = np.asarray(d, dtype=float)
    if legacy_delay:
        return d / (c * omega), 1.0 / (4.0 * np.pi * d * omega)
    return d / c, 1.0 / (4.0 * np.pi * d)


def _check_distances(d):
    if np.any(np.asarray(d) <= EPS_DISTANCE):
        raise DegenerateGeometry(f"receiver within {EPS_DISTANCE} m of a point source")


def eval_rotor_field(model: RotorSourceModel, x, t, phase_shift: float = 0.0,
                     c: float = 343.0, legacy_delay: bool = False):
    """Free-space rotor pressure at rotor-frame point ``x``; direct per-source sum."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    d = np.linalg.norm(model.positions - x, axis=1)
    _check_distances(d)
    delay, gain = propagation(d, model.omega, c, legacy_delay)
    out = np.zeros_like(t)
    shift = phase_shift / model.omega
    for s, src in enumerate(model.sources):
        out = out + gain[s] * eval_source_signal(src, model.omega, t - shift - delay[s])
    return out if out.ndim else float(out)


def default_rotor_model(omega: float, seed: int = DEFAULT_SEED) -> RotorSourceModel:
    """Deterministic surrogate of a fitted rotor: 256 sources on two circles, 4 harmonics each.

    Amplitudes fall off as ``1/k^2`` (unit scale on the inner circle, 0.25 on
    the outer); phases are uniform draws from a fixed-seed generator.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    rng = np.random.default_rng(seed)
    n_per_circle = 128
    angles = 2.0 * np.pi * np.arange(n_per_circle) / n_per_circle
    sources = []
    for radius, scale in ((INNER_RADIUS, 1.0), (OUTER_RADIUS, 0.25)):
        phases = rng.uniform(-np.pi, np.pi, size=(n_per_circle, len(DEFAULT_HARMONICS)))
        for i, a in enumerate(angles):
            hs = tuple(
                Harmonic(k, scale / k**2, phases[i, j]) for j, k in enumerate(DEFAULT_HARMONICS)
            )
            sources.append(PointSource(Vec2(radius * math.cos(a), radius * math.sin(a)), hs))
    return RotorSourceModel(float(omega), tuple(sources))


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitOptions:
    max_iter: int = 500
    gtol: float = 1e-8
    c: float = 343.0
    legacy_delay: bool = False
    min_radius: float = OUTER_RADIUS


@dataclass
class FitResult:
    model: RotorSourceModel
    misfit: float
    initial_misfit: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _target_arrays(targets, model, opts):
    prepared = []
    for pos, trace in targets:
        x = np.asarray(Vec2.of(pos))
        d = np.linalg.norm(model.positions - x, axis=1)
        _check_distances(d)
        delay, gain = propagation(d, model.omega, opts.c, opts.legacy_delay)
        # transfer H[s, h] = gain * exp(-i 2 k omega delay)
        transfer = gain[:, None] * np.exp(-2j * np.outer(delay, model.ks) * model.omega)
        t = np.arange(trace.clock.n_samples) / trace.clock.f_s
        carrier = np.exp(2j * np.outer(t, model.ks) * model.omega)  # (N, H)
        prepared.append((transfer, carrier, np.asarray(trace.samples, dtype=float)))
    return prepared


def _misfit_grad(alpha, psi, prepared):
    z = alpha * np.exp(1j * psi)
    total = 0.0
    g = np.zeros_like(z)
    for transfer, carrier, samples in prepared:
        u = np.einsum("sh,sh->h", z, transfer)
        pred = (carrier @ u).real
        r = pred[None, :] - samples
        total += float(np.sum(r * r))
        rh = r.sum(axis=0) @ carrier  # (H,)
        g += transfer * rh[None, :]
    ez = g * np.exp(1j * psi)
    d_alpha = 2.0 * ez.real
    d_psi = -2.0 * alpha * ez.imag
    return total, d_alpha, d_psi


def misfit_and_gradient(model: RotorSourceModel, targets, opts: FitOptions | None = None):
    """Squared-error data misfit and its analytic gradient w.r.t. amplitudes and phases.

    Gradients are ``(S, H)`` arrays over ``model.ks``; masked (absent)
    harmonics get zero.
    """
    opts = opts or FitOptions()
    prepared = _target_arrays(targets, model, opts)
    val, da, dp = _misfit_grad(model.alpha, model.psi, prepared)
    return val, da * model.mask, dp * model.mask


def fit_rotor_model(targets, init: RotorSourceModel, opts: FitOptions | None = None,
                    return_result: bool = False):
    """Fit source amplitudes and phases to target pressure traces with L-BFGS.

    ``targets`` is a list of ``(position, PressureTrace)`` pairs with positions
    in rotor coordinates. Source positions stay fixed. If the iteration cap
    is hit, a :class:`NonConvergence` warning carrying the final misfit is
    issued and the best iterate is returned anyway.
    """
    opts = opts or FitOptions()
    targets = list(targets)
    if not targets:
        raise ValueError("fit_rotor_model needs at least one target")
    for pos, _ in targets:
        if Vec2.of(pos).norm() <= opts.min_radius:
            raise ValueError(f"target {tuple(Vec2.of(pos))} inside the unmodeled {opts.min_radius} m core")
    prepared = _target_arrays(targets, init, opts)
    mask = init.mask
    n = int(mask.sum())

    def unpack(v):
        a = np.zeros(mask.shape)
        p = np.zeros(mask.shape)
        a[mask] = v[:n]
        p[mask] = v[n:]
        return a, p

    def fun(v):
        a, p = unpack(v)
        val, da, dp = _misfit_grad(a, p, prepared)
        return val, np.concatenate([da[mask], dp[mask]])

    x0 = np.concatenate([init.alpha[mask], init.psi[mask]])
    f0 = fun(x0)[0]
    history = [f0]
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   callback=lambda xk: history.append(fun(xk)[0]),
                   options={"maxiter": opts.max_iter, "gtol": opts.gtol, "ftol": 0.0})
    x_best, f_best = (res.x, float(res.fun)) if res.fun <= f0 else (x0, f0)
    a, p = unpack(x_best)
    model = init.with_parameters(a, p)
    converged = bool(res.success) or res.nit < opts.max_iter
    if not converged:
        warnings.warn(NonConvergence(f"rotor fit stopped after {res.nit} iterations, misfit {f_best:.6g}",
                                     misfit=f_best), stacklevel=2)
    result = FitResult(model, f_best, f0, int(res.nit), converged, history)
    return result if return_result else model
