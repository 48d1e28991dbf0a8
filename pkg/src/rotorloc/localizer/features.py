"""STFT front end: log-magnitude plus unit phase vector per time-frequency cell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from ..errors import ConfigError, TraceTooShort
from ..serialization import check_keys

WINDOWS = ("hann", "hamming", "boxcar")
MAG_FLOOR = 1e-12  # below this a cell has phase (1, 0) and no phase gradient


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 64
    hop: int = 32
    window_function: str = "hann"
    frontend_pool: int = 1  # optional strided frame averaging; 1 = off

    def __post_init__(self):
        if not 0 < self.hop <= self.window:
            raise ConfigError("need 0 < hop <= window")
        if self.window_function not in WINDOWS:
            raise ConfigError(f"window_function must be one of {WINDOWS}")
        if self.frontend_pool < 1:
            raise ConfigError("frontend_pool must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.window // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window:
            raise TraceTooShort(f"trace of {n_samples} samples is shorter than the {self.window}-sample window")
        return ((n_samples - self.window) // self.hop + 1) // self.frontend_pool

    def taper(self) -> np.ndarray:
        return get_window(self.window_function, self.window)

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, d: dict) -> "FeatureConfig":
        keys = set(cls.__dataclass_fields__)
        check_keys(d, keys, "feature", optional=keys)
        return cls(**d)


def stft(x: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Frames along the last axis: ``(..., N) -> (..., T, B)`` complex."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < cfg.window:
        raise TraceTooShort(f"trace of {x.shape[-1]} samples is shorter than the {cfg.window}-sample window")
    frames = sliding_window_view(x, cfg.window, axis=-1)[..., ::cfg.hop, :]
    return np.fft.rfft(frames * cfg.taper(), axis=-1)


def cell_features(spec: np.ndarray) -> np.ndarray:
    """``(..., T, B)`` complex -> ``(..., T, B, 3)``: log(1+|X|), cos, sin of the phase."""
    mag = np.abs(spec)
    ok = mag > MAG_FLOOR
    safe = np.where(ok, mag, 1.0)
    cos = np.where(ok, spec.real / safe, 1.0)
    sin = np.where(ok, spec.imag / safe, 0.0)
    return np.stack([np.log1p(mag), cos, sin], axis=-1)


def _pool(feats, p):
    if p == 1:
        return feats
    t = feats.shape[-3] // p
    f = feats[..., : t * p, :, :]
    return f.reshape(f.shape[:-3] + (t, p) + f.shape[-2:]).mean(axis=-3)


def _unpool(grad, p, n_frames):
    if p == 1:
        return grad
    out = np.repeat(grad / p, p, axis=-3)
    pad = n_frames - out.shape[-3]
    if pad:
        widths = [(0, 0)] * out.ndim
        widths[-3] = (0, pad)
        out = np.pad(out, widths)
    return out


def featurize(x: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Signals ``(..., N)`` -> flattened cell features ``(..., T, 3B)``."""
    f = _pool(cell_features(stft(x, cfg)), cfg.frontend_pool)
    return f.reshape(f.shape[:-2] + (-1,))


def stft_features(trace, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Per-mic features of a :class:`PressureTrace`, shape ``(M, T, B, 3)``."""
    cfg = cfg or FeatureConfig()
    return _pool(cell_features(stft(trace.samples, cfg)), cfg.frontend_pool)


def featurize_backward(x: np.ndarray, grad: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Vector-Jacobian product of :func:`featurize` w.r.t. the input signals."""
    x = np.asarray(x, dtype=float)
    spec = stft(x, cfg)  # (..., T0, B)
    n_frames0 = spec.shape[-2]
    g = grad.reshape(grad.shape[:-1] + (cfg.n_bins, 3))
    g = _unpool(g, cfg.frontend_pool, n_frames0)
    g_lm, g_c, g_s = g[..., 0], g[..., 1], g[..., 2]

    re, im = spec.real, spec.imag
    mag = np.abs(spec)
    ok = mag > MAG_FLOOR
    m = np.where(ok, mag, 1.0)
    m3 = m**3
    d_re = g_lm * re / (m * (1.0 + m)) + g_c * im * im / m3 - g_s * re * im / m3
    d_im = g_lm * im / (m * (1.0 + m)) - g_c * re * im / m3 + g_s * re * re / m3
    d_re = np.where(ok, d_re, 0.0)
    d_im = np.where(ok, d_im, 0.0)

    w = cfg.window
    j = np.arange(w)[:, None]
    b = np.arange(cfg.n_bins)[None, :]
    ang = 2.0 * np.pi * j * b / w
    # Re X = frame_w @ cos, Im X = -frame_w @ sin
    d_frames = (d_re @ np.cos(ang).T - d_im @ np.sin(ang).T) * cfg.taper()  # (..., T0, W)
    out = np.zeros(x.shape)
    for t in range(n_frames0):
        out[..., t * cfg.hop: t * cfg.hop + w] += d_frames[..., t, :]
    return out
