"""Batch prediction, error metrics and re-simulation of evaluation captures."""

from __future__ import annotations

import math

import numpy as np

from ..aggregate import geometric_median
from ..aircraft import Simulator
from ..core import Pose2, Vec2
from ..localizer.features import featurize
from ..localizer.model import forward
from .noise import inject_sensor_noise_array, phase_noise_realization

CHUNK = 64


def predict_batch(model, pressure, phase, azimuth) -> np.ndarray:
    """Predictions ``(B, 2)`` for stacked traces, processed in fixed-size chunks."""
    cfg = model.feature
    out = []
    for s in range(0, len(azimuth), CHUNK):
        sl = slice(s, s + CHUNK)
        out.append(forward(model, featurize(pressure[sl], cfg), featurize(phase[sl], cfg), azimuth[sl]))
    return np.concatenate(out) if out else np.zeros((0, 2))


def errors(pred, truth) -> np.ndarray:
    d = np.asarray(pred, float) - np.asarray(truth, float)
    return np.hypot(d[:, 0], d[:, 1])


def rms(e) -> float:
    e = np.asarray(e, float)
    return float(math.sqrt(np.mean(e * e)))


def centroid_baseline_rms(dataset, split: str = "test") -> float:
    """RMS of always answering the mean training position."""
    center = dataset.positions[dataset.split["train"]].mean(axis=0)
    idx = dataset.split[split]
    return rms(errors(np.broadcast_to(center, (len(idx), 2)), dataset.positions[idx]))


def dataset_rms(model, dataset, split: str = "test") -> float:
    idx = dataset.split[split]
    pred = predict_batch(model, dataset.pressure[idx], dataset.phase[idx], dataset.azimuth[idx])
    return rms(errors(pred, dataset.positions[idx]))


def aggregate_predictions(pred, groups, index_of) -> list:
    """Geometric median of the predictions in each group of record indices."""
    return [geometric_median([tuple(pred[index_of[i]]) for i in g], tol=1e-6, max_iter=200) for g in groups]


def aggregated_rms(model, dataset, split: str = "test") -> tuple:
    """``(per-measurement RMS, aggregated RMS)`` with all orientations of a location pooled."""
    idx = dataset.split[split]
    pred = predict_batch(model, dataset.pressure[idx], dataset.phase[idx], dataset.azimuth[idx])
    single = rms(errors(pred, dataset.positions[idx]))
    index_of = {int(i): j for j, i in enumerate(idx)}
    groups = dataset.location_groups(idx)
    med = aggregate_predictions(pred, groups, index_of)
    truth = np.array([dataset.positions[g[0]] for g in groups])
    return single, rms(errors(np.array([tuple(m) for m in med]), truth))


def simulate_records(scene, phases, azimuth, positions, env=None, sensor_snr=math.inf,
                     phase_snr=math.inf, rng=None, phase_reference_power=None, sim=None):
    """Re-simulate captures at the given poses, optionally with noise.

    Returns stacked pressure ``(B, M, N)`` and encoder ``(B, R, N_e)`` arrays.
    """
    sim = sim or Simulator(scene)
    phi_audio = sim.audio_phases(phases)
    enc = sim.encoder(phases).samples
    ps, es = [], []
    for az, xy in zip(azimuth, positions):
        coeffs = sim.coefficients(Pose2(float(az), Vec2(*xy)), env)
        pa, en = phi_audio, enc
        if not (math.isinf(phase_snr) and phase_snr > 0):
            na, ne = phase_noise_realization(sim, phases, phase_snr, rng, phase_reference_power)
            pa, en = phi_audio + na, enc + ne
        p = sim.synthesize(coeffs, pa)
        if not (math.isinf(sensor_snr) and sensor_snr > 0):
            p = inject_sensor_noise_array(p, sensor_snr, rng)
        ps.append(p)
        es.append(en)
    return np.stack(ps), np.stack(es)
