import math
import warnings

import numpy as np
import pytest

from conftest import OMEGA, random_rotor, single_source_rotor
from rotorloc.core import SampleClock, Vec2
from rotorloc.errors import DegenerateGeometry, NonConvergence
from rotorloc.rotor import (FitOptions, Harmonic, PointSource, RotorSourceModel, default_rotor_model,
                            eval_rotor_field, eval_source_signal, fit_rotor_model, misfit_and_gradient,
                            propagation)
from rotorloc.traces import PressureTrace

C = 343.0


@pytest.mark.parametrize("k, amp, psi, omega, t, expected", [
    (1.0, 1.0, 0.0, 7.0, 0.0, 1.0),
    (1.0, 1.0, math.pi / 2, 7.0, 0.0, 0.0),
    (0.5, 2.0, 0.0, math.pi, 1.0, -2.0),
])
def test_source_signal_examples(k, amp, psi, omega, t, expected):
    src = PointSource(Vec2(0, 0), (Harmonic(k, amp, psi),))
    assert eval_source_signal(src, omega, t) == pytest.approx(expected, abs=1e-15)


def test_field_at_one_delay():
    m = single_source_rotor()
    assert eval_rotor_field(m, (1.0, 0.0), 1.0 / C) == pytest.approx(1 / (4 * math.pi), rel=1e-12)
    assert eval_rotor_field(m, (0.0, 2.0), 2.0 / C) == pytest.approx(1 / (8 * math.pi), rel=1e-12)


def test_phase_shift_quarter_turn_flips_first_harmonic():
    m = single_source_rotor()
    v = eval_rotor_field(m, (1.0, 0.0), 1.0 / C, phase_shift=math.pi / 2)
    assert v == pytest.approx(-1 / (4 * math.pi), rel=1e-12)


def test_opposite_shifts_cancel():
    m = single_source_rotor()
    t = np.linspace(0, 0.05, 200)
    total = eval_rotor_field(m, (1.3, 0.2), t) + eval_rotor_field(m, (1.3, 0.2), t, phase_shift=math.pi / 2)
    np.testing.assert_allclose(total, 0.0, atol=1e-15)


def test_peak_amplitude_halves_with_distance():
    m = single_source_rotor(k=2.0, phase=0.4)
    period = math.pi / (2.0 * OMEGA)
    t = np.linspace(0, period, 4001)
    # both ranges sample the cosine at the same phases, so the peaks compare exactly
    near = eval_rotor_field(m, (1.0, 0.0), t + 1.0 / C)
    far = eval_rotor_field(m, (2.0, 0.0), t + 2.0 / C)
    assert np.max(np.abs(far)) / np.max(np.abs(near)) == pytest.approx(0.5, abs=1e-9)


def test_periodicity():
    rng = np.random.default_rng(1)
    m = random_rotor(rng, ks=(1.0, 2.0, 3.0))
    t = np.linspace(0, 0.1, 50)
    x = (1.2, -0.4)
    np.testing.assert_allclose(eval_rotor_field(m, x, t + math.pi / OMEGA), eval_rotor_field(m, x, t), atol=1e-9)
    m_half = random_rotor(rng, ks=(0.5, 1.0))
    np.testing.assert_allclose(eval_rotor_field(m_half, x, t + 2 * math.pi / OMEGA),
                               eval_rotor_field(m_half, x, t), atol=1e-9)


def test_legacy_delay_reading():
    d, g = propagation(2.0, 10.0, C, legacy_delay=True)
    assert d == pytest.approx(2.0 / (C * 10.0))
    assert g == pytest.approx(1 / (4 * math.pi * 2.0 * 10.0))


def test_degenerate_distance():
    with pytest.raises(DegenerateGeometry):
        eval_rotor_field(single_source_rotor(), (0.0, 0.0), 0.0)


def test_default_model_counts():
    m = default_rotor_model(OMEGA)
    assert len(m.sources) == 256
    assert m.n_parameters == 2048
    assert tuple(m.sources[0].position) == pytest.approx((0.23, 0.0))
    assert list(m.ks) == [0.5, 1.0, 2.0, 3.0]
    assert default_rotor_model(OMEGA).to_json() == m.to_json()


def test_model_json_roundtrip():
    m = random_rotor(np.random.default_rng(3))
    back = RotorSourceModel.from_json(m.to_json())
    assert np.array_equal(back.alpha, m.alpha) and np.array_equal(back.psi, m.psi)
    assert np.array_equal(back.positions, m.positions)


def _targets(model, n=6, n_samples=256, radius=1.0):
    clock = SampleClock(3003.75, 3002.88, n_samples)
    t = np.arange(n_samples) / clock.f_s
    out = []
    for j in range(n):
        a = 2 * math.pi * j / n
        x = (radius * math.cos(a), radius * math.sin(a))
        out.append((Vec2(*x), PressureTrace(eval_rotor_field(model, x, t)[None, :], clock)))
    return out


def test_fit_fixed_point():
    m = random_rotor(np.random.default_rng(4))
    targets = _targets(m)
    opts = FitOptions(min_radius=0.31)
    res = fit_rotor_model(targets, m, opts, return_result=True)
    assert res.misfit <= 1e-12
    np.testing.assert_allclose(res.model.alpha, m.alpha, atol=1e-9)
    np.testing.assert_allclose(res.model.psi, m.psi, atol=1e-9)


def test_fit_recovers_scaled_amplitudes():
    m = random_rotor(np.random.default_rng(5))
    targets = _targets(m, n=8)
    init = m.with_parameters(m.alpha * 1.1, m.psi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        fit = fit_rotor_model(targets, init, FitOptions(min_radius=0.31))
    mask = m.mask.astype(bool)
    rel = np.abs(fit.alpha[mask] - m.alpha[mask]) / m.alpha[mask]
    assert rel.max() < 0.01
    np.testing.assert_array_equal(fit.positions, m.positions)


def test_fit_rejects_empty_and_near_field_targets():
    m = random_rotor(np.random.default_rng(6))
    with pytest.raises(ValueError):
        fit_rotor_model([], m)
    with pytest.raises(ValueError):
        fit_rotor_model(_targets(m, radius=0.2), m, FitOptions(min_radius=0.31))


def test_fit_warns_on_iteration_cap():
    m = random_rotor(np.random.default_rng(7))
    init = m.with_parameters(m.alpha * 0.5, m.psi + 0.3)
    with pytest.warns(NonConvergence):
        fit_rotor_model(_targets(m), init, FitOptions(max_iter=2, min_radius=0.31))


def test_misfit_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    m = random_rotor(rng)
    targets = _targets(random_rotor(rng))
    opts = FitOptions(min_radius=0.31)
    _, da, dp = misfit_and_gradient(m, targets, opts)
    h = 1e-6
    for s, j in [(0, 0), (1, 1), (3, 0)]:
        for which, grad in (("alpha", da), ("psi", dp)):
            a, p = m.alpha.copy(), m.psi.copy()
            arr = a if which == "alpha" else p
            arr[s, j] += h
            fp = misfit_and_gradient(m.with_parameters(a, p), targets, opts)[0]
            arr[s, j] -= 2 * h
            fm = misfit_and_gradient(m.with_parameters(a, p), targets, opts)[0]
            fd = (fp - fm) / (2 * h)
            assert grad[s, j] == pytest.approx(fd, rel=1e-4, abs=1e-10)
