import math

import numpy as np
import pytest

from conftest import OMEGA
from rotorloc.errors import UnknownPreset
from rotorloc.phasemod import (PRESETS, ConstraintConfig, PhaseParams, ddphi, default_grid, dphi,
                               penalty_alpha, penalty_omega, penalty_terms, penalty_thrust, penalty_total, phi,
                               preset)

TP = 16 * math.pi / OMEGA


def unit(r=1, k=1, n_rotors=1, period=TP, value=1.0, omega=OMEGA):
    beta = np.zeros((n_rotors, 10))
    beta[r - 1, k - 1] = value
    return PhaseParams(beta, period, omega)


def test_phi_examples():
    z = PhaseParams.zeros(2, OMEGA)
    assert phi(z, 0, 0.123) == 0.0 and dphi(z, 1, 0.2) == 0.0 and ddphi(z, 0, 0.1) == 0.0
    assert phi(unit(k=1), 0, TP / 4) == pytest.approx(1.0)
    assert phi(unit(k=2), 0, TP / 8) == pytest.approx(0.5)
    assert dphi(unit(k=1), 0, 0.0) == pytest.approx(2 * math.pi / TP)


def test_period_is_eight_revolutions():
    p = preset("slow_sine", OMEGA)
    assert p.period == pytest.approx(8 * 2 * math.pi / OMEGA)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    p = PhaseParams(rng.normal(0, 0.3, (2, 10)), TP, OMEGA)
    t = rng.uniform(0, TP, 20)
    h = 1e-7
    for r in range(2):
        fd = (phi(p, r, t + h) - phi(p, r, t - h)) / (2 * h)
        np.testing.assert_allclose(dphi(p, r, t), fd, rtol=1e-6, atol=1e-6)
        fd2 = (dphi(p, r, t + h) - dphi(p, r, t - h)) / (2 * h)
        np.testing.assert_allclose(ddphi(p, r, t), fd2, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd2)))


def test_endpoints_and_zero_acceleration_at_origin():
    rng = np.random.default_rng(1)
    p = PhaseParams(rng.normal(0, 0.3, (3, 10)), TP, OMEGA)
    for r in range(3):
        assert phi(p, r, 0.0) == 0.0
        assert phi(p, r, TP) == pytest.approx(0.0, abs=1e-12)
        assert ddphi(p, r, 0.0) == 0.0


def test_rate_integrates_to_zero():
    rng = np.random.default_rng(2)
    p = PhaseParams(rng.normal(0, 0.3, (2, 10)), TP, OMEGA)
    t = np.linspace(0, TP, 4096)
    for r in range(2):
        assert abs(np.trapezoid(dphi(p, r, t), t)) < 1e-9


def test_literal_derivative_flag_drops_chain_rule():
    p = unit(k=3, value=0.6)
    t = 0.37 * TP
    lit = dphi(p, 0, t, literal=True)
    assert lit == pytest.approx(0.6 * math.cos(3 * 2 * math.pi * t / TP))
    assert dphi(p, 0, t) == pytest.approx(lit * 2 * math.pi / TP)


def test_penalty_omega_example():
    cfg = ConstraintConfig(omega_max=101.0)
    p = unit(value=2.0 / (2 * math.pi / TP), omega=100.0)  # peak dphi = 2 rad/s
    grid = default_grid(p)
    rate = dphi(p, 0, grid)
    assert rate.max() == pytest.approx(2.0)
    want = np.maximum(rate - 1.0, 0).sum()
    assert want > 0
    assert penalty_omega(p, cfg) == pytest.approx(want, rel=1e-12)


def test_penalty_alpha_example():
    cfg = ConstraintConfig(alpha_max=10.0)
    p = unit(k=4, value=0.5)
    grid = default_grid(p)
    acc = ddphi(p, 0, grid)
    want = np.maximum(acc - 10.0, 0).sum() + np.maximum(-10.0 - acc, 0).sum()
    assert want > 0
    assert penalty_alpha(p, cfg) == pytest.approx(want, rel=1e-12)


def test_thrust_penalty():
    cfg = ConstraintConfig(kernel_sigmas=(2.0,))
    assert penalty_thrust(unit(), cfg) == pytest.approx(math.exp(-1 / 8), rel=1e-12)
    assert penalty_thrust(unit(value=2.0), cfg) == pytest.approx(4 * math.exp(-1 / 8), rel=1e-12)
    assert penalty_thrust(PhaseParams.zeros(4, OMEGA), ConstraintConfig()) == 0.0


@pytest.mark.parametrize("name", PRESETS)
def test_presets_satisfy_hard_constraints(name):
    terms = penalty_terms(preset(name, OMEGA), ConstraintConfig())
    assert terms["omega"] == 0.0 and terms["alpha"] == 0.0


def test_preset_amplitudes():
    grid = np.linspace(0, TP, 4097)
    assert not np.any(preset("constant", OMEGA).beta)
    slow = preset("slow_sine", OMEGA)
    fast = preset("fast_sine", OMEGA)
    assert np.abs(phi(slow, 0, grid)).max() == pytest.approx(math.radians(20), rel=1e-6)
    assert np.abs(phi(fast, 3, grid)).max() == pytest.approx(math.radians(2), rel=1e-6)
    grad = preset("gradual_freq", OMEGA)
    assert np.abs(phi(grad, 2, grid)).max() == pytest.approx(math.radians(18), rel=1e-5)
    with pytest.raises(UnknownPreset):
        preset("wobble", OMEGA)


def test_penalty_total_zero_at_origin():
    v, g = penalty_total(PhaseParams.zeros(4, OMEGA), ConstraintConfig())
    assert v == 0.0 and not np.any(g)


def test_penalty_total_weights_and_gradient():
    rng = np.random.default_rng(3)
    cfg = ConstraintConfig(omega_max=OMEGA + 20.0, alpha_max=400.0)
    p = PhaseParams(rng.normal(0, 0.4, (2, 10)), TP, OMEGA)
    v, g = penalty_total(p, cfg)
    terms = penalty_terms(p, cfg)
    assert terms["omega"] > 0 and terms["alpha"] > 0
    assert v == pytest.approx(0.1 * terms["omega"] + 0.1 * terms["alpha"] + terms["thrust"], rel=1e-12)
    h = 1e-6
    fd = np.zeros_like(g)
    for idx in np.ndindex(g.shape):
        b = p.beta.copy()
        b[idx] += h
        up = penalty_total(p.with_beta(b), cfg)[0]
        b[idx] -= 2 * h
        dn = penalty_total(p.with_beta(b), cfg)[0]
        fd[idx] = (up - dn) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-6 * np.abs(fd).max())


def test_penalties_invariant_to_rotor_order():
    rng = np.random.default_rng(4)
    cfg = ConstraintConfig(omega_max=OMEGA + 10.0, alpha_max=300.0)
    p = PhaseParams(rng.normal(0, 0.4, (3, 10)), TP, OMEGA)
    q = p.with_beta(p.beta[::-1])
    assert penalty_total(p, cfg)[0] == pytest.approx(penalty_total(q, cfg)[0], rel=1e-12)


def test_json_roundtrip():
    p = preset("offset", OMEGA)
    back = PhaseParams.from_json(p.to_json())
    assert np.array_equal(back.beta, p.beta) and back.period == p.period
    cfg = ConstraintConfig(omega_max=9000.0)
    assert ConstraintConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        ConstraintConfig.from_json({**cfg.to_json(), "extra": 1})
