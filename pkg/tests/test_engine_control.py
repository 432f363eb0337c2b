import math
import random

import pytest

from adaptive_dsmc.dsmc_core import compute_control, update_adaptation
from adaptive_dsmc.engine_control import (
    DesiredTrajectories,
    EngineControllerBank,
    adapt_air,
    adapt_fuel,
    adapt_speed,
    adapt_texh,
    cascade_step,
    control_air,
    control_fuel,
    control_speed,
    control_texh,
    desired_fuel,
)
from adaptive_dsmc.sim import DEFAULT_ADAPTATION_RATE, rho_for_rate
from adaptive_dsmc.errors import InvalidDesiredAfr, NonFiniteEstimate
from adaptive_dsmc.plant_engine import (
    CHANNELS,
    DRIFT,
    GAIN,
    EngineState,
    EngineUncertainty,
    mdot_ao,
    step_engine,
    zero_torque_air_mass,
)

BETA = dict.fromkeys(CHANNELS, 0.5)
RHO = dict.fromkeys(CHANNELS, 10.0)


def bank(T=0.01, beta=BETA, rho=RHO, alpha=None, adaptation=True, prediction="model"):
    return EngineControllerBank.build(T, beta, rho, alpha, adaptation, prediction)


def state_with_afr(afr, t_exh=25.0, omega=2 * math.pi, m_a=0.005):
    return EngineState(t_exh, mdot_ao(m_a, omega) / afr, omega, m_a)


def test_texh_law_example():
    s = state_with_afr(13.5)
    assert s.tau_e == pytest.approx(1.0) and s.afi == pytest.approx(1.0)
    delta = control_texh(bank(), s, 25.0, 26.0, 0.01)
    assert delta == pytest.approx(-63.33, abs=0.01)
    assert delta == pytest.approx((-0.01 * 575 + 1) / 0.075, rel=1e-12)


def test_texh_adaptation_example():
    s = state_with_afr(13.5, t_exh=100.0)
    b = bank()
    assert adapt_texh(b, s, 1.0, 0.01) == pytest.approx(1.5, rel=1e-12)
    b2 = bank()
    assert adapt_texh(b2, s, 0.0, 0.01) == 1.0


def test_fuel_laws():
    b = bank(alpha={"mf": 1.3})
    s = EngineState(300.0, 0.001, 100.0, 0.005)
    # on target with a flat reference the command holds the nominal balance
    assert control_fuel(b, s, 0.001, 0.001, 0.01) == pytest.approx(1.3 * 0.001, rel=1e-12)
    # s2 = 0.0002 with a flat reference
    T, tau_f = 0.01, 0.06
    expected = tau_f / T * (1.3 * T / tau_f * 0.001 - 1.5 * 0.0002)
    assert control_fuel(b, s, 0.0008, 0.0008, T) == pytest.approx(expected, rel=1e-12)
    before = b.mf.alpha_hat
    assert adapt_fuel(b, s, 0.0002, T) == pytest.approx(before - T * 0.0002 / (tau_f * 10.0) * 0.001)


def test_desired_fuel():
    assert desired_fuel(0.0146, 14.6) == pytest.approx(0.001)
    assert desired_fuel(0.0, 14.6) == 0.0
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(InvalidDesiredAfr):
            desired_fuel(0.01, bad)


def test_speed_law_examples():
    s = EngineState(300.0, 0.0005, 100.0, 0.005)
    m_a_d = control_speed(bank(), s, 100.0, 100.0, 0.01)
    assert m_a_d == pytest.approx(0.0046667, abs=1e-6)
    # on target and flat, the synthetic input sits on the zero-torque locus
    assert m_a_d == pytest.approx(zero_torque_air_mass(100.0), rel=1e-12)


def test_air_law_examples():
    b = bank(alpha={"ma": 1.1})
    s = EngineState(300.0, 0.0005, 100.0, 0.01)
    assert control_air(b, s, 0.01, 0.01, 0.01) == pytest.approx(1.1 * s.mdot_ao, rel=1e-12)
    b = bank()
    assert control_air(b, s, 0.009, 0.009, 0.01) == pytest.approx(-0.13205, abs=1e-3)


def test_speed_and_air_adaptation_signs():
    s = EngineState(300.0, 0.0005, 100.0, 0.01)
    b = bank()
    # speed above target means losses were underestimated
    assert adapt_speed(b, s, 1.0, 0.01) < 1.0
    assert adapt_air(b, s, 0.001, 0.01) < 1.0


def test_adaptation_overflow_is_reported():
    b = bank(rho=dict.fromkeys(CHANNELS, 1e-300))
    s = EngineState(300.0, 0.0005, 100.0, 0.01)
    with pytest.raises(NonFiniteEstimate):
        adapt_speed(b, s, 1e10, 0.01)


def test_specialised_laws_equal_generic():
    rng = random.Random(99)
    for _ in range(500):
        w = rng.uniform(60, 200)
        ma = rng.uniform(0.003, 0.012)
        s = EngineState(rng.uniform(20, 700), mdot_ao(ma, w) / rng.uniform(12, 17), w, ma)
        T = rng.choice([0.01, 0.04])
        beta = {ch: rng.uniform(0, 0.95) for ch in CHANNELS}
        alpha = {ch: rng.uniform(0.7, 1.3) for ch in CHANNELS}
        rho = {ch: rng.uniform(0.1, 10) for ch in CHANNELS}
        b = bank(T, beta, rho, alpha)
        ref_b = bank(T, beta, rho, alpha)
        d_now = {ch: s.value(ch) + rng.uniform(-1, 1) * 0.05 * abs(s.value(ch)) for ch in CHANNELS}
        d_next = {ch: d_now[ch] * rng.uniform(0.98, 1.02) for ch in CHANNELS}
        laws = {"texh": control_texh, "mf": control_fuel, "we": control_speed, "ma": control_air}
        adapts = {"texh": adapt_texh, "mf": adapt_fuel, "we": adapt_speed, "ma": adapt_air}
        for ch in CHANNELS:
            c = ref_b.channels()[ch]
            x = s.value(ch)
            sv = x - d_now[ch]
            u_ref = compute_control(c, x, sv, d_next[ch], DRIFT[ch](s), GAIN[ch](s))
            u = laws[ch](b, s, d_now[ch], d_next[ch], T)
            assert u == pytest.approx(u_ref, rel=1e-12, abs=1e-15)
            a_ref = update_adaptation(c, sv, DRIFT[ch](s))
            a = adapts[ch](b, s, sv, T)
            assert a == pytest.approx(a_ref, rel=1e-12)


def flat_traj(n, t_exh, omega, afr):
    return DesiredTrajectories([t_exh] * n, [omega] * n, [afr] * n)


def on_target_state():
    w = 100.0
    ma = zero_torque_air_mass(w)
    return EngineState(300.0, mdot_ao(ma, w) / 14.6, w, ma)


def test_cascade_fixed_point():
    s = on_target_state()
    tr = flat_traj(40, 300.0, 100.0, s.afr)
    # adaptation rates inside the stable range of the (s, alpha_tilde) loop
    b = bank(rho={ch: rho_for_rate(DEFAULT_ADAPTATION_RATE[ch], ch, 0.01) for ch in CHANNELS})
    for k in range(30):
        step = cascade_step(b, s, tr, k, 0.01)
        for ch in CHANNELS:
            assert abs(step.s[ch]) <= 1e-12 * max(1.0, abs(s.value(ch)))
        s = step_engine(s, step.inputs, T=0.01)


def test_cascade_single_perturbation_decays_alone():
    s0 = on_target_state()
    tr = flat_traj(60, 300.0, 100.0, s0.afr)
    s = EngineState(310.0, s0.mdot_f, s0.omega_e, s0.m_a)
    b = bank(adaptation=False)
    afr0 = s0.afr
    for k in range(40):
        step = cascade_step(b, s, tr, k, 0.01)
        assert step.s["texh"] == pytest.approx(10.0 * (-0.5) ** k, abs=1e-9)
        for ch in ("mf", "we", "ma"):
            assert abs(step.s[ch]) <= 1e-12 * max(1.0, abs(s.value(ch)))
        assert abs(s.afr - afr0) <= 1e-6
        s = step_engine(s, step.inputs, T=0.01)


@pytest.mark.parametrize("prediction", ["model", "sliding"])
def test_cascade_step_reports(prediction):
    s = on_target_state()
    tr = DesiredTrajectories([300.0] * 5, [100.0, 100.5, 101.0, 101.5, 102.0], [14.6] * 5)
    b = bank(prediction=prediction)
    step = cascade_step(b, s, tr, 0, 0.01)
    assert set(step.s) == set(CHANNELS)
    assert step.alpha_hat == dict.fromkeys(CHANNELS, 1.0)
    assert step.desired["afr"] == 14.6
    assert math.isfinite(step.m_a_d_next) and math.isfinite(step.mdot_f_d_next)


def test_bank_validation():
    with pytest.raises(ValueError):
        bank(prediction="psychic")
    tr = flat_traj(3, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        tr.check_horizon(5)


def test_matched_model_speed_tracks_ramp():
    # single-rate, matched: the speed error follows the sliding recursion
    s = on_target_state()
    n = 80
    tr = DesiredTrajectories([300.0] * n, [100.0 + 0.3 * k for k in range(n)], [14.6] * n)
    b = bank(adaptation=False)
    unc = EngineUncertainty()
    for k in range(n - 3):
        step = cascade_step(b, s, tr, k, 0.01)
        s = step_engine(s, step.inputs, unc, T=0.01)
    assert abs(s.omega_e - tr.omega_d[n - 3]) < 1e-9
