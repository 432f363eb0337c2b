import math
import random

import pytest
from hypothesis import given, strategies as st

from adaptive_dsmc.dsmc_core import (
    DivergenceGuard,
    DsmcChannel,
    ScalarAffinePlant,
    adaptation_increment,
    channel_step,
    compute_control,
    euler_step,
    simulate_channel,
    sliding_variable,
    update_adaptation,
    xi_variable,
)
from adaptive_dsmc.errors import DivergedRun, NonFiniteEstimate, NonFiniteState, ZeroInputGain

finite = st.floats(-1e3, 1e3, allow_nan=False)


def decay_plant(alpha=1.0):
    return ScalarAffinePlant(f=lambda x: -x, g=lambda x: 1.0, alpha_true=alpha)


@pytest.mark.parametrize("x, xd, s", [(5.0, 5.0, 0.0), (7.5, 5.0, 2.5), (-1.0, 2.0, -3.0)])
def test_sliding_variable(x, xd, s):
    assert sliding_variable(x, xd) == s


@pytest.mark.parametrize("sn, s, b, xi", [(0, 0, 0.5, 0), (-0.5, 1.0, 0.5, 0), (0.2, 0.4, 0.25, 0.3)])
def test_xi_variable(sn, s, b, xi):
    assert xi_variable(sn, s, b) == pytest.approx(xi, abs=1e-15)


def test_euler_equilibrium():
    plant = ScalarAffinePlant(f=lambda x: 0.0, g=lambda x: 1.0)
    assert euler_step(plant, 3.7, 0.0, 0.05) == 3.7


@pytest.mark.parametrize("u, expected", [(0.0, 0.9), (10.0, 1.9)])
def test_euler_decay(u, expected):
    assert euler_step(decay_plant(), 1.0, u, 0.1) == pytest.approx(expected, abs=1e-15)


def test_euler_zero_gain_and_overflow():
    with pytest.raises(ZeroInputGain):
        euler_step(ScalarAffinePlant(lambda x: 0.0, lambda x: 0.0), 1.0, 1.0, 0.1)
    with pytest.raises(NonFiniteState):
        euler_step(decay_plant(), 1.0, 1e308, 10.0)


def test_compute_control_arithmetic():
    ch = DsmcChannel(beta=0.5, rho=1.0, alpha_hat=1.0, T=0.1)
    assert compute_control(ch, 1.0, 0.0, 1.0, 2.0, 1.0) == pytest.approx(-2.0, abs=1e-12)


def test_compute_control_zero_gain():
    with pytest.raises(ZeroInputGain):
        compute_control(DsmcChannel(), 1.0, 0.0, 1.0, 1.0, 0.0)


def test_compute_control_clamp():
    ch = DsmcChannel(beta=0.5, T=0.1, u_min=-1.0, u_max=1.0)
    assert compute_control(ch, 1.0, 0.0, 1.0, 2.0, 1.0) == -1.0


def first_order_law(x, x_d_next, f, g, alpha_hat, T):
    # deadbeat one-step law written out independently
    return (x_d_next - x - T * alpha_hat * f) / (T * g)


def test_first_order_equivalence_random():
    rng = random.Random(1234)
    for _ in range(1000):
        x, xd, f = (rng.uniform(-100, 100) for _ in range(3))
        g = rng.choice([-1, 1]) * rng.uniform(0.1, 10)
        ah, T = rng.uniform(0.5, 1.5), rng.uniform(1e-3, 0.1)
        ch = DsmcChannel(beta=0.0, alpha_hat=ah, T=T)
        u = compute_control(ch, x, x - rng.uniform(-1, 1), xd, f, g)
        ref = first_order_law(x, xd, f, g, ah, T)
        assert abs(u - ref) <= 1e-12 * max(1.0, abs(ref))


def test_update_adaptation_arithmetic():
    ch = DsmcChannel(alpha_hat=0.8, rho=0.5, T=0.01)
    assert update_adaptation(ch, 0.1, 2.0) == pytest.approx(0.804, abs=1e-15)
    assert ch.alpha_hat == pytest.approx(0.804, abs=1e-15)


def test_update_adaptation_zero_s_and_disabled():
    ch = DsmcChannel(alpha_hat=0.8)
    assert update_adaptation(ch, 0.0, 5.0) == 0.8
    off = DsmcChannel(alpha_hat=0.8, adaptation_enabled=False)
    assert update_adaptation(off, 3.0, 5.0) == 0.8


def test_update_adaptation_overflow():
    ch = DsmcChannel(alpha_hat=1.0, rho=1e-300, T=1.0)
    with pytest.raises(NonFiniteEstimate):
        update_adaptation(ch, 1e200, 1e200)


@pytest.mark.parametrize("kw", [dict(beta=1.0), dict(beta=-0.1), dict(rho=0.0), dict(T=0.0),
                                dict(alpha_hat=math.nan)])
def test_channel_validation(kw):
    with pytest.raises(ValueError):
        DsmcChannel(**kw)


def test_on_target_flat_holds():
    plant = decay_plant()
    ch = DsmcChannel(beta=0.5, rho=1.0, T=0.01)
    run = simulate_channel(plant, ch, 2.0, lambda k: 2.0, 50)
    assert max(abs(s) for s in run.s) < 1e-14


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9])
def test_geometric_decay(beta):
    ch = DsmcChannel(beta=beta, rho=1.0, T=0.01, adaptation_enabled=False)
    run = simulate_channel(decay_plant(), ch, 1.0, lambda k: 0.0, 40)
    for k, s in enumerate(run.s):
        assert abs(s - (-beta) ** k) <= 1e-12


def test_channel_step_order_uses_old_estimate():
    plant = decay_plant(alpha=1.5)
    ch = DsmcChannel(beta=0.5, rho=1.0, alpha_hat=1.0, T=0.1)
    u, x1, rec = channel_step(plant, ch, 1.0, 0.0, 0.0)
    assert u == pytest.approx(compute_control(DsmcChannel(beta=0.5, T=0.1), 1.0, 1.0, 0.0, -1.0, 1.0))
    assert rec.alpha_hat_after == pytest.approx(1.0 + adaptation_increment(1.0, -1.0, 0.1, 1.0))
    # xi = T f alpha_tilde with the estimate in force when u was computed
    assert rec.xi == pytest.approx(0.1 * (-1.0) * 0.5, abs=1e-14)


def test_divergence_guard():
    g = DivergenceGuard("x", 1.0, factor=10.0)
    g.check(1, 9.0)
    with pytest.raises(DivergedRun) as e:
        g.check(7, 11.0)
    assert e.value.step == 7 and e.value.channel == "x"
    with pytest.raises(DivergedRun):
        g.check(2, math.nan)


def test_simulate_channel_diverges_with_step_index():
    # first-order law with a huge adaptation gain 1/rho blows up
    plant = decay_plant(alpha=2.0)
    ch = DsmcChannel(beta=0.5, rho=1e-6, T=0.1)
    with pytest.raises(DivergedRun) as e:
        simulate_channel(plant, ch, 1.0, lambda k: 0.0, 200)
    assert e.value.step > 0


@given(x=finite, xd=finite, xdn=finite, ah=st.floats(0.1, 3), alpha=st.floats(0.1, 3),
       beta=st.floats(0.0, 0.99), T=st.floats(1e-3, 0.2))
def test_xi_equals_model_error(x, xd, xdn, ah, alpha, beta, T):
    plant = ScalarAffinePlant(f=lambda v: -v + 3.0, g=lambda v: 2.0, alpha_true=alpha)
    ch = DsmcChannel(beta=beta, rho=1.0, alpha_hat=ah, T=T, adaptation_enabled=False)
    _, _, rec = channel_step(plant, ch, x, xd, xdn)
    expected = T * (-x + 3.0) * (alpha - ah)
    assert rec.xi == pytest.approx(expected, abs=1e-9 * (1 + abs(x) + abs(xd) + abs(xdn)))


@given(s0=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6), beta=st.floats(0.01, 0.99))
def test_matched_error_non_increasing(s0, beta):
    ch = DsmcChannel(beta=beta, rho=1.0, T=0.01, adaptation_enabled=False)
    run = simulate_channel(decay_plant(), ch, s0, lambda k: 0.0, 30, guard_floor=1.0)
    s = [abs(v) for v in run.s]
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(s, s[1:]))
