"""Cascaded SISO adaptive DSMCs for the engine.

Texh is driven by the spark input, mdot_f by the commanded fuel flow, omega_e
by a synthetic desired manifold air mass m_a_d, and m_a by the intake air flow.
The fuel reference comes from the desired AFR and the current cylinder air
flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .dsmc_core import DsmcChannel
from .errors import InvalidDesiredAfr, NonFiniteEstimate, ZeroInputGain
from .plant_engine import (
    CHANNELS,
    EXHAUST_EQUILIBRIUM,
    SPARK_GAIN,
    TORQUE_PER_AIR_MASS,
    DRIFT,
    EngineInputs,
    EngineState,
    mdot_ao,
    torque_loss,
)

AFI_EPS = 1e-9
SPEED_PREDICTIONS = ("sliding", "model")


@dataclass
class EngineControllerBank:
    texh: DsmcChannel
    mf: DsmcChannel
    we: DsmcChannel
    ma: DsmcChannel
    speed_prediction: str = "sliding"

    def __post_init__(self):
        if self.speed_prediction not in SPEED_PREDICTIONS:
            raise ValueError(f"speed_prediction must be one of {SPEED_PREDICTIONS}")
        Ts = {ch.T for ch in self.channels().values()}
        if len(Ts) != 1:
            raise ValueError("all four channels must share the sampling time")

    @classmethod
    def build(cls, T: float, beta: dict[str, float], rho: dict[str, float],
              alpha_hat0: dict[str, float] | None = None,
              adaptation: bool = True,
              speed_prediction: str = "sliding") -> "EngineControllerBank":
        alpha_hat0 = alpha_hat0 or {}
        return cls(**{
            ch: DsmcChannel(beta=beta[ch], rho=rho[ch], alpha_hat=alpha_hat0.get(ch, 1.0),
                            T=T, adaptation_enabled=adaptation)
            for ch in CHANNELS
        }, speed_prediction=speed_prediction)

    @property
    def T(self) -> float:
        return self.texh.T

    def channels(self) -> dict[str, DsmcChannel]:
        return {"texh": self.texh, "mf": self.mf, "we": self.we, "ma": self.ma}

    def alpha_hat(self) -> dict[str, float]:
        return {k: c.alpha_hat for k, c in self.channels().items()}


@dataclass(frozen=True)
class DesiredTrajectories:
    """Desired samples indexed by step k. Must extend two steps past the horizon."""

    t_exh_d: Sequence[float]
    omega_d: Sequence[float]
    afr_d: Sequence[float]

    def __len__(self) -> int:
        return min(len(self.t_exh_d), len(self.omega_d), len(self.afr_d))

    def check_horizon(self, n_steps: int) -> None:
        if len(self) < n_steps + 3:
            raise ValueError(f"trajectories hold {len(self)} samples; "
                             f"{n_steps + 3} needed for {n_steps} steps")


# -- exhaust temperature ----------------------------------------------------

def control_texh(bank: EngineControllerBank, state: EngineState,
                 t_exh_d_now: float, t_exh_d_next: float, T: float) -> float:
    c = bank.texh
    a = state.afi
    if abs(a) < AFI_EPS:
        raise ZeroInputGain(f"AFI vanishes at AFR = {state.afr:.6g}")
    te = state.tau_e
    s1 = state.t_exh - t_exh_d_now
    return te / (SPARK_GAIN * a * T) * (
        -c.alpha_hat * (T / te) * (EXHAUST_EQUILIBRIUM * a - state.t_exh)
        - (c.beta + 1.0) * s1 + t_exh_d_next - t_exh_d_now
    )


def adapt_texh(bank: EngineControllerBank, state: EngineState, s1: float, T: float) -> float:
    c = bank.texh
    if c.adaptation_enabled:
        c.alpha_hat = c.alpha_hat + T * s1 / (state.tau_e * c.rho) * (
            EXHAUST_EQUILIBRIUM * state.afi - state.t_exh)
        _check_estimate(c)
    return c.alpha_hat


# -- fuel flow --------------------------------------------------------------

def desired_fuel(mdot_ao_now: float, afr_d: float) -> float:
    if not afr_d > 0.0:
        raise InvalidDesiredAfr(f"desired AFR must be > 0, got {afr_d!r}")
    return mdot_ao_now / afr_d


def control_fuel(bank: EngineControllerBank, state: EngineState,
                 mf_d_now: float, mf_d_next: float, T: float) -> float:
    c = bank.mf
    tau_f = state.params.tau_f
    s2 = state.mdot_f - mf_d_now
    return tau_f / T * (c.alpha_hat * (T / tau_f) * state.mdot_f
                        - (c.beta + 1.0) * s2 + mf_d_next - mf_d_now)


def adapt_fuel(bank: EngineControllerBank, state: EngineState, s2: float, T: float) -> float:
    c = bank.mf
    if c.adaptation_enabled:
        c.alpha_hat = c.alpha_hat - T * s2 / (state.params.tau_f * c.rho) * state.mdot_f
        _check_estimate(c)
    return c.alpha_hat


# -- engine speed (synthetic input m_a_d) -----------------------------------

def control_speed(bank: EngineControllerBank, state: EngineState,
                  omega_d_now: float, omega_d_next: float, T: float) -> float:
    c = bank.we
    J = state.params.j_inertia
    s3 = state.omega_e - omega_d_now
    return J / (TORQUE_PER_AIR_MASS * T) * (
        c.alpha_hat * (T / J) * (100.0 + 0.4 * state.omega_e)
        - (c.beta + 1.0) * s3 + omega_d_next - omega_d_now
    )


def adapt_speed(bank: EngineControllerBank, state: EngineState, s3: float, T: float) -> float:
    c = bank.we
    if c.adaptation_enabled:
        c.alpha_hat = c.alpha_hat - T * s3 / (state.params.j_inertia * c.rho) * torque_loss(state.omega_e)
        _check_estimate(c)
    return c.alpha_hat


# -- manifold air mass ------------------------------------------------------

def control_air(bank: EngineControllerBank, state: EngineState,
                m_a_d_now: float, m_a_d_next: float, T: float) -> float:
    c = bank.ma
    s4 = state.m_a - m_a_d_now
    return (c.alpha_hat * state.mdot_ao * T - (c.beta + 1.0) * s4 + m_a_d_next - m_a_d_now) / T


def adapt_air(bank: EngineControllerBank, state: EngineState, s4: float, T: float) -> float:
    c = bank.ma
    if c.adaptation_enabled:
        c.alpha_hat = c.alpha_hat - T * s4 / c.rho * state.mdot_ao
        _check_estimate(c)
    return c.alpha_hat


def _check_estimate(c: DsmcChannel) -> None:
    if not math.isfinite(c.alpha_hat):
        raise NonFiniteEstimate("alpha_hat update overflowed")


# -- cascade ----------------------------------------------------------------

@dataclass(frozen=True)
class CascadeStep:
    """Everything the controller computed at step k (before adaptation)."""

    inputs: EngineInputs
    s: dict[str, float]
    desired: dict[str, float]
    alpha_hat: dict[str, float]
    f_values: dict[str, float]
    m_a_d_next: float
    mdot_f_d_next: float
    predicted_omega_next: float = field(repr=False, default=float("nan"))


def cascade_step(bank: EngineControllerBank, state: EngineState,
                 trajectories: DesiredTrajectories, k: int, T: float) -> CascadeStep:
    """Compute all four inputs at step k, then run the four adaptation updates.

    The inner loops need their references one step ahead. m_a_d(k+1) re-evaluates
    the speed law at k+1 with s3(k+1) taken as -beta3*s3(k); mdot_f_d(k+1)
    uses the air mass the nominal model predicts under the air command.
    """
    tr = trajectories
    p = state.params
    alpha_before = bank.alpha_hat()
    f_values = {ch: DRIFT[ch](state) for ch in CHANNELS}

    # exhaust temperature
    s1 = state.t_exh - tr.t_exh_d[k]
    delta = control_texh(bank, state, tr.t_exh_d[k], tr.t_exh_d[k + 1], T)

    # speed -> synthetic air mass reference
    s3 = state.omega_e - tr.omega_d[k]
    m_a_d = control_speed(bank, state, tr.omega_d[k], tr.omega_d[k + 1], T)
    if bank.speed_prediction == "model":
        # nominal speed dynamics with the air mass already in the manifold
        omega_pred = state.omega_e + (T / p.j_inertia) * (
            TORQUE_PER_AIR_MASS * state.m_a - bank.we.alpha_hat * torque_loss(state.omega_e))
    else:
        # speed loop assumed to obey its own sliding law
        omega_pred = tr.omega_d[k + 1] - bank.we.beta * s3
    if omega_pred > 0.0:
        state_pred_w = EngineState(state.t_exh, state.mdot_f, omega_pred, state.m_a, p)
        m_a_d_next = control_speed(bank, state_pred_w, tr.omega_d[k + 1], tr.omega_d[k + 2], T)
    else:
        m_a_d_next = m_a_d

    # manifold air mass
    s4 = state.m_a - m_a_d
    mdot_ai = control_air(bank, state, m_a_d, m_a_d_next, T)
    m_a_pred = state.m_a + T * mdot_ai - T * bank.ma.alpha_hat * state.mdot_ao

    # fuel, referenced to the desired AFR
    mf_d = desired_fuel(state.mdot_ao, tr.afr_d[k])
    if omega_pred > 0.0:
        mf_d_next = desired_fuel(mdot_ao(m_a_pred, omega_pred, p), tr.afr_d[k + 1])
    else:
        mf_d_next = mf_d
    s2 = state.mdot_f - mf_d
    mdot_fc = control_fuel(bank, state, mf_d, mf_d_next, T)

    adapt_texh(bank, state, s1, T)
    adapt_fuel(bank, state, s2, T)
    adapt_speed(bank, state, s3, T)
    adapt_air(bank, state, s4, T)

    return CascadeStep(
        inputs=EngineInputs(delta_spark=delta, mdot_fc=mdot_fc, mdot_ai=mdot_ai),
        s={"texh": s1, "mf": s2, "we": s3, "ma": s4},
        desired={"texh": tr.t_exh_d[k], "mf": mf_d, "we": tr.omega_d[k],
                 "ma": m_a_d, "afr": tr.afr_d[k]},
        alpha_hat=alpha_before,
        f_values=f_values,
        m_a_d_next=m_a_d_next,
        mdot_f_d_next=mf_d_next,
        predicted_omega_next=omega_pred,
    )
