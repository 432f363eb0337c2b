"""Four-state mean-value spark-ignition engine model.

States: exhaust gas temperature t_exh [degC], cylinder fuel flow mdot_f [kg/s],
crankshaft speed omega_e [rad/s] and intake-manifold air mass m_a [kg].
Each state obeys x+ = x + T*alpha*f(x) + T*g(x)*u, with the multiplicative
uncertainty alpha acting on the drift term only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import NonFiniteState, NonPositiveSpeed, SingularTimeConstant

CHANNELS = ("texh", "mf", "we", "ma")

TORQUE_PER_AIR_MASS = 30000.0  # N*m/kg
EXHAUST_EQUILIBRIUM = 600.0  # degC at AFI = 1
SPARK_GAIN = 7.5


@dataclass(frozen=True)
class EngineParams:
    j_inertia: float = 0.1454  # m^2 kg
    tau_f: float = 0.06  # s
    k1: float = 0.0254
    clamp_eta_vol: bool = False

    def __post_init__(self):
        for name in ("j_inertia", "tau_f", "k1"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class EngineUncertainty:
    alpha_texh: float = 1.0
    alpha_mf: float = 1.0
    alpha_we: float = 1.0
    alpha_ma: float = 1.0

    def __post_init__(self):
        for name in ("alpha_texh", "alpha_mf", "alpha_we", "alpha_ma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def for_channel(self, channel: str) -> float:
        return getattr(self, "alpha_" + channel)

    @classmethod
    def uniform(cls, value: float) -> "EngineUncertainty":
        return cls(value, value, value, value)


@dataclass(frozen=True)
class EngineInputs:
    delta_spark: float
    mdot_fc: float
    mdot_ai: float

    def for_channel(self, channel: str) -> float:
        return {"texh": self.delta_spark, "mf": self.mdot_fc,
                "we": math.nan, "ma": self.mdot_ai}[channel]


def afi(afr: float) -> float:
    return math.cos(0.13 * (afr - 13.5))


def tau_e(omega_e: float) -> float:
    if not omega_e > 0.0:
        raise SingularTimeConstant(f"tau_e undefined at omega_e = {omega_e!r}")
    return 2.0 * math.pi / omega_e


def torque_loss(omega_e: float) -> float:
    return 0.4 * omega_e + 100.0


def engine_torque(m_a: float, omega_e: float) -> float:
    return TORQUE_PER_AIR_MASS * m_a - 0.4 * omega_e - 100.0


def eta_vol(m_a: float, omega_e: float, clamp: bool = False) -> float:
    w = omega_e
    value = (
        m_a**2 * (-0.1636 * w**2 - 7.093 * w - 1750.0)
        + m_a * (0.0029 * w**2 - 0.4033 * w + 85.38)
        - (1.06e-5 * w**2 - 0.0021 * w - 0.2719)
    )
    if clamp:
        value = min(max(value, 0.05), 1.2)
    return value


def mdot_ao(m_a: float, omega_e: float, params: EngineParams = EngineParams()) -> float:
    """Air mass flow out of the manifold into the cylinders [kg/s]."""
    return params.k1 * m_a * omega_e * eta_vol(m_a, omega_e, params.clamp_eta_vol)


@dataclass(frozen=True)
class EngineState:
    t_exh: float
    mdot_f: float
    omega_e: float
    m_a: float
    params: EngineParams = EngineParams()

    def __post_init__(self):
        if not self.omega_e > 0.0:
            raise NonPositiveSpeed(f"omega_e must be > 0, got {self.omega_e!r}")

    @property
    def mdot_ao(self) -> float:
        return mdot_ao(self.m_a, self.omega_e, self.params)

    @property
    def afr(self) -> float:
        if self.mdot_f > 0.0:
            return self.mdot_ao / self.mdot_f
        return math.inf

    @property
    def afi(self) -> float:
        afr = self.afr
        if not math.isfinite(afr):
            raise NonFiniteState(f"AFR undefined at mdot_f = {self.mdot_f!r}")
        return afi(afr)

    @property
    def tau_e(self) -> float:
        return tau_e(self.omega_e)

    @property
    def rpm(self) -> float:
        return self.omega_e * 60.0 / (2.0 * math.pi)

    def value(self, channel: str) -> float:
        return {"texh": self.t_exh, "mf": self.mdot_f,
                "we": self.omega_e, "ma": self.m_a}[channel]


# Drift f and input gain g per channel. The speed channel's "input" is the
# manifold air mass itself (synthetic input).

def f_texh(state: EngineState) -> float:
    return (EXHAUST_EQUILIBRIUM * state.afi - state.t_exh) / state.tau_e


def g_texh(state: EngineState) -> float:
    return SPARK_GAIN * state.afi / state.tau_e


def f_mf(state: EngineState) -> float:
    return -state.mdot_f / state.params.tau_f


def g_mf(state: EngineState) -> float:
    return 1.0 / state.params.tau_f


def f_we(state: EngineState) -> float:
    return -torque_loss(state.omega_e) / state.params.j_inertia


def g_we(state: EngineState) -> float:
    return TORQUE_PER_AIR_MASS / state.params.j_inertia


def f_ma(state: EngineState) -> float:
    return -state.mdot_ao


def g_ma(state: EngineState) -> float:
    return 1.0


DRIFT = {"texh": f_texh, "mf": f_mf, "we": f_we, "ma": f_ma}
GAIN = {"texh": g_texh, "mf": g_mf, "we": g_we, "ma": g_ma}


def step_engine(
    state: EngineState,
    inputs: EngineInputs,
    unc: EngineUncertainty = EngineUncertainty(),
    params: EngineParams | None = None,
    T: float = 0.01,
) -> EngineState:
    """Advance all four states by one forward-Euler step of length T."""
    if not T > 0.0:
        raise ValueError("T must be > 0")
    if params is not None and params is not state.params:
        state = replace(state, params=params)
    p = state.params
    te = state.tau_e
    a = state.afi
    t_exh = (state.t_exh
             + T * unc.alpha_texh * (EXHAUST_EQUILIBRIUM * a - state.t_exh) / te
             + T * (SPARK_GAIN * a / te) * inputs.delta_spark)
    mdot_f = (state.mdot_f
              + T * unc.alpha_mf * (-state.mdot_f / p.tau_f)
              + (T / p.tau_f) * inputs.mdot_fc)
    omega_e = (state.omega_e
               + (T / p.j_inertia) * TORQUE_PER_AIR_MASS * state.m_a
               - T * unc.alpha_we * torque_loss(state.omega_e) / p.j_inertia)
    m_a = state.m_a + T * inputs.mdot_ai - T * unc.alpha_ma * state.mdot_ao
    for name, v in (("t_exh", t_exh), ("mdot_f", mdot_f), ("omega_e", omega_e), ("m_a", m_a)):
        if not math.isfinite(v):
            raise NonFiniteState(f"{name} became non-finite")
    if not omega_e > 0.0:
        raise NonPositiveSpeed(f"omega_e stepped to {omega_e!r}")
    return EngineState(t_exh, mdot_f, omega_e, m_a, p)


def air_mass_for_afr(afr_target: float, mdot_f: float, omega_e: float,
                     params: EngineParams = EngineParams()) -> float:
    """Manifold air mass giving ``mdot_ao / mdot_f == afr_target`` at ``omega_e``.

    Root taken on the rising branch of mdot_ao(m_a), below its peak.
    """
    from scipy.optimize import brentq, minimize_scalar

    peak = minimize_scalar(lambda m: -mdot_ao(m, omega_e, params),
                           bounds=(0.0, 0.1), method="bounded", options={"xatol": 1e-12})
    target = afr_target * mdot_f
    if target >= mdot_ao(peak.x, omega_e, params):
        raise ValueError(f"AFR {afr_target} unreachable at omega_e={omega_e}: "
                         "mdot_ao peak too small")
    return brentq(lambda m: mdot_ao(m, omega_e, params) - target, 0.0, peak.x,
                  xtol=1e-15, rtol=1e-14)


def zero_torque_air_mass(omega_e: float) -> float:
    return torque_loss(omega_e) / TORQUE_PER_AIR_MASS
