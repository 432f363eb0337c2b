"""Fixed-step closed-loop simulation of the engine with the DSMC cascade."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dsmc_core import DivergenceGuard
from .engine_control import SPEED_PREDICTIONS, DesiredTrajectories, EngineControllerBank, cascade_step, control_speed
from .errors import ConfigError, DivergedRun, DsmcError, EmptyLog, ZeroBaseline
from .lyapunov import StabilityReport, analyze_series
from .plant_engine import (
    CHANNELS,
    EngineParams,
    EngineState,
    EngineUncertainty,
    air_mass_for_afr,
    step_engine,
)
from .trajectories import Profile

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "time", "texh", "texh_d", "mdot_f", "mdot_f_d", "omega_e", "omega_d", "m_a", "m_a_d",
    "afr", "afr_d", "s1", "s2", "s3", "s4",
    "alpha_hat_texh", "alpha_hat_mf", "alpha_hat_we", "alpha_hat_ma",
    "delta", "mdot_fc", "mdot_ai",
)
SLIDING_COLUMN = {"texh": "s1", "mf": "s2", "we": "s3", "ma": "s4"}
TRACKED = ("afr", "texh", "rpm")
RAD_S_TO_RPM = 60.0 / (2.0 * math.pi)
LOG_DIGITS = 12


def quantize(values: np.ndarray, digits: int = LOG_DIGITS) -> np.ndarray:
    """Round each entry to ``digits`` significant digits, exactly as the CSV writer does."""
    fmt = f"{{:.{digits}g}}"
    return np.array([float(fmt.format(v)) for v in np.asarray(values, dtype=float).ravel()])

DEFAULT_BETA = 0.5
# Typical drift magnitude per channel along the default run. The (s, alpha_tilde)
# loop gain per step is (T*f)^2/rho, so rho is derived from a dimensionless rate.
DRIFT_SCALE = {"texh": 6000.0, "mf": 0.009, "we": 950.0, "ma": 0.007}
DEFAULT_ADAPTATION_RATE = {"texh": 0.2, "mf": 0.2, "we": 0.2, "ma": 0.4}


def rho_for_rate(rate: float, channel: str, T: float) -> float:
    """Adaptation gain rho giving per-step loop gain ``rate`` at sampling time T."""
    if not rate > 0.0:
        raise ConfigError(f"adaptation rate for {channel} must be > 0, got {rate}")
    return (T * DRIFT_SCALE[channel]) ** 2 / rate


@dataclass(frozen=True)
class InitialConditions:
    t_exh: float = 25.0
    mdot_f: float = 0.0005
    omega_e: float = 90.0
    # "afr": put the initial AFR on afr_d(0); "cascade": put m_a on the speed
    # loop's synthetic reference m_a_d(0); or a number in kg
    m_a: float | str = "afr"


@dataclass(frozen=True)
class SimConfig:
    sampling_time: float = 0.01
    horizon: float = 10.0
    order: int = 2
    adaptation: bool = True
    uncertainty: EngineUncertainty = EngineUncertainty()
    beta: dict = field(default_factory=lambda: dict.fromkeys(CHANNELS, DEFAULT_BETA))
    adaptation_rate: dict = field(default_factory=lambda: dict(DEFAULT_ADAPTATION_RATE))
    # explicit per-channel rho; channels left out get rho_for_rate(adaptation_rate)
    rho: dict = field(default_factory=dict)
    alpha_hat0: dict = field(default_factory=lambda: dict.fromkeys(CHANNELS, 1.0))
    t_exh_profile: Profile = Profile.ramp(25.0, 400.0, 0.0, 10.0)
    omega_profile: Profile = Profile.ramp(90.0, 105.0, 0.0, 5.0)
    afr_profile: Profile = Profile.constant(14.6)
    speed_prediction: str = "model"
    plant_rate_mode: str = "single"
    plant_substeps: int = 1
    initial: InitialConditions = InitialConditions()
    params: EngineParams = EngineParams()
    settling_exclusion: float = 0.0

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.sampling_time))

    def effective_beta(self) -> dict[str, float]:
        if self.order == 1:
            return dict.fromkeys(CHANNELS, 0.0)
        return {ch: float(self.beta[ch]) for ch in CHANNELS}

    def resolved_rho(self) -> dict[str, float]:
        out = {}
        for ch in CHANNELS:
            if ch in self.rho:
                out[ch] = float(self.rho[ch])
            else:
                out[ch] = rho_for_rate(float(self.adaptation_rate[ch]), ch, self.sampling_time)
        return out

    def validate(self) -> list[str]:
        """Raise ConfigError on invalid settings; return non-fatal warnings."""
        T = self.sampling_time
        if not (T > 0 and math.isfinite(T)):
            raise ConfigError(f"sampling time must be > 0, got {T}")
        if not self.horizon >= 0 or (self.horizon > 0 and self.horizon < T):
            raise ConfigError("horizon must be 0 or at least one sampling time")
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        if self.speed_prediction not in SPEED_PREDICTIONS:
            raise ConfigError(f"speed_prediction must be one of {SPEED_PREDICTIONS}")
        if self.plant_rate_mode not in ("single", "multirate"):
            raise ConfigError(f"plant_rate_mode must be single or multirate, got {self.plant_rate_mode!r}")
        if int(self.plant_substeps) != self.plant_substeps or self.plant_substeps < 1:
            raise ConfigError("plant_substeps must be an integer >= 1")
        if self.plant_rate_mode == "single" and self.plant_substeps != 1:
            raise ConfigError("plant_substeps > 1 requires plant_rate_mode = multirate")
        unknown = (set(self.rho) | set(self.adaptation_rate)) - set(CHANNELS)
        if unknown:
            raise ConfigError(f"unknown channels in gains: {sorted(unknown)}")
        rho = self.resolved_rho()
        for ch in CHANNELS:
            b = self.beta[ch]
            if self.order == 2 and not 0.0 < b < 1.0:
                raise ConfigError(
                    f"beta_{ch} = {b} violates the stability condition 0 < beta < 1")
            if not (rho[ch] > 0.0 and math.isfinite(rho[ch])):
                raise ConfigError(f"rho_{ch} must be > 0, got {rho[ch]}")
            if not math.isfinite(self.alpha_hat0[ch]):
                raise ConfigError(f"alpha_hat0_{ch} must be finite")
        if not self.settling_exclusion >= 0.0:
            raise ConfigError("settling exclusion must be >= 0")
        warnings = []
        for name, prof in (("t_exh_d", self.t_exh_profile), ("omega_d", self.omega_profile),
                           ("afr_d", self.afr_profile)):
            feature = prof.shortest_feature()
            if T > 0.5 * feature:
                warnings.append(
                    f"sampling time {T:g} s exceeds half the shortest {name} feature "
                    f"({feature:g} s); the sampled reference under-resolves it")
        if np.any(self.afr_profile.sample(T, self.n_steps + 3) <= 0):
            raise ConfigError("desired AFR must stay > 0")
        return warnings

    def trajectories(self) -> DesiredTrajectories:
        n = self.n_steps + 3
        T = self.sampling_time
        return DesiredTrajectories(
            t_exh_d=self.t_exh_profile.sample(T, n).tolist(),
            omega_d=self.omega_profile.sample(T, n).tolist(),
            afr_d=self.afr_profile.sample(T, n).tolist(),
        )

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


class TrajectoryLog:
    """Column store of per-step records; one row per sample k = 0..N."""

    def __init__(self, columns: dict[str, np.ndarray], sampling_time: float,
                 f_values: dict[str, np.ndarray] | None = None):
        missing = [c for c in CSV_COLUMNS if c not in columns]
        if missing:
            raise ValueError(f"log lacks columns {missing}")
        self.columns = {c: np.asarray(columns[c], dtype=float) for c in CSV_COLUMNS}
        self.sampling_time = float(sampling_time)
        self.f_values = f_values or {}

    def __len__(self) -> int:
        return len(self.columns["time"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def channel_series(self, channel: str) -> tuple[np.ndarray, np.ndarray]:
        return self.columns[SLIDING_COLUMN[channel]], self.columns["alpha_hat_" + channel]

    def tracking_error(self, channel: str) -> np.ndarray:
        c = self.columns
        if channel == "afr":
            return np.abs(c["afr"] - c["afr_d"])
        if channel == "texh":
            return np.abs(c["texh"] - c["texh_d"])
        if channel in ("rpm", "speed"):
            return np.abs(c["omega_e"] - c["omega_d"]) * RAD_S_TO_RPM
        raise KeyError(f"unknown tracked channel {channel!r}")


def _initial_state(cfg: SimConfig, traj: DesiredTrajectories, bank: EngineControllerBank) -> EngineState:
    ic = cfg.initial
    p = cfg.params
    if isinstance(ic.m_a, str):
        if ic.m_a == "afr":
            m_a = air_mass_for_afr(traj.afr_d[0], ic.mdot_f, ic.omega_e, p)
        elif ic.m_a == "cascade":
            probe = EngineState(ic.t_exh, ic.mdot_f, ic.omega_e, 0.0, p)
            m_a = control_speed(bank, probe, traj.omega_d[0], traj.omega_d[1], cfg.sampling_time)
        else:
            raise ConfigError(f"initial m_a must be 'afr', 'cascade' or a number, got {ic.m_a!r}")
    else:
        m_a = float(ic.m_a)
    return EngineState(ic.t_exh, ic.mdot_f, ic.omega_e, m_a, p)


def run(cfg: SimConfig) -> TrajectoryLog:
    """Simulate ``cfg`` and return the full per-step log.

    Raises DivergedRun if any sliding variable leaves its guard envelope or the
    plant leaves its physical domain.
    """
    for w in cfg.validate():
        log.warning(w)
    T = cfg.sampling_time
    n = cfg.n_steps
    traj = cfg.trajectories()
    beta = cfg.effective_beta()
    bank = EngineControllerBank.build(T, beta, cfg.resolved_rho(), cfg.alpha_hat0, cfg.adaptation,
                                      cfg.speed_prediction)
    state = _initial_state(cfg, traj, bank)
    sub = int(cfg.plant_substeps) if cfg.plant_rate_mode == "multirate" else 1
    dt = T / sub

    rows = {c: np.empty(n + 1) for c in CSV_COLUMNS}
    fvals = {ch: np.empty(n + 1) for ch in CHANNELS}
    guards: dict[str, DivergenceGuard] = {}
    ch_keys = {"texh": "texh", "mf": "mdot_f", "we": "omega_e", "ma": "m_a"}

    for k in range(n + 1):
        try:
            step = cascade_step(bank, state, traj, k, T)
        except DsmcError as exc:
            raise DivergedRun(k, "controller", str(exc)) from exc
        if k == 0:
            for ch in CHANNELS:
                scale = abs(state.value(ch)) + abs(step.desired[ch])
                guards[ch] = DivergenceGuard(ch, step.s[ch], floor=1e-3 * max(scale, 1e-12))
        else:
            for ch in CHANNELS:
                guards[ch].check(k, step.s[ch])
        d = step.desired
        r = rows
        r["time"][k] = k * T
        r["texh"][k], r["texh_d"][k] = state.t_exh, d["texh"]
        r["mdot_f"][k], r["mdot_f_d"][k] = state.mdot_f, d["mf"]
        r["omega_e"][k], r["omega_d"][k] = state.omega_e, d["we"]
        r["m_a"][k], r["m_a_d"][k] = state.m_a, d["ma"]
        r["afr"][k], r["afr_d"][k] = state.afr, d["afr"]
        for ch in CHANNELS:
            r[SLIDING_COLUMN[ch]][k] = step.s[ch]
            r["alpha_hat_" + ch][k] = step.alpha_hat[ch]
            fvals[ch][k] = step.f_values[ch]
        r["delta"][k] = step.inputs.delta_spark
        r["mdot_fc"][k] = step.inputs.mdot_fc
        r["mdot_ai"][k] = step.inputs.mdot_ai
        if k == n:
            break
        try:
            for _ in range(sub):
                state = step_engine(state, step.inputs, cfg.uncertainty, T=dt)
        except DsmcError as exc:
            raise DivergedRun(k + 1, "plant", str(exc)) from exc
    # records are kept at file precision so a written log re-reads bit for bit
    return TrajectoryLog({c: quantize(v) for c, v in rows.items()}, T, fvals)


# -- metrics ----------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    mean_error: dict[str, float]
    improvement: dict[str, float] | None = None
    label: str = ""


def mean_tracking_error(log_: TrajectoryLog, channel: str, settling_exclusion: float = 0.0) -> float:
    if len(log_) == 0:
        raise EmptyLog("log has no records")
    err = log_.tracking_error(channel)
    keep = log_["time"] >= settling_exclusion - 1e-12
    if not np.any(keep):
        raise EmptyLog(f"no records after the {settling_exclusion} s exclusion window")
    return float(np.mean(err[keep]))


def metrics(log_: TrajectoryLog, settling_exclusion: float = 0.0, label: str = "") -> MetricsReport:
    return MetricsReport({ch: mean_tracking_error(log_, ch, settling_exclusion) for ch in TRACKED},
                         label=label)


def improvement(e_a: float, e_b: float) -> float:
    """Percent reduction of error from baseline a to candidate b (positive = b better)."""
    if e_a == 0.0:
        if e_b == 0.0:
            return 0.0
        raise ZeroBaseline("baseline mean error is zero")
    return 100.0 * (e_a - e_b) / e_a


def compare(log_a: TrajectoryLog, log_b: TrajectoryLog, settling_exclusion: float = 0.0) -> dict[str, float]:
    ma = metrics(log_a, settling_exclusion).mean_error
    mb = metrics(log_b, settling_exclusion).mean_error
    return {ch: improvement(ma[ch], mb[ch]) for ch in TRACKED}


def stability_reports(log_: TrajectoryLog, cfg: SimConfig,
                      transient_steps: int | None = None) -> dict[str, StabilityReport]:
    beta = cfg.effective_beta()
    rho = cfg.resolved_rho()
    out = {}
    for ch in CHANNELS:
        s, ah = log_.channel_series(ch)
        out[ch] = analyze_series(s, ah, cfg.uncertainty.for_channel(ch), beta[ch], rho[ch],
                                 transient_steps)
    return out


# -- sweeps -----------------------------------------------------------------

SWEEP_AXES = ("sampling_time", "uncertainty", "gain", "order")


def _apply(cfg: SimConfig, axis: str, value) -> SimConfig:
    if axis == "sampling_time":
        return cfg.with_(sampling_time=float(value))
    if axis == "uncertainty":
        if isinstance(value, EngineUncertainty):
            return cfg.with_(uncertainty=value)
        return cfg.with_(uncertainty=EngineUncertainty.uniform(float(value)))
    if axis == "gain":
        return cfg.with_(beta=dict.fromkeys(CHANNELS, float(value)))
    if axis == "order":
        return cfg.with_(order=int(value))
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


@dataclass(frozen=True)
class SweepResult:
    value: object
    config: SimConfig
    log: TrajectoryLog
    metrics: MetricsReport


def sweep(base: SimConfig, axis: str, values: Sequence, workers: int = 1) -> list[SweepResult]:
    """One run per value, returned in the order of ``values``."""
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    cfgs = [_apply(base, axis, v) for v in values]

    def one(i: int) -> SweepResult:
        try:
            lg = run(cfgs[i])
        except DivergedRun as exc:
            raise DivergedRun(exc.step, exc.channel, f"{axis}={values[i]!r}: {exc.detail}") from exc
        return SweepResult(values[i], cfgs[i], lg,
                           metrics(lg, cfgs[i].settling_exclusion, label=f"{axis}={values[i]}"))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(len(cfgs))))
    return [one(i) for i in range(len(cfgs))]


def table1_grid(base: SimConfig, sampling_times: Iterable[float] = (0.01, 0.04),
                orders: Iterable[int] = (1, 2)) -> dict[tuple[int, float], MetricsReport]:
    """Mean tracking errors for every (order, sampling time) pair on identical references."""
    out = {}
    for T in sampling_times:
        for order in orders:
            cfg = base.with_(sampling_time=T, order=order,
                             plant_substeps=substeps_for(base, T))
            out[(order, T)] = metrics(run(cfg), cfg.settling_exclusion, label=f"order {order}, T={T}")
    return out


def substeps_for(base: SimConfig, T: float) -> int:
    """Plant substeps keeping the plant step of ``base`` when T changes (multirate only)."""
    if base.plant_rate_mode != "multirate":
        return 1
    plant_dt = base.sampling_time / base.plant_substeps
    return max(1, int(round(T / plant_dt)))
