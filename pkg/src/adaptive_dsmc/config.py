"""INI experiment files.

Every key carries its unit in the name. Unknown sections or keys are rejected so
that a typo never silently falls back to a default. ``FORMAT_REFERENCE`` below
is the authoritative list.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .plant_engine import CHANNELS, EngineParams, EngineUncertainty
from .sim import DEFAULT_ADAPTATION_RATE, DEFAULT_BETA, InitialConditions, SimConfig
from .trajectories import Profile

FORMAT_REFERENCE = """\
[simulation]
sampling_time_ms      controller sampling time T in milliseconds (default 10)
horizon_s             simulated time in seconds (default 10)
order                 1 or 2 (default 2)
adaptation            true/false (default true)
plant_rate_mode       single | multirate (default single)
plant_substeps        Euler substeps per sample in multirate mode (default 1)
speed_prediction      model | sliding: how omega_e(k+1) is predicted when the
                      speed loop evaluates m_a_d(k+1) (default model)
settling_exclusion_s  seconds dropped from the start of the mean error (default 0)
clamp_eta_vol         clamp volumetric efficiency to [0.05, 1.2] (default false)

[uncertainty]          true multipliers on the drift terms (default 1)
alpha_texh, alpha_mf, alpha_we, alpha_ma

[gains]
beta                   second-order gain for every channel (default 0.5)
beta_<ch>              per-channel override
adaptation_rate_<ch>   dimensionless per-step adaptation rate; rho follows from T
rho_<ch>               explicit adaptation gain, overrides the rate
alpha_hat0_<ch>        initial estimate (default 1)

[trajectories]         profile lines: constant v | ramp v0 v1 t0 t1 |
                       smoothstep v0 v1 t0 t1 | piecewise t:v t:v ...
t_exh_d_degC, omega_d_rad_s, afr_d

[initial]
t_exh_degC, mdot_f_kg_s, omega_e_rad_s
m_a_kg                 number, "afr" (match afr_d at t = 0; default) or "cascade"
                       (match the speed loop's synthetic reference)

[output]
csv                    log file name (default log.csv)
metrics                metrics table file name (default metrics.txt)
stability              stability report file name (default stability.json)
plot                   true/false: also write gnuplot .dat and .gp (default true)
workers                sweep threads (default 1)

<ch> is one of texh, mf, we, ma.
"""

_SIM_KEYS = {"sampling_time_ms", "horizon_s", "order", "adaptation", "plant_rate_mode",
             "plant_substeps", "speed_prediction", "settling_exclusion_s", "clamp_eta_vol"}
_UNC_KEYS = {f"alpha_{ch}" for ch in CHANNELS}
_GAIN_KEYS = ({"beta"} | {f"beta_{ch}" for ch in CHANNELS}
              | {f"adaptation_rate_{ch}" for ch in CHANNELS}
              | {f"rho_{ch}" for ch in CHANNELS}
              | {f"alpha_hat0_{ch}" for ch in CHANNELS})
_TRAJ_KEYS = {"t_exh_d_degc", "omega_d_rad_s", "afr_d"}
_INIT_KEYS = {"t_exh_degc", "mdot_f_kg_s", "omega_e_rad_s", "m_a_kg"}
_OUT_KEYS = {"csv", "metrics", "stability", "plot", "workers"}

SCHEMA = {
    "simulation": _SIM_KEYS,
    "uncertainty": _UNC_KEYS,
    "gains": _GAIN_KEYS,
    "trajectories": _TRAJ_KEYS,
    "initial": _INIT_KEYS,
    "output": _OUT_KEYS,
}


@dataclass(frozen=True)
class OutputOptions:
    csv: str = "log.csv"
    metrics: str = "metrics.txt"
    stability: str = "stability.json"
    plot: bool = True
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    output: OutputOptions = OutputOptions()


def _float(sec: configparser.SectionProxy, key: str, default: float) -> float:
    if key not in sec:
        return default
    try:
        v = float(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r} is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"[{sec.name}] {key} must be finite")
    return v


def _int(sec: configparser.SectionProxy, key: str, default: int) -> int:
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r} is not an integer") from None


def _bool(sec: configparser.SectionProxy, key: str, default: bool) -> bool:
    if key not in sec:
        return default
    try:
        return sec.getboolean(key)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r} is not true/false") from None


def _profile(sec: configparser.SectionProxy, key: str, default: Profile) -> Profile:
    if key not in sec:
        return default
    try:
        return Profile.parse(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{name}]")
        extra = set(cp[name]) - SCHEMA[name]
        if extra:
            raise ConfigError(f"{source}: unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
    for name in SCHEMA:
        if not cp.has_section(name):
            cp.add_section(name)

    d = SimConfig()
    s = cp["simulation"]
    order = _int(s, "order", d.order)
    params = EngineParams(clamp_eta_vol=_bool(s, "clamp_eta_vol", False))

    u = cp["uncertainty"]
    unc = EngineUncertainty(*(_float(u, f"alpha_{ch}", 1.0) for ch in CHANNELS))

    g = cp["gains"]
    beta_all = _float(g, "beta", DEFAULT_BETA)
    beta = {ch: _float(g, f"beta_{ch}", beta_all) for ch in CHANNELS}
    rate = {ch: _float(g, f"adaptation_rate_{ch}", DEFAULT_ADAPTATION_RATE[ch]) for ch in CHANNELS}
    rho = {ch: _float(g, f"rho_{ch}", 0.0) for ch in CHANNELS if f"rho_{ch}" in g}
    alpha0 = {ch: _float(g, f"alpha_hat0_{ch}", 1.0) for ch in CHANNELS}

    t = cp["trajectories"]
    i = cp["initial"]
    ic0 = InitialConditions()
    m_a = i.get("m_a_kg", ic0.m_a)
    if m_a not in ("afr", "cascade"):
        m_a = _float(i, "m_a_kg", 0.0)
    initial = InitialConditions(
        t_exh=_float(i, "t_exh_degc", ic0.t_exh),
        mdot_f=_float(i, "mdot_f_kg_s", ic0.mdot_f),
        omega_e=_float(i, "omega_e_rad_s", ic0.omega_e),
        m_a=m_a,
    )

    try:
        sim = SimConfig(
            sampling_time=_float(s, "sampling_time_ms", d.sampling_time * 1000.0) / 1000.0,
            horizon=_float(s, "horizon_s", d.horizon),
            order=order,
            adaptation=_bool(s, "adaptation", d.adaptation),
            uncertainty=unc,
            beta=beta,
            adaptation_rate=rate,
            rho=rho,
            alpha_hat0=alpha0,
            t_exh_profile=_profile(t, "t_exh_d_degc", d.t_exh_profile),
            omega_profile=_profile(t, "omega_d_rad_s", d.omega_profile),
            afr_profile=_profile(t, "afr_d", d.afr_profile),
            speed_prediction=s.get("speed_prediction", d.speed_prediction),
            plant_rate_mode=s.get("plant_rate_mode", d.plant_rate_mode),
            plant_substeps=_int(s, "plant_substeps", d.plant_substeps),
            initial=initial,
            params=params,
            settling_exclusion=_float(s, "settling_exclusion_s", d.settling_exclusion),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    o = cp["output"]
    out = OutputOptions(
        csv=o.get("csv", OutputOptions.csv),
        metrics=o.get("metrics", OutputOptions.metrics),
        stability=o.get("stability", OutputOptions.stability),
        plot=_bool(o, "plot", OutputOptions.plot),
        workers=_int(o, "workers", OutputOptions.workers),
    )
    if out.workers < 1:
        raise ConfigError("[output] workers must be >= 1")
    return ExperimentConfig(sim, out)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(exp: ExperimentConfig) -> str:
    """Render ``exp`` back to INI text; parse_config(dump_config(x)) == x."""
    c = exp.sim
    lines = [
        "[simulation]",
        f"sampling_time_ms = {c.sampling_time * 1000.0!r}",
        f"horizon_s = {c.horizon!r}",
        f"order = {c.order}",
        f"adaptation = {str(c.adaptation).lower()}",
        f"plant_rate_mode = {c.plant_rate_mode}",
        f"plant_substeps = {c.plant_substeps}",
        f"speed_prediction = {c.speed_prediction}",
        f"settling_exclusion_s = {c.settling_exclusion!r}",
        f"clamp_eta_vol = {str(c.params.clamp_eta_vol).lower()}",
        "",
        "[uncertainty]",
        *(f"alpha_{ch} = {c.uncertainty.for_channel(ch)!r}" for ch in CHANNELS),
        "",
        "[gains]",
        *(f"beta_{ch} = {c.beta[ch]!r}" for ch in CHANNELS),
        *(f"adaptation_rate_{ch} = {c.adaptation_rate[ch]!r}" for ch in CHANNELS),
        *(f"rho_{ch} = {c.rho[ch]!r}" for ch in CHANNELS if ch in c.rho),
        *(f"alpha_hat0_{ch} = {c.alpha_hat0[ch]!r}" for ch in CHANNELS),
        "",
        "[trajectories]",
        f"t_exh_d_degC = {c.t_exh_profile}",
        f"omega_d_rad_s = {c.omega_profile}",
        f"afr_d = {c.afr_profile}",
        "",
        "[initial]",
        f"t_exh_degC = {c.initial.t_exh!r}",
        f"mdot_f_kg_s = {c.initial.mdot_f!r}",
        f"omega_e_rad_s = {c.initial.omega_e!r}",
        f"m_a_kg = {c.initial.m_a if isinstance(c.initial.m_a, str) else repr(c.initial.m_a)}",
        "",
        "[output]",
        f"csv = {exp.output.csv}",
        f"metrics = {exp.output.metrics}",
        f"stability = {exp.output.stability}",
        f"plot = {str(exp.output.plot).lower()}",
        f"workers = {exp.output.workers}",
    ]
    return "\n".join(lines) + "\n"
