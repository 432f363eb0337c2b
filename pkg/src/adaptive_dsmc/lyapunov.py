"""Numerical checks of the Lyapunov argument behind the adaptive second-order law.

V(k) = 1/2 (s(k+1)^2 + beta s(k)^2) + 1/2 rho (at(k+1)^2 + beta at(k)^2)

with at = alpha_true - alpha_hat. V(k) needs s(k+1), so a log of n records
yields n-1 values of V and n-2 differences.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import LogTooShort

CONVERGENCE_FRACTION = 0.05
CONVERGENCE_HOLD_STEPS = 50


@dataclass(frozen=True)
class StabilityReport:
    beta_certified: bool
    delta_v_series: tuple[float, ...]
    max_delta_v_after_transient: float
    adaptation_convergence_step: int | None
    final_alpha_tilde: float

    def to_dict(self, include_series: bool = False) -> dict:
        d = asdict(self)
        if not include_series:
            d.pop("delta_v_series")
            d["delta_v_count"] = len(self.delta_v_series)
        else:
            d["delta_v_series"] = list(self.delta_v_series)
        if math.isnan(self.max_delta_v_after_transient):
            d["max_delta_v_after_transient"] = None
        return d


def lyapunov_value(s_next, s, atilde_next, atilde, beta, rho):
    """Works elementwise on numpy arrays as well as on floats."""
    return 0.5 * (s_next**2 + beta * s**2) + 0.5 * rho * (atilde_next**2 + beta * atilde**2)


def delta_v_closed_form(beta, s):
    """Post-convergence Lyapunov difference for the matched, second-order loop."""
    return -0.5 * beta * (-beta**3 - beta**2 + beta + 1.0) * s**2


def certify_beta(beta: float) -> bool:
    # -b^3 - b^2 + b + 1 = (1 + b)(1 - b^2) > 0 together with b > 0
    return 0.0 < beta < 1.0


def empirical_delta_v(s: Sequence[float], atilde: Sequence[float], beta: float, rho: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    a = np.asarray(atilde, dtype=float)
    if s.shape != a.shape:
        raise ValueError("s and alpha_tilde sequences differ in length")
    if s.size < 3:
        raise LogTooShort(f"need at least 3 records, got {s.size}")
    v = lyapunov_value(s[1:], s[:-1], a[1:], a[:-1], beta, rho)
    return np.diff(v)


def convergence_step(
    atilde: Sequence[float],
    alpha_true: float,
    fraction: float = CONVERGENCE_FRACTION,
    hold: int = CONVERGENCE_HOLD_STEPS,
) -> int | None:
    """First index k with |at| below fraction*|alpha_true| for hold consecutive samples."""
    inside = np.abs(np.asarray(atilde, dtype=float)) < fraction * abs(alpha_true)
    run = 0
    for k, ok in enumerate(inside):
        run = run + 1 if ok else 0
        if run >= hold:
            return k - hold + 1
    return None


def analyze_series(
    s: Sequence[float],
    alpha_hat: Sequence[float],
    alpha_true: float,
    beta: float,
    rho: float,
    transient_steps: int | None = None,
) -> StabilityReport:
    atilde = alpha_true - np.asarray(alpha_hat, dtype=float)
    dv = empirical_delta_v(s, atilde, beta, rho)
    conv = convergence_step(atilde, alpha_true)
    start = transient_steps if transient_steps is not None else conv
    if start is None or start >= dv.size:
        max_dv = math.nan
    else:
        max_dv = float(np.max(dv[start:]))
    return StabilityReport(
        beta_certified=certify_beta(beta),
        delta_v_series=tuple(float(x) for x in dv),
        max_delta_v_after_transient=max_dv,
        adaptation_convergence_step=conv,
        final_alpha_tilde=float(atilde[-1]),
    )


def analyze_trajectory(log, channel: str, beta: float, rho: float, alpha_true: float,
                       transient_steps: int | None = None) -> StabilityReport:
    """Stability report for one channel of an engine ``TrajectoryLog``.

    ``channel`` is one of ``texh``, ``mf``, ``we``, ``ma``.
    """
    s, alpha_hat = log.channel_series(channel)
    return analyze_series(s, alpha_hat, alpha_true, beta, rho, transient_steps)
