"""Adaptive first/second-order discrete sliding mode control for one scalar channel.

The plant is the Euler-discretised uncertain affine system

    x(k+1) = x(k) + T*alpha*f(x(k)) + T*g(x(k))*u(k)

and the controller enforces xi(k) = s(k+1) + beta*s(k) = 0 using the current
estimate alpha_hat of the multiplicative uncertainty. beta = 0 recovers the
first-order (deadbeat) law s(k+1) = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import DivergedRun, NonFiniteEstimate, NonFiniteState, ZeroInputGain

StateFn = Callable[[float], float]

# |s| above this multiple of the reference magnitude aborts a run
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class ScalarAffinePlant:
    f: StateFn
    g: StateFn
    alpha_true: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.alpha_true):
            raise ValueError("alpha_true must be finite")


@dataclass
class DsmcChannel:
    """Mutable controller state for one channel."""

    beta: float = 0.5
    rho: float = 1.0
    alpha_hat: float = 1.0
    T: float = 0.01
    adaptation_enabled: bool = True
    u_min: float | None = None
    u_max: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.rho > 0.0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not self.T > 0.0:
            raise ValueError(f"sampling time must be > 0, got {self.T}")
        if not math.isfinite(self.alpha_hat):
            raise ValueError("alpha_hat must be finite")

    @property
    def order(self) -> int:
        return 1 if self.beta == 0.0 else 2


@dataclass(frozen=True)
class ChannelStep:
    s: float
    xi: float
    u: float
    f_value: float
    alpha_hat_after: float


def sliding_variable(x: float, x_d: float) -> float:
    return x - x_d


def xi_variable(s_next: float, s: float, beta: float) -> float:
    return s_next + beta * s


def euler_step(plant: ScalarAffinePlant, x: float, u: float, T: float) -> float:
    if not T > 0.0:
        raise ValueError("T must be > 0")
    g = plant.g(x)
    if g == 0.0:
        raise ZeroInputGain(f"g(x) = 0 at x = {x!r}")
    x_next = x + T * plant.alpha_true * plant.f(x) + T * g * u
    if not math.isfinite(x_next):
        raise NonFiniteState(f"euler step from x = {x!r} with u = {u!r} is not finite")
    return x_next


def compute_control(
    channel: DsmcChannel,
    x: float,
    s: float,
    x_d_next: float,
    f_value: float,
    g_value: float,
) -> float:
    """Control input that makes the nominal model land on s(k+1) = -beta*s(k)."""
    if g_value == 0.0:
        raise ZeroInputGain("input gain is zero")
    T = channel.T
    u = (-T * channel.alpha_hat * f_value - x + x_d_next - channel.beta * s) / (g_value * T)
    if channel.u_min is not None:
        u = max(u, channel.u_min)
    if channel.u_max is not None:
        u = min(u, channel.u_max)
    return u


def adaptation_increment(s: float, f_value: float, T: float, rho: float) -> float:
    return s * T * f_value / rho


def update_adaptation(channel: DsmcChannel, s: float, f_value: float) -> float:
    """Advance alpha_hat in place and return the new value.

    alpha_tilde(k+1) = alpha_tilde(k) - s(k)*T*f/rho, so the estimate moves the
    opposite way.
    """
    if not channel.adaptation_enabled:
        return channel.alpha_hat
    new = channel.alpha_hat + adaptation_increment(s, f_value, channel.T, channel.rho)
    if not math.isfinite(new):
        raise NonFiniteEstimate(f"alpha_hat update overflowed (s={s!r}, f={f_value!r})")
    channel.alpha_hat = new
    return new


def channel_step(
    plant: ScalarAffinePlant,
    channel: DsmcChannel,
    x: float,
    x_d: float,
    x_d_next: float,
) -> tuple[float, float, ChannelStep]:
    """Sense, control, adapt, then advance the plant by one sample."""
    s = sliding_variable(x, x_d)
    f_value = plant.f(x)
    g_value = plant.g(x)
    u = compute_control(channel, x, s, x_d_next, f_value, g_value)
    alpha_hat = update_adaptation(channel, s, f_value)
    x_next = euler_step(plant, x, u, channel.T)
    xi = xi_variable(sliding_variable(x_next, x_d_next), s, channel.beta)
    return u, x_next, ChannelStep(s=s, xi=xi, u=u, f_value=f_value, alpha_hat_after=alpha_hat)


@dataclass
class DivergenceGuard:
    """Aborts once |s| grows past DIVERGENCE_FACTOR times its reference magnitude.

    The reference is |s(0)|, floored so a run that starts on target still has a
    finite envelope.
    """

    name: str
    reference: float
    floor: float = 1e-9
    factor: float = DIVERGENCE_FACTOR
    limit: float = field(init=False)

    def __post_init__(self):
        self.limit = self.factor * max(abs(self.reference), self.floor)

    def check(self, step: int, s: float) -> None:
        if not math.isfinite(s):
            raise DivergedRun(step, self.name, "sliding variable is not finite")
        if abs(s) > self.limit:
            raise DivergedRun(step, self.name, f"|s| = {abs(s):.3g} exceeds {self.limit:.3g}")


@dataclass
class ScalarRun:
    """Record of a single-channel closed-loop simulation."""

    x: list[float]
    x_d: list[float]
    steps: list[ChannelStep]
    alpha_hat: list[float]

    @property
    def s(self) -> list[float]:
        return [a - b for a, b in zip(self.x, self.x_d)]


def simulate_channel(
    plant: ScalarAffinePlant,
    channel: DsmcChannel,
    x0: float,
    x_d: Callable[[int], float],
    n_steps: int,
    guard_floor: float = 1e-9,
) -> ScalarRun:
    """Closed-loop run of one channel against the desired sequence ``x_d(k)``."""
    xs = [x0]
    xds = [x_d(0)]
    alphas = [channel.alpha_hat]
    steps: list[ChannelStep] = []
    guard = DivergenceGuard("x", x0 - xds[0], floor=guard_floor)
    x = x0
    for k in range(n_steps):
        _, x, rec = channel_step(plant, channel, x, x_d(k), x_d(k + 1))
        steps.append(rec)
        xs.append(x)
        xds.append(x_d(k + 1))
        alphas.append(channel.alpha_hat)
        guard.check(k + 1, x - xds[-1])
    return ScalarRun(x=xs, x_d=xds, steps=steps, alpha_hat=alphas)
