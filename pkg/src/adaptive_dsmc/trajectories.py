"""Desired-trajectory profiles sampled at the controller rate.

Profiles are written as one line of text, e.g.::

    constant 14.6
    ramp 90 105 0 5            # value0 value1 t_start t_end
    smoothstep 25 400 0 10     # cubic 3u^2 - 2u^3 blend
    piecewise 0:90 5:105 8:100 # linear through (t, value) breakpoints
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Profile:
    kind: str
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "smoothstep", "piecewise"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if len(self.times) != len(self.values) or not self.values:
            raise ValueError("profile needs matching times and values")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("profile times must be non-decreasing")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls("constant", (0.0,), (float(value),))

    @classmethod
    def ramp(cls, v0: float, v1: float, t0: float, t1: float) -> "Profile":
        return cls("ramp", (float(t0), float(t1)), (float(v0), float(v1)))

    @classmethod
    def smoothstep(cls, v0: float, v1: float, t0: float, t1: float) -> "Profile":
        return cls("smoothstep", (float(t0), float(t1)), (float(v0), float(v1)))

    @classmethod
    def parse(cls, text: str) -> "Profile":
        parts = text.split()
        if not parts:
            raise ValueError("empty profile")
        kind, args = parts[0].lower(), parts[1:]
        try:
            if kind == "constant":
                (v,) = args
                return cls.constant(float(v))
            if kind in ("ramp", "smoothstep"):
                v0, v1, t0, t1 = map(float, args)
                if t1 <= t0:
                    raise ValueError(f"{kind} needs t_end > t_start")
                return cls(kind, (t0, t1), (v0, v1))
            if kind == "piecewise":
                pts = [tuple(map(float, a.split(":"))) for a in args]
                if not pts or any(len(p) != 2 for p in pts):
                    raise ValueError("piecewise breakpoints are written t:value")
                return cls(kind, tuple(p[0] for p in pts), tuple(p[1] for p in pts))
        except ValueError as exc:
            raise ValueError(f"bad profile {text!r}: {exc}") from None
        raise ValueError(f"unknown profile kind {kind!r}")

    def __str__(self) -> str:
        # repr() keeps floats exact so parse(str(p)) == p
        if self.kind == "constant":
            return f"constant {self.values[0]!r}"
        if self.kind == "piecewise":
            return "piecewise " + " ".join(f"{t!r}:{v!r}" for t, v in zip(self.times, self.values))
        return f"{self.kind} {self.values[0]!r} {self.values[1]!r} {self.times[0]!r} {self.times[1]!r}"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.values[0])
        if self.kind == "smoothstep":
            (t0, t1), (v0, v1) = self.times, self.values
            u = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
            return v0 + (v1 - v0) * u * u * (3.0 - 2.0 * u)
        return np.interp(t, self.times, self.values)

    def sample(self, T: float, n: int) -> np.ndarray:
        """Values at t = k*T for k = 0..n-1."""
        return self(np.arange(n) * T)

    def shortest_feature(self) -> float:
        """Shortest transition duration; inf for a constant."""
        gaps = [b - a for a, b in zip(self.times, self.times[1:]) if b > a]
        return min(gaps) if gaps else float("inf")
