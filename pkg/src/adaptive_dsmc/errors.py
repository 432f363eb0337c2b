"""Exception hierarchy shared by the controller, plant and harness modules."""


class DsmcError(Exception):
    """Base class for every error raised by this package."""


class ZeroInputGain(DsmcError):
    """The input coefficient g(x) vanished, so the control law is singular."""


class NonFiniteState(DsmcError):
    """A plant step produced NaN or inf."""


class NonFiniteEstimate(DsmcError):
    """An adaptation update produced NaN or inf."""


class SingularTimeConstant(DsmcError):
    """tau_e = 2*pi/omega_e requested at a non-positive engine speed."""


class NonPositiveSpeed(DsmcError):
    """Engine speed left the physical region omega_e > 0 after a step."""


class InvalidDesiredAfr(DsmcError):
    """Desired air-fuel ratio must be strictly positive."""


class LogTooShort(DsmcError):
    """Stability analysis needs at least three records."""


class EmptyLog(DsmcError):
    """Metric requested on a log with no usable records."""


class ZeroBaseline(DsmcError):
    """Improvement percentage undefined because the baseline error is zero."""


class ConfigError(DsmcError):
    """Invalid experiment configuration."""


class DivergedRun(DsmcError):
    """A closed-loop run left the divergence envelope."""

    def __init__(self, step: int, channel: str, detail: str = ""):
        self.step = step
        self.channel = channel
        self.detail = detail
        msg = f"run diverged at step {step} (channel {channel})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
