"""Adaptive second-order discrete sliding-mode control of a mean-value SI engine."""
from .dsmc_core import (
    ChannelStep,
    DsmcChannel,
    ScalarAffinePlant,
    channel_step,
    compute_control,
    simulate_channel,
    sliding_variable,
    update_adaptation,
    xi_variable,
)
from .errors import (
    ConfigError,
    DivergedRun,
    DsmcError,
    EmptyLog,
    LogTooShort,
    ZeroBaseline,
    ZeroInputGain,
)
from .lyapunov import (
    StabilityReport,
    analyze_trajectory,
    certify_beta,
    delta_v_closed_form,
    empirical_delta_v,
    lyapunov_value,
)
from .plant_engine import (
    CHANNELS,
    EngineInputs,
    EngineParams,
    EngineState,
    EngineUncertainty,
    afi,
    eta_vol,
    step_engine,
    tau_e,
)
from .sim import (
    InitialConditions,
    MetricsReport,
    SimConfig,
    TrajectoryLog,
    compare,
    mean_tracking_error,
    metrics,
    run,
    sweep,
    table1_grid,
)
from .trajectories import Profile

__version__ = "0.1.0"
