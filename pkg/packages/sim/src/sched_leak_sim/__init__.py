"""
Tick-exact simulator for shared single-server schedulers.

The package is a dependency of the attack, analysis and harness packages:
- timebase: integer tick arithmetic
- arrivals: Poisson job streams and clock-period binning
- policies: FCFS, TDMA, accumulate-and-serve and proportional TDMA
- engine: the discrete-event loop

Deployment:
    pip install sched-leak-sim
"""

from .arrivals import (
    ArrivalError,
    ArrivalTrace,
    ClockBinning,
    HorizonExceeded,
    PoissonSource,
    TooFewPeriods,
    bin_counts,
    empirical_count_variance,
    generate,
)
from .engine import (
    Job,
    SimulationResult,
    check_queue_recursion,
    run,
    warmup_trim,
)
from .policies import (
    AccumulateServePolicy,
    ConfigError,
    FcfsPolicy,
    Idle,
    Policy,
    PolicyConfig,
    PolicyKind,
    ProportionalTdmaPolicy,
    SealRecord,
    Serve,
    TdmaPolicy,
    build_policy,
    resolve_ticks,
)
from .timebase import (
    DEFAULT_TICKS_PER_UNIT,
    NegativeTime,
    NonRepresentable,
    TickDuration,
    TickScale,
    TickTime,
    TimebaseError,
    as_fraction,
    ceil_div_units,
    format_rational,
    make_scale,
)

__all__ = [
    # Timebase
    "DEFAULT_TICKS_PER_UNIT",
    "TimebaseError",
    "NonRepresentable",
    "NegativeTime",
    "TickScale",
    "TickTime",
    "TickDuration",
    "as_fraction",
    "format_rational",
    "make_scale",
    "ceil_div_units",
    # Arrivals
    "ArrivalError",
    "HorizonExceeded",
    "TooFewPeriods",
    "PoissonSource",
    "ArrivalTrace",
    "ClockBinning",
    "generate",
    "bin_counts",
    "empirical_count_variance",
    # Policies
    "ConfigError",
    "PolicyKind",
    "PolicyConfig",
    "Policy",
    "Serve",
    "Idle",
    "SealRecord",
    "FcfsPolicy",
    "TdmaPolicy",
    "AccumulateServePolicy",
    "ProportionalTdmaPolicy",
    "build_policy",
    "resolve_ticks",
    # Engine
    "Job",
    "SimulationResult",
    "run",
    "warmup_trim",
    "check_queue_recursion",
]
