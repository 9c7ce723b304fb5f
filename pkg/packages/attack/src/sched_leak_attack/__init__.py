"""
Attacker side of the scheduler timing channel.

- probes: periodic probe streams and their rate budgets
- estimators: per-clock-period count estimators, exact and genie-aided

Deployment:
    pip install sched-leak-attack
"""

from .estimators import (
    AlignmentError,
    CaseUnderflow,
    EstimatorKind,
    IntervalReconstruction,
    ObservationTooShort,
    ProbeCase,
    ProbeObservation,
    estimate_acc_serve_genie,
    estimate_fcfs_exact,
    estimate_overlap_genie,
    estimate_ptdma_genie,
    estimate_statistical_mean,
    export_estimates_csv,
    reconstruct_intervals,
    window_counts,
)
from .probes import (
    ATTACKER,
    AttackError,
    ProbeKind,
    ProbeStrategy,
    RateBudgetExceeded,
    gen_probes_periodic,
    gen_probes_thm2,
    thm2_strategy,
)

__all__ = [
    # Probes
    "ATTACKER",
    "AttackError",
    "RateBudgetExceeded",
    "ProbeKind",
    "ProbeStrategy",
    "thm2_strategy",
    "gen_probes_thm2",
    "gen_probes_periodic",
    # Estimators
    "CaseUnderflow",
    "AlignmentError",
    "ObservationTooShort",
    "EstimatorKind",
    "ProbeCase",
    "ProbeObservation",
    "IntervalReconstruction",
    "reconstruct_intervals",
    "estimate_fcfs_exact",
    "estimate_statistical_mean",
    "window_counts",
    "estimate_acc_serve_genie",
    "estimate_ptdma_genie",
    "estimate_overlap_genie",
    "export_estimates_csv",
]
