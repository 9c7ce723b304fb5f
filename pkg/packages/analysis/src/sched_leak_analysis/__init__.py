"""
Closed forms and Monte-Carlo metrics for scheduler privacy and delay.

Deployment:
    pip install sched-leak-analysis
"""

from .closed_form import (
    AnalysisError,
    BoundKind,
    ClosedForm,
    Unstable,
    delay_bound_acc_serve,
    delay_fcfs,
    delay_ptdma,
    delay_ratio_limit_low_load,
    delay_reference,
    delay_tdma,
    lambda_star,
    privacy_bound_acc_serve,
    privacy_bound_ptdma,
    privacy_max,
    privacy_reference,
    queue_bound_acc_serve,
    queue_bound_printed_forms,
)
from .metrics import (
    REPORT_COLUMNS,
    DelayReport,
    DelaySample,
    EstimationReport,
    Misaligned,
    NoJobs,
    TooFewReplications,
    empirical_delay,
    empirical_privacy,
    format_params,
    replication_mse,
    summarize_delays,
    summarize_privacy,
    write_report_csv,
)

__all__ = [
    # Closed forms
    "AnalysisError",
    "Unstable",
    "BoundKind",
    "ClosedForm",
    "privacy_max",
    "privacy_bound_acc_serve",
    "privacy_bound_ptdma",
    "delay_fcfs",
    "delay_tdma",
    "lambda_star",
    "delay_bound_acc_serve",
    "delay_ptdma",
    "queue_bound_acc_serve",
    "queue_bound_printed_forms",
    "delay_ratio_limit_low_load",
    "privacy_reference",
    "delay_reference",
    # Metrics
    "Misaligned",
    "NoJobs",
    "TooFewReplications",
    "REPORT_COLUMNS",
    "EstimationReport",
    "DelayReport",
    "DelaySample",
    "replication_mse",
    "summarize_privacy",
    "empirical_privacy",
    "summarize_delays",
    "empirical_delay",
    "format_params",
    "write_report_csv",
]
