"""
This app drives the experiments. It:
1. Parses an experiment JSON into an ExperimentConfig
2. Fans replications out over worker processes
3. Simulates, attacks and estimates in every replication
4. Writes report CSVs next to their closed-form references

Deployment:
    pip install sched-leak-sim sched-leak-attack sched-leak-analysis sched-leak-harness
    sched-leak privacy --config configs/privacy_fcfs.json
"""

from .config import ExperimentConfig, ExperimentConfigError, ExperimentKind, HarnessSettings, SweepConfig
from .experiments import (
    AcceptanceFailed,
    run_attack_demo,
    run_delay_experiment,
    run_privacy_experiment,
    run_tradeoff,
)
from .runner import run_replications

__all__ = [
    "ExperimentConfig",
    "ExperimentConfigError",
    "ExperimentKind",
    "HarnessSettings",
    "SweepConfig",
    "AcceptanceFailed",
    "run_privacy_experiment",
    "run_delay_experiment",
    "run_tradeoff",
    "run_attack_demo",
    "run_replications",
]
