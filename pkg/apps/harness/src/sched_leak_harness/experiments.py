"""
Experiment orchestration.

A replication simulates, estimates and reduces to a small outcome; an
experiment fans replications out through the runner and compares the
merged outcome with its closed-form reference.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from sched_leak_analysis import (
    BoundKind,
    ClosedForm,
    DelayReport,
    DelaySample,
    EstimationReport,
    delay_fcfs,
    delay_reference,
    empirical_delay,
    privacy_max,
    privacy_reference,
    queue_bound_acc_serve,
    replication_mse,
    summarize_delays,
    summarize_privacy,
    write_report_csv,
)
from sched_leak_attack import (
    ATTACKER,
    EstimatorKind,
    IntervalReconstruction,
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
from sched_leak_sim import (
    ArrivalTrace,
    PoissonSource,
    PolicyConfig,
    PolicyKind,
    SimulationResult,
    TickDuration,
    TickScale,
    TickTime,
    bin_counts,
    check_queue_recursion,
    generate,
    make_scale,
    run,
    warmup_trim,
)

from .config import VICTIM, ExperimentConfig, ExperimentConfigError, ExperimentKind, HarnessSettings
from .runner import run_replications

logger = logging.getLogger(__name__)

TRADEOFF_COLUMNS = [
    "policy", "param", "privacy_ratio", "delay_ratio",
    "privacy_ratio_closed_form", "delay_ratio_closed_form",
    "privacy_mse", "privacy_stderr", "mean_delay", "delay_stderr",
]


class AcceptanceFailed(RuntimeError):
    """Raised when a run falls outside its acceptance band."""

    def __init__(self, failures: Sequence[str]):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


def scale_for(cfg: ExperimentConfig) -> TickScale:
    return make_scale(
        cfg.ticks_per_unit, list(cfg.policy.durations()) + [cfg.clock_period, cfg.horizon]
    )


def _accumulate_ticks(cfg: ExperimentConfig, scale: TickScale) -> int | None:
    if cfg.policy.kind is not PolicyKind.ACC_SERVE:
        return None
    return scale.to_ticks(cfg.policy.accumulate_period)


def _recursion_violations(cfg: ExperimentConfig, scale: TickScale, result: SimulationResult) -> int:
    accumulate = _accumulate_ticks(cfg, scale)
    if accumulate is None:
        return 0
    bad = check_queue_recursion(result.seal_records, accumulate)
    if bad:
        logger.error("Backlog recursion broken at periods %s", bad[:10])
    return len(bad)


# -- privacy ----------------------------------------------------------------

@dataclass(frozen=True)
class PrivacyOutcome:
    """One privacy replication reduced to what the report needs."""
    seed: int
    mse: float
    periods: int
    recursion_violations: int = 0


@dataclass(frozen=True)
class PrivacyRun:
    """A full privacy replication, kept for exports and demos."""
    truth: np.ndarray
    estimates: np.ndarray
    victim: ArrivalTrace
    result: SimulationResult


def privacy_periods(cfg: ExperimentConfig, scale: TickScale) -> int:
    """Clock periods to score, rounded down to whole side-information windows when they nest."""
    c = scale.to_ticks(cfg.clock_period)
    n = scale.to_ticks(cfg.horizon) // c
    window = cfg.side_window
    if window is not None:
        w = scale.to_ticks(window)
        if w % c == 0:
            n -= n % (w // c)
    if n < 1:
        raise ExperimentConfigError(
            f"Horizon {cfg.horizon} holds no complete clock period (or side-information window)"
        )
    return n


def estimate_counts(
    cfg: ExperimentConfig,
    result: SimulationResult,
    victim: ArrivalTrace,
    n_periods: int,
    scale: TickScale,
) -> np.ndarray:
    """Run the configured estimator on one replication."""
    c = scale.duration(cfg.clock_period)
    est = cfg.resolved_estimator
    if est is EstimatorKind.FCFS_EXACT:
        obs = ProbeObservation.from_result(result, ATTACKER)
        return estimate_fcfs_exact(obs, c, n_periods, scale)
    if est is EstimatorKind.STATISTICAL_MEAN:
        return estimate_statistical_mean(cfg.victim_rate, c, n_periods, scale)

    window_units = cfg.side_window
    if window_units is None:
        raise ExperimentConfigError(f"{est.value} needs an accumulate or adaptation period")
    window = scale.duration(window_units)
    n_windows = -(-(n_periods * c.ticks) // window.ticks)
    totals = window_counts(victim, window, n_windows)
    if est is EstimatorKind.ACC_SERVE_GENIE:
        return estimate_acc_serve_genie(totals, window, c, n_periods)
    if est is EstimatorKind.PTDMA_GENIE:
        return estimate_ptdma_genie(totals, window, c, n_periods)
    return estimate_overlap_genie(totals, window, c, n_periods)


def privacy_run(cfg: ExperimentConfig, seed: int) -> PrivacyRun:
    """
    Simulate the victim against the attacker's probes and estimate every
    clock period.

    The simulation runs one clock period (or window) past the scored span
    so that every probe and window the estimator reads exists.
    """
    scale = scale_for(cfg)
    c = scale.to_ticks(cfg.clock_period)
    n = privacy_periods(cfg, scale)
    window = scale.to_ticks(cfg.side_window) if cfg.side_window is not None else 0
    horizon = TickTime(n * c + max(c, window))

    victim = generate(PoissonSource(cfg.victim_rate, seed, owner=VICTIM), horizon, scale)
    probes = cfg.probe_strategy(scale).trace(horizon, owner=ATTACKER)
    result = run(cfg.policy, [victim, probes], horizon, scale, seed)

    truth = bin_counts(victim, TickDuration(c), n).counts
    estimates = estimate_counts(cfg, result, victim, n, scale)
    return PrivacyRun(truth=truth, estimates=estimates, victim=victim, result=result)


def privacy_replication(cfg: ExperimentConfig, seed: int) -> PrivacyOutcome:
    pr = privacy_run(cfg, seed)
    return PrivacyOutcome(
        seed=seed,
        mse=replication_mse(pr.truth, pr.estimates),
        periods=int(pr.truth.size),
        recursion_violations=_recursion_violations(cfg, pr.result.scale, pr.result),
    )


def privacy_params(cfg: ExperimentConfig) -> dict[str, Any]:
    params: dict[str, Any] = {
        "victim_rate": cfg.victim_rate,
        "c": float(cfg.clock_period),
        "probe_rate": float(cfg.probe_rate),
    }
    if cfg.side_window is not None:
        key = "T" if cfg.policy.kind is PolicyKind.ACC_SERVE else "L"
        params[key] = float(cfg.side_window)
    params["horizon"] = float(cfg.horizon)
    return params


def run_privacy_experiment(
    cfg: ExperimentConfig,
    settings: HarnessSettings | None = None,
    check: bool = False,
) -> EstimationReport:
    """
    Empirical per-period MSE of the configured estimator.

    Raises:
        ExperimentConfigError: if the config fails validation.
        AcceptanceFailed: with check set, if the MSE is outside 3 standard
            errors of its reference or the backlog recursion broke.
    """
    settings = settings or HarnessSettings.load()
    if cfg.kind is not ExperimentKind.PRIVACY:
        cfg = replace(cfg, kind=ExperimentKind.PRIVACY)
    cfg.validate()

    est = cfg.resolved_estimator
    window = float(cfg.side_window) if cfg.side_window is not None else None
    reference = privacy_reference(
        cfg.policy.kind, est.value, cfg.victim_rate, float(cfg.clock_period), window
    )
    if reference.kind is BoundKind.INFORMATIVE:
        logger.warning(
            "Clock period %s does not nest in window %s; reference is informative only",
            cfg.clock_period, cfg.side_window,
        )

    logger.info(
        "Privacy: %s with %s, %d replications",
        cfg.policy.kind.value, est.value, cfg.replications,
    )
    outcomes = run_replications(privacy_replication, cfg, workers=settings.threads)
    violations = sum(o.recursion_violations for o in outcomes)

    params = privacy_params(cfg)
    if violations:
        params["recursion_violations"] = violations
    report = summarize_privacy(
        [o.mse for o in outcomes],
        cfg.policy.kind,
        est.value,
        outcomes[0].periods,
        reference,
        params,
    )
    logger.info(
        "MSE %.5f +/- %.5f (reference %.5f, %s)",
        report.mse, report.stderr, reference.value, reference.kind.value,
    )

    if cfg.output is not None:
        write_report_csv(cfg.output, [report])
        first = privacy_run(cfg, cfg.seed)
        export_estimates_csv(_sibling(cfg.output, "estimates"), first.truth, first.estimates)

    if check:
        failures = []
        if not report.passes(bands=3.0):
            failures.append(f"MSE {report.mse:.5f} outside 3 SE of {reference.value:.5f}")
        if violations:
            failures.append(f"{violations} backlog recursion violations")
        if failures:
            raise AcceptanceFailed(failures)
    return report


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


# -- delay ------------------------------------------------------------------

@dataclass(frozen=True)
class DelayOutcome:
    seed: int
    sample: DelaySample
    recursion_violations: int = 0


def delay_run(cfg: ExperimentConfig, seed: int) -> SimulationResult:
    """Every user issues Poisson unit jobs; the result is warmup-trimmed."""
    scale = scale_for(cfg)
    horizon = scale.time(cfg.horizon)
    traces = [
        generate(PoissonSource(rate, seed, owner=i), horizon, scale)
        for i, rate in enumerate(cfg.rates)
        if rate > 0
    ]
    result = run(cfg.policy, traces, horizon, scale, seed)
    warmup = TickTime(int(horizon.ticks * cfg.warmup_fraction))
    return warmup_trim(result, warmup)


def delay_replication(cfg: ExperimentConfig, seed: int) -> DelayOutcome:
    result = delay_run(cfg, seed)
    return DelayOutcome(
        seed=seed,
        sample=summarize_delays(result),
        recursion_violations=_recursion_violations(cfg, result.scale, result),
    )


def delay_references(cfg: ExperimentConfig) -> tuple[ClosedForm, ClosedForm | None]:
    accumulate = float(cfg.policy.accumulate_period) if cfg.policy.accumulate_period else None
    reference = delay_reference(cfg.policy.kind, cfg.rates, accumulate)
    backlog = None
    if cfg.policy.kind is PolicyKind.ACC_SERVE and accumulate is not None:
        backlog = ClosedForm(queue_bound_acc_serve(sum(cfg.rates), accumulate), BoundKind.UPPER)
    return reference, backlog


def delay_params(cfg: ExperimentConfig) -> dict[str, Any]:
    params: dict[str, Any] = {"rates": "/".join(f"{r:g}" for r in cfg.rates)}
    if cfg.policy.accumulate_period is not None:
        params["T"] = float(cfg.policy.accumulate_period)
    if cfg.policy.adaptation_period is not None:
        params["L"] = float(cfg.policy.adaptation_period)
    params["horizon"] = float(cfg.horizon)
    params["warmup_fraction"] = cfg.warmup_fraction
    return params


def run_delay_experiment(
    cfg: ExperimentConfig,
    settings: HarnessSettings | None = None,
    check: bool = False,
    rel_tol: float = 0.0,
) -> DelayReport:
    """
    Empirical mean delay next to its closed form.

    Raises:
        ExperimentConfigError: for unstable or unrepresentable configs,
            before anything runs.
        AcceptanceFailed: with check set, if the delay (or backlog) is
            outside its band or the backlog recursion broke.
    """
    settings = settings or HarnessSettings.load()
    if cfg.kind is not ExperimentKind.DELAY:
        cfg = replace(cfg, kind=ExperimentKind.DELAY)
    cfg.validate()
    reference, backlog_reference = delay_references(cfg)

    logger.info("Delay: %s at rates %s, %d replications", cfg.policy.kind.value, cfg.rates, cfg.replications)
    outcomes = run_replications(delay_replication, cfg, workers=settings.threads)
    violations = sum(o.recursion_violations for o in outcomes)

    params = delay_params(cfg)
    if violations:
        params["recursion_violations"] = violations
    report = empirical_delay(
        [o.sample for o in outcomes],
        cfg.policy.kind,
        reference=reference,
        backlog_reference=backlog_reference,
        params=params,
    )
    logger.info(
        "Mean delay %.4f +/- %.4f (reference %.4f, %s)",
        report.mean_delay, report.stderr, reference.value, reference.kind.value,
    )

    if cfg.output is not None:
        write_report_csv(cfg.output, [report])

    if check:
        failures = []
        if not report.passes(bands=3.0, rel_tol=rel_tol):
            failures.append(f"Mean delay {report.mean_delay:.4f} outside band of {reference.value:.4f}")
        if violations:
            failures.append(f"{violations} backlog recursion violations")
        if failures:
            raise AcceptanceFailed(failures)
    return report


# -- tradeoff ---------------------------------------------------------------

@dataclass(frozen=True)
class TradeoffPoint:
    policy: PolicyKind
    param: float | None
    privacy: EstimationReport
    delay: DelayReport
    privacy_ratio: float
    delay_ratio: float
    privacy_ratio_closed_form: float
    delay_ratio_closed_form: float

    def to_row(self) -> list[Any]:
        return [
            self.policy.value,
            "" if self.param is None else self.param,
            self.privacy_ratio,
            self.delay_ratio,
            self.privacy_ratio_closed_form,
            self.delay_ratio_closed_form,
            self.privacy.mse,
            self.privacy.stderr,
            self.delay.mean_delay,
            self.delay.stderr,
        ]


def tradeoff_policies(cfg: ExperimentConfig) -> list[tuple[PolicyConfig, float | None]]:
    """FCFS, TDMA, then one point per swept T and L."""
    m = cfg.policy.num_users
    points: list[tuple[PolicyConfig, float | None]] = [
        (PolicyConfig(kind=PolicyKind.FCFS, num_users=m), None),
        (PolicyConfig(kind=PolicyKind.TDMA, num_users=m), None),
    ]
    for t in cfg.sweep.accumulate_periods:
        points.append((PolicyConfig(kind=PolicyKind.ACC_SERVE, num_users=m, accumulate_period=t), float(t)))
    for length in cfg.sweep.adaptation_periods:
        points.append((PolicyConfig(kind=PolicyKind.PTDMA, num_users=m, adaptation_period=length), float(length)))
    return points


def run_tradeoff(cfg: ExperimentConfig, settings: HarnessSettings | None = None) -> list[TradeoffPoint]:
    """
    Privacy and delay of every policy point, as ratios against TDMA privacy
    and FCFS delay.
    """
    settings = settings or HarnessSettings.load()
    cfg.validate()
    if not cfg.sweep.accumulate_periods and not cfg.sweep.adaptation_periods:
        raise ExperimentConfigError("Tradeoff needs accumulate_periods or adaptation_periods to sweep")

    measured: list[tuple[PolicyConfig, float | None, EstimationReport, DelayReport]] = []
    for policy, param in tradeoff_policies(cfg):
        base = replace(cfg, policy=policy, estimator=None, output=None)
        privacy = run_privacy_experiment(replace(base, kind=ExperimentKind.PRIVACY), settings)
        delay = run_delay_experiment(replace(base, kind=ExperimentKind.DELAY), settings)
        measured.append((policy, param, privacy, delay))

    tdma_mse = measured[1][2].mse
    fcfs_delay = measured[0][3].mean_delay
    emax = privacy_max(cfg.victim_rate, float(cfg.clock_period))
    fcfs_closed = delay_fcfs(sum(cfg.rates))

    points = []
    for policy, param, privacy, delay in measured:
        ref = privacy.reference
        dref = delay.reference
        points.append(TradeoffPoint(
            policy=policy.kind,
            param=param,
            privacy=privacy,
            delay=delay,
            privacy_ratio=privacy.mse / tdma_mse if tdma_mse > 0 else float("nan"),
            delay_ratio=fcfs_delay / delay.mean_delay,
            privacy_ratio_closed_form=(ref.value / emax) if ref is not None else float("nan"),
            delay_ratio_closed_form=(fcfs_closed / dref.value) if dref is not None else float("nan"),
        ))
        logger.info(
            "%s %s: privacy ratio %.4f, delay ratio %.4f",
            policy.kind.value, "" if param is None else f"{param:g}",
            points[-1].privacy_ratio, points[-1].delay_ratio,
        )

    if cfg.output is not None:
        write_tradeoff_csv(cfg.output, points)
    return points


def write_tradeoff_csv(path: Path, points: Sequence[TradeoffPoint]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRADEOFF_COLUMNS)
        for p in points:
            writer.writerow(p.to_row())
    logger.info("Tradeoff written to %s", path)


# -- attack demo ------------------------------------------------------------

@dataclass(frozen=True)
class AttackDemo:
    """Probe-by-probe reconstruction on a short FCFS run."""
    observation: ProbeObservation
    reconstruction: IntervalReconstruction
    truth: np.ndarray
    estimates: np.ndarray
    scale: TickScale
    probes_per_period: int
    victim_arrivals: list[float] = field(default_factory=list)

    def render(self) -> str:
        units = self.scale.units
        obs, rec = self.observation, self.reconstruction
        lines = [
            f"victim arrivals: {', '.join(f'{a:g}' for a in self.victim_arrivals) or '(none)'}",
            f"{'k':>4} {'t_k':>9} {'s_k':>7} {'t_k_dep':>9}  {'case':<11} {'count':>5}",
        ]
        for k in range(len(rec.counts)):
            lines.append(
                f"{k + 1:>4} {units(int(obs.arrivals[k])):>9.4f} {units(int(obs.sizes[k])):>7.4f} "
                f"{units(int(obs.departures[k])):>9.4f}  {ProbeCase(int(rec.cases[k])).name.lower():<11} "
                f"{int(rec.counts[k]):>5}"
            )
        lines.append("")
        lines.append(f"{'period':>6} {'true':>5} {'estimate':>8}")
        for k, (x, e) in enumerate(zip(self.truth, self.estimates), start=1):
            mark = "" if x == e else "  MISMATCH"
            lines.append(f"{k:>6} {int(x):>5} {int(e):>8}{mark}")
        return "\n".join(lines)


def run_attack_demo(
    cfg: ExperimentConfig,
    victim_arrivals: Sequence[Fraction | float | str] | None = None,
) -> AttackDemo:
    """
    Replay the exact-recovery attack on a short horizon.

    victim_arrivals, in units, replaces the Poisson victim when given.
    """
    if cfg.kind is not ExperimentKind.ATTACK_DEMO:
        cfg = replace(cfg, kind=ExperimentKind.ATTACK_DEMO)
    if cfg.policy.kind is not PolicyKind.FCFS:
        raise ExperimentConfigError("The attack demo replays FCFS only")
    cfg.validate()

    scale = scale_for(cfg)
    c = scale.duration(cfg.clock_period)
    n = scale.to_ticks(cfg.horizon) // c.ticks
    if n < 1:
        raise ExperimentConfigError("Demo horizon holds no clock period")
    horizon = TickTime((n + 1) * c.ticks)

    if victim_arrivals is None:
        victim = generate(PoissonSource(cfg.victim_rate, cfg.seed, owner=VICTIM), horizon, scale)
    else:
        ticks = sorted(scale.to_ticks(a) for a in victim_arrivals)
        victim = ArrivalTrace(VICTIM, np.array(ticks, dtype=np.int64), TickDuration(scale.ticks_per_unit), horizon)

    probes = cfg.probe_strategy(scale).trace(horizon, owner=ATTACKER)
    result = run(cfg.policy, [victim, probes], horizon, scale, cfg.seed)
    obs = ProbeObservation.from_result(result, ATTACKER)
    per_period = -(-c.ticks // scale.ticks_per_unit)
    head = ProbeObservation(
        obs.arrivals[: n * per_period], obs.sizes[: n * per_period], obs.departures[: n * per_period]
    )
    return AttackDemo(
        observation=head,
        reconstruction=reconstruct_intervals(head, scale),
        truth=bin_counts(victim, c, n).counts,
        estimates=estimate_fcfs_exact(obs, c, n, scale),
        scale=scale,
        probes_per_period=per_period,
        victim_arrivals=[scale.units(t) for t in victim.arrival_times],
    )
