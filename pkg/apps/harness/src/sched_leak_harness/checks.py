"""
Acceptance battery run by `sched-leak check`.

Each check runs a small family of experiments and compares them with the
closed forms. Horizon and replication count are parameters so the same
battery runs at desk scale or, much reduced, inside the test suite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from sched_leak_analysis import (
    BoundKind,
    ClosedForm,
    delay_fcfs,
    delay_ptdma,
    delay_tdma,
)
from sched_leak_attack import estimate_acc_serve_genie, gen_probes_periodic, window_counts
from sched_leak_sim import (
    ArrivalTrace,
    PoissonSource,
    PolicyConfig,
    PolicyKind,
    TickDuration,
    generate,
    run,
)

from .config import VICTIM, ExperimentConfig, ExperimentKind, HarnessSettings
from .experiments import (
    privacy_replication,
    run_delay_experiment,
    run_privacy_experiment,
    run_tradeoff,
    scale_for,
)
from .runner import run_replications

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class CheckScale:
    """How hard the battery pushes."""
    horizon: Fraction = Fraction(100_000)
    replications: int = 30
    exact_seeds: int = 100
    seed: int = 0


def _privacy_cfg(
    scale: CheckScale,
    policy: PolicyConfig,
    victim_rate: float,
    probe_rate: Fraction = Fraction(1, 10),
) -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.PRIVACY,
        policy=policy,
        rates=(victim_rate, 0.0),
        clock_period=Fraction(2),
        horizon=scale.horizon,
        replications=scale.replications,
        seed=scale.seed,
        probe_rate=probe_rate,
    )


def _delay_cfg(scale: CheckScale, policy: PolicyConfig, rates: tuple[float, ...]) -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.DELAY,
        policy=policy,
        rates=rates,
        horizon=scale.horizon,
        replications=scale.replications,
        seed=scale.seed,
    )


def check_exact_recovery(scale: CheckScale, settings: HarnessSettings) -> CheckResult:
    fcfs = PolicyConfig(kind=PolicyKind.FCFS)
    details = []
    passed = True
    for probe_rate in (Fraction(1, 100), Fraction(1, 10), Fraction(3, 10)):
        cfg = _privacy_cfg(scale, fcfs, 0.2, probe_rate=probe_rate)
        cfg = replace(cfg, replications=scale.exact_seeds)
        cfg.validate()
        outcomes = run_replications(privacy_replication, cfg, workers=settings.threads)
        wrong = [o.seed for o in outcomes if o.mse != 0.0]
        passed = passed and not wrong
        details.append(f"probe_rate={probe_rate}: {len(wrong)}/{len(outcomes)} seeds with error")
    return CheckResult("exact recovery under FCFS", passed, "; ".join(details))


def check_max_error(scale: CheckScale, settings: HarnessSettings) -> CheckResult:
    tdma = PolicyConfig(kind=PolicyKind.TDMA)
    details = []
    passed = True
    for rate in (0.2, 0.45):
        report = run_privacy_experiment(_privacy_cfg(scale, tdma, rate), settings)
        ok = report.passes(bands=3.0)
        passed = passed and ok
        details.append(f"rate={rate}: {report.mse:.4f}+/-{report.stderr:.4f} vs {report.reference.value:.4f}")
    return CheckResult("statistical mean under TDMA", passed, "; ".join(details))


def check_acc_serve_genie(scale: CheckScale, settings: HarnessSettings) -> tuple[CheckResult, int]:
    details = []
    passed = True
    violations = 0
    for t in (4, 10, 20):
        policy = PolicyConfig(kind=PolicyKind.ACC_SERVE, accumulate_period=t)
        report = run_privacy_experiment(_privacy_cfg(scale, policy, 0.2), settings)
        violations += int(report.params.get("recursion_violations", 0))
        ok = report.passes(bands=3.0)
        passed = passed and ok
        details.append(f"T={t}: {report.mse:.4f}+/-{report.stderr:.4f} vs {report.reference.value:.4f}")
    return CheckResult("accumulate-and-serve genie error", passed, "; ".join(details)), violations


def check_side_information_sufficiency(scale: CheckScale) -> CheckResult:
    """Two probe patterns against one victim trace give bit-identical genie estimates."""
    policy = PolicyConfig(kind=PolicyKind.ACC_SERVE, accumulate_period=10)
    cfg = _privacy_cfg(scale, policy, 0.2)
    ts = scale_for(cfg)
    horizon = ts.time(min(scale.horizon, Fraction(10_000)))
    c = ts.duration(2)
    window = ts.duration(10)
    per_window = window.ticks // c.ticks
    n = (horizon.ticks - window.ticks) // c.ticks // per_window * per_window

    victim = generate(PoissonSource(0.2, scale.seed, owner=VICTIM), horizon, ts)
    patterns = [
        gen_probes_periodic(ts.duration(10), ts.duration(1), horizon),
        gen_probes_periodic(ts.duration(Fraction(7, 2)), ts.duration(Fraction(1, 5)), horizon, phase=ts.duration(1)),
    ]
    estimates = []
    departures = []
    for probes in patterns:
        result = run(policy, [victim, probes], horizon, ts, scale.seed)
        seen = ArrivalTrace(
            VICTIM,
            np.array([j.arrival for j in result.jobs[VICTIM]], dtype=np.int64),
            TickDuration(ts.ticks_per_unit),
            horizon,
        )
        totals = window_counts(seen, window, -(-n * c.ticks // window.ticks))
        estimates.append(estimate_acc_serve_genie(totals, window, c, n))
        departures.append(result.departures(1))
    same = np.array_equal(estimates[0], estimates[1])
    differ = departures[0].shape != departures[1].shape or not np.array_equal(departures[0], departures[1])
    return CheckResult(
        "genie estimate independent of probes",
        same and differ,
        f"estimates identical: {same}; probe departures differ: {differ}",
    )


def _delay_check(
    name: str,
    scale: CheckScale,
    settings: HarnessSettings,
    policy: PolicyConfig,
    rates: tuple[float, ...],
    reference: float,
    rel_tol: float,
) -> CheckResult:
    report = run_delay_experiment(_delay_cfg(scale, policy, rates), settings)
    ok = ClosedForm(reference, BoundKind.EXACT).accepts(report.mean_delay, report.stderr, bands=0.0, rel_tol=rel_tol)
    return CheckResult(
        name, ok, f"rates={rates}: {report.mean_delay:.4f}+/-{report.stderr:.4f} vs {reference:.4f} (+/-{rel_tol:.0%})"
    )


def check_fcfs_delay(scale: CheckScale, settings: HarnessSettings) -> list[CheckResult]:
    fcfs = PolicyConfig(kind=PolicyKind.FCFS)
    return [
        _delay_check("FCFS delay", scale, settings, fcfs, (load / 2, load / 2), delay_fcfs(load), 0.02)
        for load in (0.3, 0.5, 0.8)
    ]


def check_tdma_delay(scale: CheckScale, settings: HarnessSettings) -> CheckResult:
    rates = (0.2, 0.2)
    return _delay_check(
        "TDMA delay", scale, settings, PolicyConfig(kind=PolicyKind.TDMA), rates, delay_tdma(rates), 0.03
    )


def check_acc_serve_delay(scale: CheckScale, settings: HarnessSettings) -> tuple[CheckResult, int]:
    details = []
    passed = True
    violations = 0
    policy = PolicyConfig(kind=PolicyKind.ACC_SERVE, accumulate_period=5)
    for load in (0.3, 0.65):
        report = run_delay_experiment(_delay_cfg(scale, policy, (load / 2, load / 2)), settings)
        violations += int(report.params.get("recursion_violations", 0))
        bound = report.reference.value
        every = all(m <= bound for m in report.replication_means)
        backlog_ok = report.backlog_reference is None or (
            report.mean_backlog is not None and report.mean_backlog <= report.backlog_reference.value
        )
        passed = passed and every and backlog_ok
        details.append(
            f"load={load}: max replication delay {max(report.replication_means):.4f} <= {bound:.4f}: {every}; "
            f"backlog {report.mean_backlog:.4f} <= {report.backlog_reference.value:.4f}: {backlog_ok}"
        )
    return CheckResult("accumulate-and-serve delay bound", passed, "; ".join(details)), violations


def check_ptdma_delay(scale: CheckScale, settings: HarnessSettings) -> CheckResult:
    rates = (0.2, 0.45)
    policy = PolicyConfig(kind=PolicyKind.PTDMA, adaptation_period=20)
    return _delay_check("p-TDMA delay", scale, settings, policy, rates, delay_ptdma(sum(rates), 2), 0.05)


def check_tradeoff(scale: CheckScale, settings: HarnessSettings) -> CheckResult:
    cfg = ExperimentConfig.from_dict({
        "kind": "tradeoff",
        "policy": {"kind": "fcfs"},
        "rates": [0.2, 0.45],
        "clock_period": 2,
        "horizon": float(scale.horizon),
        "replications": scale.replications,
        "seed": scale.seed,
        "sweep": {"accumulate_periods": [4, 10, 20, 40], "adaptation_periods": [4, 10, 20, 40]},
    })
    points = run_tradeoff(cfg, settings)
    by_kind: dict[PolicyKind, list] = {}
    for p in points:
        by_kind.setdefault(p.policy, []).append(p)

    failures = []
    fcfs = by_kind[PolicyKind.FCFS][0]
    tdma = by_kind[PolicyKind.TDMA][0]
    if not fcfs.privacy_ratio < 0.05:
        failures.append(f"FCFS privacy ratio {fcfs.privacy_ratio:.3f}")
    if not tdma.privacy_ratio > 0.95:
        failures.append(f"TDMA privacy ratio {tdma.privacy_ratio:.3f}")

    acc = by_kind.get(PolicyKind.ACC_SERVE, [])
    acc_priv = [p.privacy_ratio for p in acc]
    acc_delay = [p.delay_ratio for p in acc]
    if any(b <= a for a, b in zip(acc_priv, acc_priv[1:])):
        failures.append(f"accumulate-and-serve privacy not increasing in T: {np.round(acc_priv, 3)}")
    if any(b >= a for a, b in zip(acc_delay, acc_delay[1:])):
        failures.append(f"accumulate-and-serve delay ratio not decreasing in T: {np.round(acc_delay, 3)}")

    pt = by_kind.get(PolicyKind.PTDMA, [])
    pt_priv = [p.privacy_ratio for p in pt]
    if any(b < a for a, b in zip(pt_priv, pt_priv[1:])):
        failures.append(f"p-TDMA privacy not increasing in L: {np.round(pt_priv, 3)}")
    if pt:
        delays = [p.delay.mean_delay for p in pt]
        spread = max(delays) - min(delays)
        # Difference of two independent means: 3 SE of each, combined.
        tol = 3.0 * math.sqrt(2.0) * max(p.delay.stderr for p in pt)
        if spread > tol:
            failures.append(f"p-TDMA delay varies with L by {spread:.4f} (> {tol:.4f})")

    return CheckResult("privacy-delay tradeoff shape", not failures, "; ".join(failures) or "all properties hold")


def run_checks(
    scale: CheckScale | None = None,
    settings: HarnessSettings | None = None,
    only: Callable[[str], bool] | None = None,
) -> list[CheckResult]:
    """Run the whole battery; `only` filters checks by name."""
    scale = scale or CheckScale()
    settings = settings or HarnessSettings.load()
    results: list[CheckResult] = []
    violations = 0

    def keep(name: str) -> bool:
        return only is None or only(name)

    if keep("exact"):
        results.append(check_exact_recovery(scale, settings))
    if keep("max-error"):
        results.append(check_max_error(scale, settings))
    if keep("genie"):
        res, v = check_acc_serve_genie(scale, settings)
        results.append(res)
        violations += v
    if keep("sufficiency"):
        results.append(check_side_information_sufficiency(scale))
    if keep("fcfs-delay"):
        results.extend(check_fcfs_delay(scale, settings))
    if keep("tdma-delay"):
        results.append(check_tdma_delay(scale, settings))
    if keep("acc-serve-delay"):
        res, v = check_acc_serve_delay(scale, settings)
        results.append(res)
        violations += v
    if keep("ptdma-delay"):
        results.append(check_ptdma_delay(scale, settings))
    if keep("genie") or keep("acc-serve-delay"):
        results.append(CheckResult(
            "backlog recursion", violations == 0, f"{violations} violations across accumulate-and-serve runs"
        ))
    if keep("tradeoff"):
        results.append(check_tradeoff(scale, settings))

    for r in results:
        log = logger.info if r.passed else logger.error
        log("[%s] %s: %s", "PASS" if r.passed else "FAIL", r.name, r.detail)
    return results


CHECK_NAMES = (
    "exact", "max-error", "genie", "sufficiency", "fcfs-delay",
    "tdma-delay", "acc-serve-delay", "ptdma-delay", "tradeoff",
)
