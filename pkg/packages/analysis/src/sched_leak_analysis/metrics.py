"""
Monte-Carlo estimates of privacy and delay, compared with closed forms.

Replications are first reduced to small per-run samples (a mean squared
error, or per-user delay sums and counts) so that many runs can be merged
cheaply; merging is a plain ordered fold over those samples.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from sched_leak_sim import ClockBinning, PolicyKind, SimulationResult

from .closed_form import AnalysisError, BoundKind, ClosedForm

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["policy", "metric", "empirical", "stderr", "closed_form", "bound_kind", "params"]


class Misaligned(AnalysisError):
    """Raised when estimates and true counts do not line up period by period."""
    pass


class NoJobs(AnalysisError):
    """Raised when a replication has no measured jobs."""
    pass


class TooFewReplications(AnalysisError):
    """Raised when a standard error is asked of fewer than two replications."""
    pass


def format_params(params: Mapping[str, Any]) -> str:
    return ";".join(f"{k}={v}" for k, v in params.items())


def _mean_and_sem(values: Sequence[float]) -> tuple[float, float]:
    if len(values) < 2:
        raise TooFewReplications(f"Need at least 2 replications, got {len(values)}")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(stats.sem(arr, ddof=1))


# -- privacy ----------------------------------------------------------------

def replication_mse(truth: ClockBinning | np.ndarray, estimates: np.ndarray) -> float:
    """Mean over periods of (X_k - estimate_k)^2 for one replication."""
    counts = truth.counts if isinstance(truth, ClockBinning) else np.asarray(truth)
    estimates = np.asarray(estimates, dtype=np.float64)
    if counts.shape != estimates.shape:
        raise Misaligned(f"{counts.size} true counts but {estimates.size} estimates")
    if counts.size == 0:
        raise Misaligned("No periods to compare")
    err = counts.astype(np.float64) - estimates
    return float(np.mean(err * err))


@dataclass(frozen=True)
class EstimationReport:
    """Mean squared estimation error per clock period across replications."""
    policy: PolicyKind
    estimator: str
    mse: float
    stderr: float
    replications: int
    periods: int
    reference: ClosedForm | None = None
    params: dict[str, Any] = field(default_factory=dict)
    replication_mses: tuple[float, ...] = ()

    def passes(self, bands: float = 3.0) -> bool:
        return self.reference is None or self.reference.accepts(self.mse, self.stderr, bands)

    def to_rows(self) -> list[list[Any]]:
        ref = self.reference
        return [[
            self.policy.value,
            f"mse:{self.estimator}",
            self.mse,
            self.stderr,
            "" if ref is None else ref.value,
            "" if ref is None else ref.kind.value,
            format_params(self.params),
        ]]


def summarize_privacy(
    mses: Sequence[float],
    policy: PolicyKind,
    estimator: str,
    periods: int,
    reference: ClosedForm | None = None,
    params: Mapping[str, Any] | None = None,
) -> EstimationReport:
    mean, sem = _mean_and_sem(mses)
    return EstimationReport(
        policy=PolicyKind(policy),
        estimator=estimator,
        mse=mean,
        stderr=sem,
        replications=len(mses),
        periods=periods,
        reference=reference,
        params=dict(params or {}),
        replication_mses=tuple(float(m) for m in mses),
    )


def empirical_privacy(
    truths: Sequence[ClockBinning | np.ndarray],
    estimates: Sequence[np.ndarray],
    policy: PolicyKind,
    estimator: str,
    reference: ClosedForm | None = None,
    params: Mapping[str, Any] | None = None,
) -> EstimationReport:
    """
    Per-period MSE averaged over periods, then over replications.

    Raises:
        Misaligned: if a replication's estimates do not match its truth.
        TooFewReplications: for fewer than two replications.
    """
    if len(truths) != len(estimates):
        raise Misaligned(f"{len(truths)} truths for {len(estimates)} estimate vectors")
    mses = [replication_mse(t, e) for t, e in zip(truths, estimates)]
    periods = len(estimates[0]) if estimates else 0
    return summarize_privacy(mses, policy, estimator, periods, reference, params)


# -- delay ------------------------------------------------------------------

@dataclass(frozen=True)
class DelaySample:
    """Delay and backlog totals of one replication, in units."""
    sums: dict[int, float]
    counts: dict[int, int]
    backlog_sum: float = 0.0
    backlog_periods: int = 0
    censored: int = 0

    @property
    def jobs(self) -> int:
        return sum(self.counts.values())

    @property
    def mean_delay(self) -> float:
        if self.jobs == 0:
            raise NoJobs("Replication has no measured jobs")
        return sum(self.sums.values()) / self.jobs

    @property
    def mean_backlog(self) -> float | None:
        return self.backlog_sum / self.backlog_periods if self.backlog_periods else None


def summarize_delays(result: SimulationResult) -> DelaySample:
    """Reduce a run to its per-user delay sums and seal-time backlog totals."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for owner in result.owners:
        d = result.delays(owner)
        sums[owner] = float(d.sum())
        counts[owner] = int(d.size)

    w, h = result.warmup.ticks, result.horizon.ticks
    backlogs = [r.backlog for r in result.seal_records if w <= r.seal_tick <= h]
    tpu = result.scale.ticks_per_unit
    return DelaySample(
        sums=sums,
        counts=counts,
        backlog_sum=sum(backlogs) / tpu,
        backlog_periods=len(backlogs),
        censored=len(result.censored()),
    )


@dataclass(frozen=True)
class DelayReport:
    """Job-weighted mean delay across replications with per-user means."""
    policy: PolicyKind
    mean_delay: float
    stderr: float
    per_user: dict[int, float]
    replications: int
    jobs: int
    reference: ClosedForm | None = None
    mean_backlog: float | None = None
    backlog_stderr: float | None = None
    backlog_reference: ClosedForm | None = None
    censored: int = 0
    params: dict[str, Any] = field(default_factory=dict)
    replication_means: tuple[float, ...] = ()

    def passes(self, bands: float = 3.0, rel_tol: float = 0.0) -> bool:
        ok = self.reference is None or self.reference.accepts(self.mean_delay, self.stderr, bands, rel_tol)
        if self.backlog_reference is not None and self.mean_backlog is not None:
            ok = ok and self.backlog_reference.accepts(self.mean_backlog, self.backlog_stderr or 0.0, bands)
        return ok

    def to_rows(self) -> list[list[Any]]:
        params = format_params(self.params)
        ref = self.reference
        rows = [[
            self.policy.value, "mean_delay", self.mean_delay, self.stderr,
            "" if ref is None else ref.value, "" if ref is None else ref.kind.value, params,
        ]]
        for owner, mean in sorted(self.per_user.items()):
            rows.append([self.policy.value, f"mean_delay:user{owner}", mean, "", "", "", params])
        if self.mean_backlog is not None:
            bref = self.backlog_reference
            rows.append([
                self.policy.value, "mean_backlog", self.mean_backlog, self.backlog_stderr,
                "" if bref is None else bref.value, "" if bref is None else bref.kind.value, params,
            ])
        return rows


def empirical_delay(
    samples: Sequence[DelaySample | SimulationResult],
    policy: PolicyKind,
    reference: ClosedForm | None = None,
    backlog_reference: ClosedForm | None = None,
    params: Mapping[str, Any] | None = None,
) -> DelayReport:
    """
    Pool delays over replications; the standard error comes from the spread
    of per-replication means.

    Raises:
        NoJobs: if any replication measured no jobs.
        TooFewReplications: for fewer than two replications.
    """
    reduced = [s if isinstance(s, DelaySample) else summarize_delays(s) for s in samples]
    means = [s.mean_delay for s in reduced]
    _, sem = _mean_and_sem(means)

    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for s in reduced:
        for owner, v in s.sums.items():
            sums[owner] = sums.get(owner, 0.0) + v
            counts[owner] = counts.get(owner, 0) + s.counts[owner]
    jobs = sum(counts.values())
    pooled = sum(sums.values()) / jobs

    backlog_mean = backlog_sem = None
    backlogs = [b for b in (s.mean_backlog for s in reduced) if b is not None]
    if len(backlogs) >= 2:
        backlog_mean = sum(s.backlog_sum for s in reduced) / sum(s.backlog_periods for s in reduced)
        _, backlog_sem = _mean_and_sem(backlogs)

    censored = sum(s.censored for s in reduced)
    if censored:
        logger.debug("%d jobs censored at the horizon across %d replications", censored, len(reduced))

    return DelayReport(
        policy=PolicyKind(policy),
        mean_delay=pooled,
        stderr=sem,
        per_user={o: sums[o] / counts[o] for o in sorted(sums) if counts[o]},
        replications=len(reduced),
        jobs=jobs,
        reference=reference,
        mean_backlog=backlog_mean,
        backlog_stderr=backlog_sem,
        backlog_reference=backlog_reference if backlog_mean is not None else None,
        censored=censored,
        params=dict(params or {}),
        replication_means=tuple(means),
    )


def write_report_csv(path: Path, reports: Iterable[EstimationReport | DelayReport]) -> None:
    """Write (policy, metric, empirical, stderr, closed_form, bound_kind, params) rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            writer.writerows(report.to_rows())
    logger.info("Report written to %s", path)
