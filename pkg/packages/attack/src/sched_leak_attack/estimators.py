"""
Estimators of the victim's per-clock-period arrival counts.

Counts are indexed by clock period k = 1..N, period k covering ((k-1)c, kc].
The exact FCFS estimator reads only the attacker's own probe timings. The
genie estimators are handed the victim's per-window totals and return the
conditional mean of each clock-period count given those totals.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from sched_leak_sim import (
    ArrivalTrace,
    SimulationResult,
    TickDuration,
    TickScale,
    bin_counts,
    ceil_div_units,
)

from .probes import ATTACKER, AttackError

logger = logging.getLogger(__name__)


class CaseUnderflow(AttackError):
    """Raised when a probe interval yields a negative or fractional count."""

    def __init__(self, index: int, value_ticks: int):
        self.index = index
        self.value_ticks = value_ticks
        super().__init__(
            f"Probe interval {index} reconstructs to {value_ticks} ticks; "
            "observation does not come from FCFS with unit victim jobs"
        )


class AlignmentError(AttackError):
    """Raised when clock periods do not nest inside the side-information windows."""
    pass


class ObservationTooShort(AttackError):
    """Raised when fewer probes or windows exist than the requested periods need."""
    pass


class EstimatorKind(str, Enum):
    FCFS_EXACT = "fcfs_exact"
    STATISTICAL_MEAN = "statistical_mean"
    ACC_SERVE_GENIE = "acc_serve_genie"
    PTDMA_GENIE = "ptdma_genie"
    OVERLAP_GENIE = "overlap_genie"

    @property
    def uses_side_information(self) -> bool:
        return self in (
            EstimatorKind.ACC_SERVE_GENIE, EstimatorKind.PTDMA_GENIE, EstimatorKind.OVERLAP_GENIE,
        )


class ProbeCase(IntEnum):
    """How a probe interval was read."""
    IDLE = 1         # probe found the server empty
    BUSY_START = 2   # previous probe gone, victim work ahead of this one
    BACKLOGGED = 3   # previous probe still queued or in service at arrival


@dataclass(frozen=True)
class ProbeObservation:
    """Arrival, size and departure ticks of each probe, in probe order."""
    arrivals: np.ndarray
    sizes: np.ndarray
    departures: np.ndarray

    def __post_init__(self) -> None:
        for name in ("arrivals", "sizes", "departures"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if not (self.arrivals.shape == self.sizes.shape == self.departures.shape):
            raise AttackError("Probe arrays must have equal length")
        if np.any(self.departures < self.arrivals + self.sizes):
            raise AttackError("A probe departs before its own service could finish")
        if np.any(np.diff(self.departures) <= 0):
            raise AttackError("Probe departures must be strictly increasing")

    def __len__(self) -> int:
        return int(self.arrivals.size)

    @classmethod
    def from_result(cls, result: SimulationResult, owner: int = ATTACKER) -> ProbeObservation:
        jobs = result.jobs.get(owner, ())
        if any(j.departure is None for j in jobs):
            raise AttackError(f"User {owner} has probes without a departure")
        return cls(
            arrivals=np.array([j.arrival for j in jobs], dtype=np.int64),
            sizes=np.array([j.size for j in jobs], dtype=np.int64),
            departures=np.array([j.departure for j in jobs], dtype=np.int64),
        )


@dataclass(frozen=True)
class IntervalReconstruction:
    """Per-probe case and victim job count for the interval ending at that probe."""
    cases: np.ndarray
    counts: np.ndarray

    def case_counts(self) -> dict[ProbeCase, int]:
        return {case: int(np.count_nonzero(self.cases == case)) for case in ProbeCase}


def reconstruct_intervals(obs: ProbeObservation, scale: TickScale) -> IntervalReconstruction:
    """
    Count victim jobs between consecutive probes from their timings alone.

    Probe k covers (t[k-1], t[k]]. If the previous probe left before t[k],
    the victim work found ahead of probe k is t'[k] - t[k] - s[k] and the
    count is its ceiling in units. Otherwise the server ran without a gap
    from t'[k-1] to the start of probe k, so the count is exactly
    (t'[k] - s[k] - t'[k-1]) in units.

    Raises:
        CaseUnderflow: if a count is negative, or fractional in the backlogged case.
    """
    tpu = scale.ticks_per_unit
    t, s, dep = obs.arrivals, obs.sizes, obs.departures
    prev_dep = np.empty_like(dep)
    if dep.size:
        prev_dep[0] = -1
        prev_dep[1:] = dep[:-1]

    backlogged = prev_dep >= t
    wait = dep - t - s
    gap = dep - s - prev_dep

    bad = (~backlogged & (wait < 0)) | (backlogged & ((gap < 0) | (gap % tpu != 0)))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise CaseUnderflow(k + 1, int(gap[k] if backlogged[k] else wait[k]))

    counts = np.where(backlogged, gap // tpu, -(-wait // tpu)).astype(np.int64)
    cases = np.where(
        backlogged, ProbeCase.BACKLOGGED, np.where(wait == 0, ProbeCase.IDLE, ProbeCase.BUSY_START)
    ).astype(np.int8)
    return IntervalReconstruction(cases=cases, counts=counts)


def estimate_fcfs_exact(
    obs: ProbeObservation,
    c: TickDuration,
    n_periods: int,
    scale: TickScale,
) -> np.ndarray:
    """
    Exact per-period counts from probes on the c/ceil(c) grid under FCFS.

    Raises:
        AlignmentError: if probes are not at k * c/ceil(c), k = 1, 2, ...
        ObservationTooShort: if fewer than n_periods * ceil(c) probes exist.
        CaseUnderflow: see reconstruct_intervals.
    """
    per_period = ceil_div_units(c, scale)
    needed = n_periods * per_period
    if len(obs) < needed:
        raise ObservationTooShort(f"Need {needed} probes for {n_periods} periods, have {len(obs)}")

    step, rem = divmod(c.ticks, per_period)
    grid = step * np.arange(1, needed + 1, dtype=np.int64)
    if rem or not np.array_equal(obs.arrivals[:needed], grid):
        raise AlignmentError("Probe arrivals are not on the c/ceil(c) grid starting at one period")

    head = ProbeObservation(obs.arrivals[:needed], obs.sizes[:needed], obs.departures[:needed])
    counts = reconstruct_intervals(head, scale).counts
    return counts.reshape(n_periods, per_period).sum(axis=1)


def estimate_statistical_mean(rate: float, c: TickDuration, n_periods: int, scale: TickScale) -> np.ndarray:
    """The no-observation estimate: every period gets its mean count rate * c."""
    return np.full(n_periods, rate * scale.units(c), dtype=np.float64)


def window_counts(trace: ArrivalTrace, window: TickDuration, n_windows: int) -> np.ndarray:
    """Victim totals per side-information window ((m-1)W, mW], m = 1..n_windows."""
    return bin_counts(trace, window, n_windows).counts


def _nested_genie(
    totals: np.ndarray,
    window: TickDuration,
    c: TickDuration,
    n_periods: int,
    offset: TickDuration | None,
    label: str,
) -> np.ndarray:
    if window.ticks % c.ticks:
        raise AlignmentError(f"{label} {window.ticks} ticks is not a multiple of c = {c.ticks} ticks")
    if offset is not None and offset.ticks % window.ticks:
        raise AlignmentError(f"Clock grid starts {offset.ticks} ticks off the window grid")
    per_window = window.ticks // c.ticks
    totals = np.asarray(totals, dtype=np.float64)
    if totals.size * per_window < n_periods:
        raise ObservationTooShort(
            f"{totals.size} windows cover {totals.size * per_window} periods, need {n_periods}"
        )
    share = c.ticks / window.ticks
    return np.repeat(totals * share, per_window)[:n_periods]


def estimate_acc_serve_genie(
    batch_counts: np.ndarray,
    accumulate: TickDuration,
    c: TickDuration,
    n_periods: int,
    offset: TickDuration | None = None,
) -> np.ndarray:
    """
    (c/T) * B_m for every clock period inside accumulate period m.

    Raises:
        AlignmentError: if T is not a multiple of c, or the clock grid is
            shifted against the accumulate grid.
    """
    return _nested_genie(batch_counts, accumulate, c, n_periods, offset, "Accumulate period")


def estimate_ptdma_genie(
    window_totals: np.ndarray,
    adaptation: TickDuration,
    c: TickDuration,
    n_periods: int,
    offset: TickDuration | None = None,
) -> np.ndarray:
    """(c/L) * count of the adaptation window holding each clock period."""
    return _nested_genie(window_totals, adaptation, c, n_periods, offset, "Adaptation period")


def estimate_overlap_genie(
    window_totals: np.ndarray,
    window: TickDuration,
    c: TickDuration,
    n_periods: int,
) -> np.ndarray:
    """
    Conditional mean of each clock-period count for any c and W.

    Each window total spreads uniformly over its window, so period k gets
    sum_m B_m * |period_k & window_m| / W. This reduces to the nested genie
    when W is a multiple of c and is exact when c is a multiple of W.
    """
    totals = np.asarray(window_totals, dtype=np.float64)
    end = n_periods * c.ticks
    if n_periods == 0:
        return np.empty(0, dtype=np.float64)
    if totals.size * window.ticks < end:
        raise ObservationTooShort(
            f"{totals.size} windows of {window.ticks} ticks end before {end} ticks"
        )
    cumulative = np.concatenate(([0.0], np.cumsum(totals)))
    edges = c.ticks * np.arange(n_periods + 1, dtype=np.int64)
    m, r = np.divmod(edges, window.ticks)
    # r == 0 at m == totals.size would index past the end; the share is 0 there.
    partial = np.where(r > 0, totals[np.minimum(m, totals.size - 1)] * r / window.ticks, 0.0)
    expected = cumulative[m] + partial
    if window.ticks % c.ticks and c.ticks % window.ticks:
        logger.debug("Overlap genie on a misaligned grid: c=%d W=%d ticks", c.ticks, window.ticks)
    return np.diff(expected)


def export_estimates_csv(path: Path, truth: np.ndarray, estimates: np.ndarray) -> None:
    """Write (period_index, true_count, estimate, squared_error) rows."""
    truth = np.asarray(truth)
    estimates = np.asarray(estimates, dtype=np.float64)
    if truth.shape != estimates.shape:
        raise AttackError(f"{truth.size} true counts but {estimates.size} estimates")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["period_index", "true_count", "estimate", "squared_error"])
        for k, (x, e) in enumerate(zip(truth, estimates), start=1):
            writer.writerow([k, int(x), repr(float(e)), repr(float((x - e) ** 2))])
