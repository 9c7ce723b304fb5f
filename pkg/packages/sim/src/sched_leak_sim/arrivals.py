"""
Poisson job streams and their per-clock-period counts.

A trace stores its arrival instants as a strictly increasing int64 array of
ticks. Binning follows ((k-1)c, kc]: an arrival exactly on kc belongs to
period k.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .timebase import TickDuration, TickScale, TickTime

logger = logging.getLogger(__name__)

# Exponential draws are generated in blocks of roughly this many arrivals.
_BLOCK = 65_536


class ArrivalError(ValueError):
    """Base exception for arrival generation and binning."""
    pass


class HorizonExceeded(ArrivalError):
    """Raised when binning asks for periods beyond the generated horizon."""
    pass


class TooFewPeriods(ArrivalError):
    """Raised when a statistic needs more periods than were binned."""
    pass


@dataclass(frozen=True)
class PoissonSource:
    """A user issuing fixed-size jobs as a Poisson process."""
    rate: float
    seed: int
    owner: int = 0
    job_size: TickDuration | None = None

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ArrivalError(f"Poisson rate must be positive, got {self.rate}")

    def rng(self) -> np.random.Generator:
        # Seeding with (seed, owner) gives every user its own stream per replication.
        return np.random.default_rng([self.seed, self.owner])


@dataclass(frozen=True)
class ArrivalTrace:
    """Arrival instants of one user's jobs, all of the same size."""
    owner: int
    arrival_ticks: np.ndarray
    job_size: TickDuration
    horizon: TickTime

    def __post_init__(self) -> None:
        ticks = np.asarray(self.arrival_ticks, dtype=np.int64)
        object.__setattr__(self, "arrival_ticks", ticks)
        if ticks.size and (ticks[0] < 0 or np.any(np.diff(ticks) <= 0)):
            raise ArrivalError(f"Arrival times for user {self.owner} must be strictly increasing")

    def __len__(self) -> int:
        return int(self.arrival_ticks.size)

    @property
    def arrival_times(self) -> list[TickTime]:
        return [TickTime(int(t)) for t in self.arrival_ticks]

    def export_csv(self, path: Path) -> None:
        """Write (owner, arrival_ticks, size_ticks) rows."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["owner", "arrival_ticks", "size_ticks"])
            for t in self.arrival_ticks:
                writer.writerow([self.owner, int(t), self.job_size.ticks])


@dataclass(frozen=True)
class ClockBinning:
    """Per-period arrival counts X_1..X_N for clock period c."""
    clock_period: TickDuration
    horizon_periods: int
    counts: np.ndarray = field(repr=False)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def generate(source: PoissonSource, horizon: TickTime, scale: TickScale) -> ArrivalTrace:
    """
    Sample a Poisson stream on [0, horizon).

    Inter-arrival gaps are drawn in real arithmetic and every instant is
    floored onto the tick grid. A collision with the previous arrival (or
    with tick 0) is pushed one tick later, so times stay strictly increasing
    and strictly positive.
    """
    job_size = source.job_size if source.job_size is not None else TickDuration(scale.ticks_per_unit)
    horizon_units = horizon.ticks / scale.ticks_per_unit
    if horizon.ticks == 0:
        return ArrivalTrace(source.owner, np.empty(0, dtype=np.int64), job_size, horizon)

    rng = source.rng()
    mean_gap = 1.0 / source.rate
    blocks: list[np.ndarray] = []
    last = 0.0
    while last < horizon_units:
        n = max(_BLOCK, int(source.rate * (horizon_units - last) * 1.1) + 16)
        instants = last + np.cumsum(rng.exponential(mean_gap, size=n))
        blocks.append(instants)
        last = float(instants[-1])

    instants = np.concatenate(blocks)
    instants = instants[instants < horizon_units]
    raw = scale.quantize(instants)
    ticks = raw.copy()

    if ticks.size:
        ticks[0] = max(ticks[0], 1)
        idx = np.arange(ticks.size, dtype=np.int64)
        ticks = np.maximum.accumulate(ticks - idx) + idx
        shifted = int(np.count_nonzero(ticks != raw))
        if shifted:
            logger.debug("User %d: %d tick collisions shifted", source.owner, shifted)
        ticks = ticks[ticks < horizon.ticks]

    logger.debug(
        "User %d: %d arrivals over %.0f units (seed %d)",
        source.owner, ticks.size, horizon_units, source.seed,
    )
    return ArrivalTrace(source.owner, ticks, job_size, horizon)


def bin_counts(trace: ArrivalTrace, c: TickDuration, n_periods: int) -> ClockBinning:
    """
    Count arrivals in ((k-1)c, kc] for k = 1..n_periods.

    Raises:
        HorizonExceeded: if n_periods * c goes past the trace horizon.
    """
    if c.ticks <= 0:
        raise ArrivalError("Clock period must be positive")
    if n_periods < 0:
        raise ArrivalError(f"Negative period count: {n_periods}")
    if n_periods * c.ticks > trace.horizon.ticks:
        raise HorizonExceeded(
            f"{n_periods} periods of {c.ticks} ticks exceed horizon {trace.horizon.ticks}"
        )

    ticks = trace.arrival_ticks
    ticks = ticks[(ticks > 0) & (ticks <= n_periods * c.ticks)]
    bins = (ticks - 1) // c.ticks
    counts = np.bincount(bins, minlength=n_periods).astype(np.int64)
    return ClockBinning(clock_period=c, horizon_periods=n_periods, counts=counts)


def empirical_count_variance(binning: ClockBinning) -> float:
    """Sample variance (ddof=1) of the per-period counts."""
    if binning.horizon_periods < 2:
        raise TooFewPeriods(f"Need at least 2 periods, got {binning.horizon_periods}")
    return float(np.var(binning.counts, ddof=1))
