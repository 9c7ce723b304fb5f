"""
Discrete-event loop driving a scheduling policy over merged arrival traces.

All instants are integer ticks. At any tick, arrivals are admitted before
the policy makes a dispatch decision, so a job arriving exactly when the
server frees up can be chosen. Service is non-preemptive. The loop drains:
it keeps serving after the horizon until every admitted job has departed,
and jobs departing after the horizon are censored from delay statistics.
"""

from __future__ import annotations

import csv
import heapq
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .arrivals import ArrivalTrace
from .policies import ConfigError, PolicyConfig, PolicyKind, SealRecord, Serve, build_policy
from .timebase import TickScale, TickTime

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class Job:
    """One unit of work. All fields are tick counts."""
    owner: int
    seq: int
    arrival: int
    size: int
    start: int | None = None
    departure: int | None = None

    @property
    def delay(self) -> int | None:
        return None if self.departure is None else self.departure - self.arrival


@dataclass(frozen=True)
class SimulationResult:
    """
    Everything a run produced.

    jobs maps each owner to its jobs in sequence order. Statistics only
    consider jobs with arrival >= warmup and departure <= horizon.
    """
    policy: PolicyKind
    scale: TickScale
    horizon: TickTime
    jobs: Mapping[int, tuple[Job, ...]]
    seal_records: tuple[SealRecord, ...] = ()
    busy_ticks: int = 0
    end_tick: int = 0
    seed: int = 0
    warmup: TickTime = field(default_factory=lambda: TickTime(0))

    @property
    def idle_ticks(self) -> int:
        return self.end_tick - self.busy_ticks

    @property
    def owners(self) -> list[int]:
        return sorted(self.jobs)

    def _iter(self, owner: int | None) -> Iterator[Job]:
        if owner is not None:
            yield from self.jobs.get(owner, ())
            return
        for o in self.owners:
            yield from self.jobs[o]

    def departures(self, owner: int) -> np.ndarray:
        return np.array([j.departure for j in self.jobs.get(owner, ())], dtype=np.int64)

    def measured_jobs(self, owner: int | None = None) -> list[Job]:
        w, h = self.warmup.ticks, self.horizon.ticks
        return [
            j for j in self._iter(owner)
            if j.arrival >= w and j.departure is not None and j.departure <= h
        ]

    def censored(self, owner: int | None = None) -> list[Job]:
        """Jobs still in flight at the horizon."""
        h = self.horizon.ticks
        return [j for j in self._iter(owner) if j.departure is None or j.departure > h]

    def delays(self, owner: int | None = None) -> np.ndarray:
        """Per-job delay (departure - arrival) in units over measured jobs."""
        ticks = np.array([j.departure - j.arrival for j in self.measured_jobs(owner)], dtype=np.int64)
        return ticks / self.scale.ticks_per_unit

    @property
    def is_empty(self) -> bool:
        return not self.measured_jobs()

    def export_csv(self, path: Path) -> None:
        """Write (owner, seq, arrival_ticks, size_ticks, departure_ticks) rows."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["owner", "seq", "arrival_ticks", "size_ticks", "departure_ticks"])
            for j in self._iter(None):
                writer.writerow([j.owner, j.seq, j.arrival, j.size, j.departure])


def _jobs_from_traces(traces: Sequence[ArrivalTrace], horizon: TickTime) -> dict[int, list[Job]]:
    jobs: dict[int, list[Job]] = {}
    for trace in traces:
        if trace.owner in jobs:
            raise ConfigError(f"Two traces for user {trace.owner}")
        if len(trace) and int(trace.arrival_ticks[-1]) >= horizon.ticks:
            raise ConfigError(f"User {trace.owner} has arrivals at or past the horizon")
        size = trace.job_size.ticks
        jobs[trace.owner] = [
            Job(owner=trace.owner, seq=i, arrival=int(t), size=size)
            for i, t in enumerate(trace.arrival_ticks)
        ]
    return jobs


def run(
    config: PolicyConfig,
    traces: Sequence[ArrivalTrace],
    horizon: TickTime,
    scale: TickScale,
    seed: int = 0,
) -> SimulationResult:
    """
    Simulate `config` on the given arrival traces.

    Deterministic for fixed (config, traces, scale, seed).

    Raises:
        ConfigError: for durations that are not whole tick counts, duplicate
            or out-of-range users, or arrivals past the horizon.
    """
    policy = build_policy(config, scale, seed)
    per_owner = _jobs_from_traces(traces, horizon)
    arrivals = list(heapq.merge(*per_owner.values(), key=lambda j: (j.arrival, j.owner, j.seq)))

    n = len(arrivals)
    i = 0
    now = 0
    busy = 0
    admit = policy.admit
    decide = policy.next_decision

    while True:
        while i < n and arrivals[i].arrival <= now:
            admit(arrivals[i])
            i += 1

        if policy.pending == 0:
            if i >= n:
                break
            now = arrivals[i].arrival
            continue

        decision = decide(now)
        if isinstance(decision, Serve):
            job = decision.job
            job.start = now
            now += job.size
            job.departure = now
            busy += job.size
            continue

        wake = decision.until
        if i < n:
            nxt = arrivals[i].arrival
            wake = nxt if wake is None else min(wake, nxt)
        if wake is None or wake <= now:
            raise RuntimeError(
                f"{policy.kind.value} policy stalled at tick {now} with {policy.pending} pending jobs"
            )
        now = wake

    result = SimulationResult(
        policy=config.kind,
        scale=scale,
        horizon=horizon,
        jobs={owner: tuple(js) for owner, js in per_owner.items()},
        seal_records=policy.seal_records,
        busy_ticks=busy,
        end_tick=now,
        seed=seed,
    )
    censored = len(result.censored())
    logger.debug(
        "%s run: %d jobs, busy %d / %d ticks, %d censored",
        config.kind.value, n, busy, now, censored,
    )
    return result


def warmup_trim(result: SimulationResult, warmup: TickTime) -> SimulationResult:
    """Exclude jobs arriving before `warmup` from statistics."""
    if warmup.ticks >= result.horizon.ticks:
        raise ValueError(f"Warmup {warmup.ticks} must be shorter than horizon {result.horizon.ticks}")
    trimmed = replace(result, warmup=warmup)
    if trimmed.is_empty:
        logger.warning("No measured jobs left after a warmup of %d ticks", warmup.ticks)
    return trimmed


def check_queue_recursion(records: Sequence[SealRecord], accumulate_ticks: int) -> list[int]:
    """
    Periods whose backlog breaks Q[m+1] = max(0, Q[m] + A[m] - T).

    Returns the offending period numbers; an empty list means the recursion
    holds exactly for every consecutive pair of seal records.
    """
    bad = []
    for prev, cur in zip(records, records[1:]):
        expected = max(0, prev.backlog + prev.sealed_work - accumulate_ticks)
        if cur.backlog != expected:
            bad.append(cur.period)
    return bad
