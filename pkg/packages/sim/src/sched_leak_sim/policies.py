"""
Scheduling policies as state machines.

The engine admits arriving jobs in (arrival, owner, seq) order and, whenever
the server is free, asks the policy for a decision at the current tick:

    Serve(job)    start `job` now; it departs after job.size ticks
    Idle(until)   nothing to start before `until` (None: wait for an arrival).
                  The engine also wakes the policy on any earlier arrival.

User ids are 0-based. Slotted policies start at most one job per slot and
only at a slot boundary.
"""

from __future__ import annotations

import heapq
import logging
from abc import ABC, abstractmethod
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Union

import numpy as np

from .timebase import NonRepresentable, Rational, TickScale, as_fraction, format_rational

if TYPE_CHECKING:
    from .engine import Job

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised when a policy configuration cannot be simulated."""
    pass


class PolicyKind(str, Enum):
    FCFS = "fcfs"
    TDMA = "tdma"
    ACC_SERVE = "acc_serve"
    PTDMA = "ptdma"


@dataclass(frozen=True)
class PolicyConfig:
    """
    Policy selection and parameters, durations in units.

    accumulate_period is T (accumulate-and-serve), adaptation_period is L
    (p-TDMA). user_order is the per-batch service order of accumulate-and-serve.
    """
    kind: PolicyKind
    num_users: int = 2
    accumulate_period: Fraction | None = None
    adaptation_period: Fraction | None = None
    slot_length: Fraction = Fraction(1)
    user_order: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        for name in ("accumulate_period", "adaptation_period", "slot_length"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_fraction(value))
        if self.user_order is not None:
            object.__setattr__(self, "user_order", tuple(int(u) for u in self.user_order))

        if self.num_users < 2:
            raise ConfigError(f"Need at least 2 users, got {self.num_users}")
        if self.kind is PolicyKind.ACC_SERVE and not self.accumulate_period:
            raise ConfigError("acc_serve requires a positive accumulate_period")
        if self.kind is PolicyKind.PTDMA and not self.adaptation_period:
            raise ConfigError("ptdma requires a positive adaptation_period")
        if self.slot_length <= 0:
            raise ConfigError(f"slot_length must be positive, got {self.slot_length}")
        if self.user_order is not None and sorted(self.user_order) != list(range(self.num_users)):
            raise ConfigError(f"user_order must be a permutation of 0..{self.num_users - 1}")

    @property
    def service_order(self) -> tuple[int, ...]:
        return self.user_order if self.user_order is not None else tuple(range(self.num_users))

    def durations(self) -> list[Fraction]:
        """Every duration that must be tick-representable for this policy."""
        out = [self.slot_length]
        if self.accumulate_period is not None:
            out.append(self.accumulate_period)
        if self.adaptation_period is not None:
            out.append(self.adaptation_period)
        return out

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "num_users": self.num_users}
        if self.accumulate_period is not None:
            d["accumulate_period"] = format_rational(self.accumulate_period)
        if self.adaptation_period is not None:
            d["adaptation_period"] = format_rational(self.adaptation_period)
        d["slot_length"] = format_rational(self.slot_length)
        if self.user_order is not None:
            d["user_order"] = list(self.user_order)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PolicyConfig:
        unknown = set(data) - {
            "kind", "num_users", "accumulate_period", "adaptation_period",
            "slot_length", "user_order",
        }
        if unknown:
            raise ConfigError(f"Unknown policy keys: {sorted(unknown)}")
        try:
            kind = PolicyKind(data["kind"])
        except (KeyError, ValueError) as e:
            raise ConfigError(f"Invalid policy kind: {data.get('kind')!r}") from e
        order = data.get("user_order")
        return cls(
            kind=kind,
            num_users=int(data.get("num_users", 2)),
            accumulate_period=_opt_rational(data.get("accumulate_period")),
            adaptation_period=_opt_rational(data.get("adaptation_period")),
            slot_length=as_fraction(data.get("slot_length", 1)),
            user_order=tuple(order) if order is not None else None,
        )


def _opt_rational(value: Rational | None) -> Fraction | None:
    return None if value is None else as_fraction(value)


@dataclass(frozen=True, slots=True)
class Serve:
    job: Job


@dataclass(frozen=True, slots=True)
class Idle:
    until: int | None = None


Decision = Union[Serve, Idle]

IDLE_UNTIL_ARRIVAL = Idle(None)


@dataclass(frozen=True, slots=True)
class SealRecord:
    """
    State of an accumulate-and-serve server at a seal instant.

    backlog is the sealed work (ticks) still unserved just before the seal,
    in-service remainder included; sealed_work is the work of the new batch.
    """
    period: int
    seal_tick: int
    backlog: int
    sealed_work: int
    sealed_jobs: int


class Policy(ABC):
    """A scheduling policy owned by exactly one simulation run."""

    kind: PolicyKind

    @abstractmethod
    def admit(self, job: Job) -> None:
        """Take an arriving job into the policy's queues."""

    @abstractmethod
    def next_decision(self, now: int) -> Decision:
        """Decide what the idle server does at tick `now`."""

    @property
    @abstractmethod
    def pending(self) -> int:
        """Jobs admitted but not yet started."""

    @property
    def seal_records(self) -> tuple[SealRecord, ...]:
        return ()


class FcfsPolicy(Policy):
    """Serve jobs in arrival order; never idle while a job waits."""

    kind = PolicyKind.FCFS

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Job]] = []

    def admit(self, job: Job) -> None:
        heapq.heappush(self._heap, (job.arrival, job.owner, job.seq, job))

    def next_decision(self, now: int) -> Decision:
        if not self._heap:
            return IDLE_UNTIL_ARRIVAL
        return Serve(heapq.heappop(self._heap)[-1])

    @property
    def pending(self) -> int:
        return len(self._heap)


class _SlottedPolicy(Policy):
    """Per-user FIFO queues served one job per slot by slot owner."""

    def __init__(self, num_users: int, slot_ticks: int) -> None:
        self._num_users = num_users
        self._slot = slot_ticks
        self._queues: list[deque[Job]] = [deque() for _ in range(num_users)]
        self._pending = 0

    def admit(self, job: Job) -> None:
        if not 0 <= job.owner < self._num_users:
            raise ConfigError(f"Job owner {job.owner} outside 0..{self._num_users - 1}")
        self._queues[job.owner].append(job)
        self._pending += 1

    @property
    def pending(self) -> int:
        return self._pending

    @abstractmethod
    def slot_owner(self, slot: int) -> int:
        """User that owns slot number `slot` (0-indexed)."""

    def _idle_after(self, slot: int) -> Idle:
        return Idle((slot + 1) * self._slot)

    def next_decision(self, now: int) -> Decision:
        if self._pending == 0:
            return IDLE_UNTIL_ARRIVAL
        slot, offset = divmod(now, self._slot)
        if offset:
            return Idle((slot + 1) * self._slot)
        queue = self._queues[self.slot_owner(slot)]
        if not queue:
            return self._idle_after(slot)
        self._pending -= 1
        return Serve(queue.popleft())


class TdmaPolicy(_SlottedPolicy):
    """Slot k belongs to user k mod M; the server idles through empty slots."""

    kind = PolicyKind.TDMA

    def slot_owner(self, slot: int) -> int:
        return slot % self._num_users

    def _idle_after(self, slot: int) -> Idle:
        # Skip straight to the next slot whose owner has work queued.
        for d in range(1, self._num_users + 1):
            if self._queues[(slot + d) % self._num_users]:
                return Idle((slot + d) * self._slot)
        return IDLE_UNTIL_ARRIVAL


class ProportionalTdmaPolicy(_SlottedPolicy):
    """
    TDMA whose slot reservations follow empirical user rates.

    Window 0 ([0, L)) alternates slots statically. At every boundary mL the
    empirical rate of each user is its admitted work with arrival <= mL per
    elapsed tick; every slot of window m is then given to user i with
    probability rate_i / sum(rates), independently, from the policy RNG.
    The draws of a window happen all at once and in window order, so the
    assignment is a function of the cumulative counts at boundaries and
    the RNG alone.
    """

    kind = PolicyKind.PTDMA

    def __init__(self, num_users: int, slot_ticks: int, adaptation_ticks: int, seed: int) -> None:
        super().__init__(num_users, slot_ticks)
        self._adaptation = adaptation_ticks
        self._slots_per_window = adaptation_ticks // slot_ticks
        self._rng = np.random.default_rng([seed, 0x9D7A])
        self._arrivals: list[list[int]] = [[] for _ in range(num_users)]
        self._work: list[list[int]] = [[] for _ in range(num_users)]
        self._window = 0
        self._owners = np.arange(self._slots_per_window, dtype=np.int64) % num_users
        self.rate_history: list[tuple[int, tuple[float, ...]]] = []

    def admit(self, job: Job) -> None:
        super().admit(job)
        work = self._work[job.owner]
        self._arrivals[job.owner].append(job.arrival)
        work.append((work[-1] if work else 0) + job.size)

    def empirical_rates(self, boundary: int) -> tuple[float, ...]:
        """Work per tick issued by each user over (0, boundary]."""
        rates = []
        for arrivals, work in zip(self._arrivals, self._work):
            n = bisect_right(arrivals, boundary)
            rates.append(work[n - 1] / boundary if n else 0.0)
        return tuple(rates)

    def _draw_window(self, window: int) -> None:
        boundary = window * self._adaptation
        rates = self.empirical_rates(boundary)
        total = sum(rates)
        if total > 0:
            probs = np.asarray(rates) / total
        else:
            probs = np.full(self._num_users, 1.0 / self._num_users)
        self._owners = self._rng.choice(self._num_users, size=self._slots_per_window, p=probs)
        self.rate_history.append((boundary, rates))
        logger.debug("p-TDMA window %d: slot probabilities %s", window, np.round(probs, 4))

    def slot_owner(self, slot: int) -> int:
        window, index = divmod(slot, self._slots_per_window)
        while self._window < window:
            self._window += 1
            self._draw_window(self._window)
        return int(self._owners[index])


class AccumulateServePolicy(Policy):
    """
    Accumulate for T, then serve the sealed batch user by user.

    Jobs arriving in [(m-1)T, mT) are sealed at mT. The server works through
    any carried-over sealed backlog first, then batch m ordered by
    user_order (FIFO within a user), and idles only when no sealed work
    remains.
    """

    kind = PolicyKind.ACC_SERVE

    def __init__(self, accumulate_ticks: int, user_order: tuple[int, ...]) -> None:
        self._period = accumulate_ticks
        self._rank = {u: r for r, u in enumerate(user_order)}
        self._unsealed: list[Job] = []
        self._sealed: deque[Job] = deque()
        self._sealed_work = 0
        self._busy_until = 0
        self._next_seal = accumulate_ticks
        self._records: list[SealRecord] = []

    def admit(self, job: Job) -> None:
        if job.owner not in self._rank:
            raise ConfigError(f"Job owner {job.owner} not in user_order")
        self._unsealed.append(job)

    @property
    def pending(self) -> int:
        return len(self._unsealed) + len(self._sealed)

    @property
    def seal_records(self) -> tuple[SealRecord, ...]:
        return tuple(self._records)

    def _seal_through(self, now: int) -> None:
        while self._next_seal <= now:
            seal = self._next_seal
            backlog = self._sealed_work + max(0, self._busy_until - seal)

            cut = 0
            while cut < len(self._unsealed) and self._unsealed[cut].arrival < seal:
                cut += 1
            batch = self._unsealed[:cut]
            del self._unsealed[:cut]
            batch.sort(key=lambda j: self._rank[j.owner])

            work = sum(j.size for j in batch)
            self._sealed.extend(batch)
            self._sealed_work += work
            self._records.append(SealRecord(
                period=len(self._records) + 1,
                seal_tick=seal,
                backlog=backlog,
                sealed_work=work,
                sealed_jobs=len(batch),
            ))
            self._next_seal += self._period

    def next_decision(self, now: int) -> Decision:
        self._seal_through(now)
        if not self._sealed:
            return Idle(self._next_seal)
        job = self._sealed.popleft()
        self._sealed_work -= job.size
        self._busy_until = now + job.size
        return Serve(job)


@dataclass(frozen=True)
class PolicyTicks:
    """Policy durations resolved onto a tick scale."""
    slot: int
    accumulate: int | None = None
    adaptation: int | None = None


def resolve_ticks(config: PolicyConfig, scale: TickScale) -> PolicyTicks:
    """
    Check the policy's durations against the tick grid.

    Raises:
        ConfigError: for unrepresentable or inconsistent durations.
    """
    try:
        slot = scale.to_ticks(config.slot_length)
        accumulate = (
            scale.to_ticks(config.accumulate_period) if config.accumulate_period is not None else None
        )
        adaptation = (
            scale.to_ticks(config.adaptation_period) if config.adaptation_period is not None else None
        )
    except NonRepresentable as e:
        raise ConfigError(str(e)) from e

    if config.kind is PolicyKind.ACC_SERVE and accumulate is not None:
        if accumulate % scale.ticks_per_unit:
            raise ConfigError(
                f"accumulate_period {config.accumulate_period} is not a whole number of service times"
            )
    if config.kind is PolicyKind.PTDMA and adaptation is not None:
        if adaptation % slot:
            raise ConfigError(
                f"adaptation_period {config.adaptation_period} is not a whole number of slots"
            )
    return PolicyTicks(slot=slot, accumulate=accumulate, adaptation=adaptation)


def build_policy(config: PolicyConfig, scale: TickScale, seed: int = 0) -> Policy:
    """Fresh policy state for one run."""
    ticks = resolve_ticks(config, scale)
    if config.kind is PolicyKind.FCFS:
        return FcfsPolicy()
    if config.kind is PolicyKind.TDMA:
        return TdmaPolicy(config.num_users, ticks.slot)
    if config.kind is PolicyKind.ACC_SERVE:
        assert ticks.accumulate is not None
        return AccumulateServePolicy(ticks.accumulate, config.service_order)
    assert ticks.adaptation is not None
    return ProportionalTdmaPolicy(config.num_users, ticks.slot, ticks.adaptation, seed)
