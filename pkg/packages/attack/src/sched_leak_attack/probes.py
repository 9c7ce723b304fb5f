"""
Probe streams issued by the attacker.

A probe stream is periodic: one job of `probe_size` every `period`, the
first one at `phase`. The exact-recovery pattern against FCFS uses
period c/ceil(c) and size rate * c/ceil(c), so that ceil(c) probe
intervals tile every clock period of length c.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from sched_leak_sim import (
    ArrivalTrace,
    NonRepresentable,
    TickDuration,
    TickScale,
    TickTime,
    as_fraction,
    ceil_div_units,
)
from sched_leak_sim.timebase import Rational

logger = logging.getLogger(__name__)

ATTACKER = 1


class AttackError(ValueError):
    """Base exception for probing and estimation."""
    pass


class RateBudgetExceeded(AttackError):
    """Raised when a probe stream would use more than its rate budget."""

    def __init__(self, message: str, rate: Fraction):
        self.rate = rate
        super().__init__(message)


class ProbeKind(str, Enum):
    THM2 = "periodic_thm2"
    GENERIC = "periodic_generic"


@dataclass(frozen=True)
class ProbeStrategy:
    """
    A periodic probe pattern.

    rate_budget is the attacker's load allowance; the stream's own load
    probe_size / period may not exceed it.
    """
    kind: ProbeKind
    rate_budget: Fraction
    period: TickDuration
    probe_size: TickDuration
    phase: TickDuration | None = None

    def __post_init__(self) -> None:
        if self.period.ticks <= 0:
            raise AttackError("Probe period must be positive")
        if self.probe_size.ticks <= 0:
            raise AttackError("Probe size must be positive")
        if self.load > self.rate_budget:
            raise RateBudgetExceeded(
                f"Probe load {self.load} exceeds rate budget {self.rate_budget}", self.load
            )

    @property
    def load(self) -> Fraction:
        return Fraction(self.probe_size.ticks, self.period.ticks)

    @property
    def first_arrival(self) -> int:
        return self.period.ticks if self.phase is None else self.phase.ticks

    def trace(self, horizon: TickTime, owner: int = ATTACKER) -> ArrivalTrace:
        """All probe instants strictly before `horizon`."""
        first = self.first_arrival
        if first <= 0:
            raise AttackError("Probes must start after time 0")
        if first >= horizon.ticks:
            ticks = np.empty(0, dtype=np.int64)
        else:
            ticks = np.arange(first, horizon.ticks, self.period.ticks, dtype=np.int64)
        logger.debug(
            "%s probes: %d jobs of %d ticks every %d ticks",
            self.kind.value, ticks.size, self.probe_size.ticks, self.period.ticks,
        )
        return ArrivalTrace(owner, ticks, self.probe_size, horizon)


def _check_budget(rate: Fraction, victim_rate: Rational | None) -> None:
    if rate <= 0:
        raise AttackError(f"Probe rate must be positive, got {rate}")
    if victim_rate is not None and rate >= 1 - as_fraction(victim_rate):
        raise RateBudgetExceeded(
            f"Probe rate {rate} must stay below 1 - {victim_rate} for a stable queue", rate
        )


def thm2_strategy(
    c: TickDuration,
    rate: Rational,
    scale: TickScale,
    victim_rate: Rational | None = None,
) -> ProbeStrategy:
    """
    The exact-recovery probe pattern for clock period c.

    Raises:
        NonRepresentable: if c/ceil(c) or rate * c/ceil(c) is not a whole tick count.
        RateBudgetExceeded: if rate >= 1 - victim_rate.
    """
    rate_f = as_fraction(rate)
    _check_budget(rate_f, victim_rate)

    per_period = ceil_div_units(c, scale)
    if per_period == 0:
        raise AttackError("Clock period must be positive")
    period_f = Fraction(c.ticks, per_period)
    if period_f.denominator != 1:
        raise NonRepresentable(scale.exact_units(c) / per_period, scale.ticks_per_unit)
    size_f = rate_f * period_f
    if size_f.denominator != 1:
        raise NonRepresentable(size_f / scale.ticks_per_unit, scale.ticks_per_unit)

    return ProbeStrategy(
        kind=ProbeKind.THM2,
        rate_budget=rate_f,
        period=TickDuration(int(period_f)),
        probe_size=TickDuration(int(size_f)),
    )


def gen_probes_thm2(
    c: TickDuration,
    rate: Rational,
    horizon: TickTime,
    scale: TickScale,
    victim_rate: Rational | None = None,
    owner: int = ATTACKER,
) -> ArrivalTrace:
    """Probes every c/ceil(c) units of size rate * c/ceil(c), first one at one period."""
    return thm2_strategy(c, rate, scale, victim_rate).trace(horizon, owner)


def gen_probes_periodic(
    period: TickDuration,
    size: TickDuration,
    horizon: TickTime,
    phase: TickDuration | None = None,
    rate_budget: Rational | None = None,
    owner: int = ATTACKER,
) -> ArrivalTrace:
    """
    An arbitrary periodic probe stream.

    Without an explicit budget the stream's own load is the budget.
    """
    budget = (
        as_fraction(rate_budget) if rate_budget is not None
        else Fraction(size.ticks, max(period.ticks, 1))
    )
    strategy = ProbeStrategy(
        kind=ProbeKind.GENERIC,
        rate_budget=budget,
        period=period,
        probe_size=size,
        phase=phase,
    )
    return strategy.trace(horizon, owner)
