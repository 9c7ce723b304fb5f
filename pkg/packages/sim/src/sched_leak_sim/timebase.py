"""
Exact time arithmetic on an integer tick grid.

One unit of time is `ticks_per_unit` ticks; the server serves a unit-size job
in exactly one unit. Every duration the simulator touches (clock period,
accumulate period, adaptation period, probe period and size) must be an
integer number of ticks, so that equality tests such as t' == t + s and
ceilings to whole units are exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_TICKS_PER_UNIT = 10_000

Rational = Union[int, float, str, Fraction]


class TimebaseError(ValueError):
    """Base exception for tick-grid arithmetic."""
    pass


class NonRepresentable(TimebaseError):
    """Raised when a duration is not an integer number of ticks."""

    def __init__(self, duration: Rational, ticks_per_unit: int):
        self.duration = duration
        self.ticks_per_unit = ticks_per_unit
        super().__init__(
            f"{duration} units is not a whole number of ticks at {ticks_per_unit} ticks/unit"
        )


class NegativeTime(TimebaseError):
    """Raised when time arithmetic would go below zero."""
    pass


def as_fraction(value: Rational) -> Fraction:
    """
    Read a rational value exactly.

    Floats go through their shortest decimal repr, so 0.1 reads as 1/10
    rather than the nearest binary double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a duration")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True, order=True, slots=True)
class TickDuration:
    """A non-negative span of ticks."""
    ticks: int

    def __post_init__(self) -> None:
        if self.ticks < 0:
            raise NegativeTime(f"Duration cannot be negative: {self.ticks} ticks")

    def __add__(self, other: TickDuration) -> TickDuration:
        if not isinstance(other, TickDuration):
            return NotImplemented
        return TickDuration(self.ticks + other.ticks)

    def __sub__(self, other: TickDuration) -> TickDuration:
        if not isinstance(other, TickDuration):
            return NotImplemented
        return TickDuration(self.ticks - other.ticks)

    def __mul__(self, k: int) -> TickDuration:
        if not isinstance(k, int):
            return NotImplemented
        return TickDuration(self.ticks * k)

    __rmul__ = __mul__

    def __bool__(self) -> bool:
        return self.ticks != 0


@dataclass(frozen=True, order=True, slots=True)
class TickTime:
    """An instant on the tick grid, counted from time zero."""
    ticks: int

    def __post_init__(self) -> None:
        if self.ticks < 0:
            raise NegativeTime(f"Time cannot be negative: {self.ticks} ticks")

    def __add__(self, other: TickDuration) -> TickTime:
        if not isinstance(other, TickDuration):
            return NotImplemented
        return TickTime(self.ticks + other.ticks)

    def __sub__(self, other: TickTime | TickDuration) -> TickDuration | TickTime:
        if isinstance(other, TickTime):
            if other.ticks > self.ticks:
                raise NegativeTime(
                    f"Cannot subtract later time {other.ticks} from earlier {self.ticks}"
                )
            return TickDuration(self.ticks - other.ticks)
        if isinstance(other, TickDuration):
            return TickTime(self.ticks - other.ticks)
        return NotImplemented


@dataclass(frozen=True, slots=True)
class TickScale:
    """Number of ticks in one unit of work/time."""
    ticks_per_unit: int = DEFAULT_TICKS_PER_UNIT

    def __post_init__(self) -> None:
        if not isinstance(self.ticks_per_unit, int) or self.ticks_per_unit < 1:
            raise TimebaseError(f"ticks_per_unit must be a positive integer, got {self.ticks_per_unit}")

    def to_ticks(self, units: Rational) -> int:
        """Exact tick count of a rational number of units."""
        exact = as_fraction(units) * self.ticks_per_unit
        if exact.denominator != 1:
            raise NonRepresentable(units, self.ticks_per_unit)
        if exact < 0:
            raise NegativeTime(f"Negative duration: {units}")
        return int(exact)

    def duration(self, units: Rational) -> TickDuration:
        return TickDuration(self.to_ticks(units))

    def time(self, units: Rational) -> TickTime:
        return TickTime(self.to_ticks(units))

    def units(self, ticks: int | TickTime | TickDuration) -> float:
        """Convert ticks to (real) units for reporting."""
        if isinstance(ticks, (TickTime, TickDuration)):
            ticks = ticks.ticks
        return ticks / self.ticks_per_unit

    def exact_units(self, ticks: int | TickTime | TickDuration) -> Fraction:
        if isinstance(ticks, (TickTime, TickDuration)):
            ticks = ticks.ticks
        return Fraction(ticks, self.ticks_per_unit)

    def quantize(self, units: np.ndarray) -> np.ndarray:
        """Floor real instants onto the tick grid."""
        return np.floor(np.asarray(units, dtype=np.float64) * self.ticks_per_unit).astype(np.int64)


def make_scale(ticks_per_unit: int, required_durations: Iterable[Rational] = ()) -> TickScale:
    """
    Build a scale under which every required duration is a whole tick count.

    Raises:
        NonRepresentable: for the first duration that is not.
    """
    scale = TickScale(ticks_per_unit)
    for d in required_durations:
        scale.to_ticks(d)
    logger.debug("Tick scale %d ticks/unit accepted", ticks_per_unit)
    return scale


def ceil_div_units(d: TickDuration, scale: TickScale) -> int:
    """Smallest n with n * ticks_per_unit >= d.ticks, in integer arithmetic."""
    return -(-d.ticks // scale.ticks_per_unit)


def format_rational(value: Fraction) -> int | float | str:
    """JSON-friendly form of a rational that reads back exactly via as_fraction."""
    if value.denominator == 1:
        return int(value)
    as_float = float(value)
    if as_fraction(as_float) == value:
        return as_float
    return f"{value.numerator}/{value.denominator}"
