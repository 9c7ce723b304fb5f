"""
Closed-form privacy and delay values for the four policies.

Rates are in jobs per unit time with unit-size jobs, so a total rate is
also the server load. Every value that is compared against a simulation is
wrapped in a ClosedForm carrying whether it is exact or a bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from scipy.optimize import minimize_scalar

from sched_leak_sim import PolicyKind

logger = logging.getLogger(__name__)

_EPS = 1e-12


class AnalysisError(ValueError):
    """Base exception for formulas and metric estimation."""
    pass


class Unstable(AnalysisError):
    """Raised when a formula is evaluated at or beyond its stability pole."""

    def __init__(self, message: str, load: float):
        self.load = load
        super().__init__(message)


def _check_load(load: float, limit: float = 1.0) -> None:
    if load < 0:
        raise AnalysisError(f"Load cannot be negative, got {load}")
    if load >= limit:
        raise Unstable(f"Load {load} is not below {limit}", load)


class BoundKind(str, Enum):
    EXACT = "exact"
    LOWER = "lower"
    UPPER = "upper"
    INFORMATIVE = "informative"


@dataclass(frozen=True)
class ClosedForm:
    """A reference value and how a simulated estimate may relate to it."""
    value: float
    kind: BoundKind

    def accepts(self, empirical: float, stderr: float, bands: float = 3.0, rel_tol: float = 0.0) -> bool:
        """
        Whether `empirical` is consistent with this reference.

        The allowed slack is the larger of `bands` standard errors and
        `rel_tol` times the reference value.
        """
        slack = max(bands * stderr, rel_tol * abs(self.value), _EPS)
        if self.kind is BoundKind.EXACT:
            return abs(empirical - self.value) <= slack
        if self.kind is BoundKind.LOWER:
            return empirical >= self.value - slack
        if self.kind is BoundKind.UPPER:
            return empirical <= self.value + slack
        return True


# -- privacy ----------------------------------------------------------------

def privacy_max(rate: float, c: float) -> float:
    """Error of an attacker with no observations: the Poisson count variance rate * c."""
    return rate * c


def privacy_bound_acc_serve(rate: float, c: float, accumulate: float) -> float:
    return rate * c * max(0.0, 1.0 - c / accumulate)


def privacy_bound_ptdma(rate: float, c: float, adaptation: float) -> float:
    return rate * c * max(0.0, 1.0 - c / adaptation)


# -- delay ------------------------------------------------------------------

def delay_fcfs(load: float) -> float:
    """M/D/1 mean sojourn time with unit service."""
    _check_load(load)
    return 1.0 + load / (2.0 * (1.0 - load))


def delay_tdma(rates: Sequence[float], num_users: int | None = None) -> float:
    """
    Mean delay of a job under TDMA with unit slots.

    Raises:
        Unstable: if any per-user rate reaches 1/M.
    """
    m = len(rates) if num_users is None else num_users
    if m < len(rates):
        raise AnalysisError(f"{len(rates)} rates for {m} users")
    for r in rates:
        _check_load(r * m)
    total = sum(rates)
    base = 1.0 + m / 2.0
    if total == 0:
        return base
    return base + sum((r / total) * (r * m * m) / (2.0 * (1.0 - r * m)) for r in rates)


def lambda_star(accumulate: float) -> float:
    """Load at which the accumulate-and-serve queue bound switches branch."""
    if accumulate <= 0:
        raise AnalysisError(f"Accumulate period must be positive, got {accumulate}")
    t = accumulate
    return (2 * t + 1 - math.sqrt(1 + 4 * t)) / (2 * t)


def _drift_ratio(alpha: float, load: float, accumulate: float) -> float:
    shift = alpha - load * accumulate
    return (load * accumulate + shift * shift) / (2.0 * shift)


def queue_bound_acc_serve(load: float, accumulate: float) -> float:
    """
    Bound on the mean backlog left over at the end of an accumulate period.

    Minimizes (lambda*T + (a - lambda*T)^2) / (2(a - lambda*T)) over
    a in (lambda*T, T] numerically.
    """
    _check_load(load)
    if load == 0:
        return 0.0
    lo = load * accumulate
    hi = accumulate
    at_end = _drift_ratio(hi, load, accumulate)
    res = minimize_scalar(
        _drift_ratio,
        bounds=(lo + _EPS * max(1.0, hi), hi),
        args=(load, accumulate),
        method="bounded",
        options={"xatol": 1e-10},
    )
    best = min(float(res.fun), at_end)
    logger.debug("Queue bound at load %.4f, T=%g: %.6f (alpha=%.6f)", load, accumulate, best, res.x)
    return best


def queue_bound_printed_forms(load: float, accumulate: float) -> dict[str, float]:
    """
    Both printed readings of the high-load branch next to the low-load one.

    'low_load' is sqrt(lambda*T); 'high_load_T' carries T in the numerator
    as the delay bound does, 'high_load_no_T' drops it.
    """
    _check_load(load)
    one_minus = 1.0 - load
    return {
        "low_load": math.sqrt(load * accumulate),
        "high_load_T": (load + accumulate * one_minus ** 2) / (2.0 * one_minus),
        "high_load_no_T": (load + one_minus ** 2) / (2.0 * one_minus),
        "lambda_star": lambda_star(accumulate),
    }


def delay_bound_acc_serve(load: float, accumulate: float, include_accumulation_wait: bool = False) -> float:
    """
    Upper bound on accumulate-and-serve mean delay.

    By default this is the printed closed form 1 + lambda(T+1)/2 plus the
    branch-selected queue term. With include_accumulation_wait the mean
    T/2 wait for the batch to seal is added and the queue term is the
    numerically optimized bound, which is the form simulations are checked
    against.
    """
    _check_load(load)
    if include_accumulation_wait:
        return 1.0 + (1.0 + load) * accumulate / 2.0 + queue_bound_acc_serve(load, accumulate)
    base = 1.0 + load * (accumulate + 1) / 2.0
    if load < lambda_star(accumulate):
        return base + math.sqrt(load * accumulate)
    one_minus = 1.0 - load
    return base + (load + accumulate * one_minus ** 2) / (2.0 * one_minus)


def delay_ptdma(load: float, num_users: int) -> float:
    _check_load(load)
    return 1.0 + 1.0 / (2.0 * (1.0 - load)) + (num_users - 1) / (1.0 - load)


def delay_ratio_limit_low_load(
    kind: PolicyKind,
    accumulate: float | None = None,
    num_users: int = 2,
) -> float:
    """Limit of policy delay over FCFS delay as the load goes to zero."""
    kind = PolicyKind(kind)
    if kind is PolicyKind.FCFS:
        return 1.0
    if kind is PolicyKind.TDMA:
        return 1.0 + num_users / 2.0
    if kind is PolicyKind.PTDMA:
        return 0.5 + num_users
    if accumulate is None:
        raise AnalysisError("Accumulate-and-serve limit needs the accumulate period")
    return 1.0 + accumulate / 2.0


# -- references -------------------------------------------------------------

def _nested(window: float, c: float) -> bool:
    ratio = window / c
    return abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1


def privacy_reference(
    policy: PolicyKind,
    estimator: str,
    rate: float,
    c: float,
    window: float | None = None,
) -> ClosedForm:
    """
    Reference mean squared error for a policy/estimator pair.

    Genie estimators on nested grids attain their formula exactly; on
    misaligned grids the formula is reported for information only.
    """
    policy = PolicyKind(policy)
    emax = privacy_max(rate, c)
    if estimator == "fcfs_exact":
        return ClosedForm(0.0, BoundKind.EXACT)
    if estimator == "statistical_mean":
        return ClosedForm(emax, BoundKind.EXACT)
    if window is None:
        raise AnalysisError(f"Estimator {estimator} needs the side-information window")

    bound = privacy_bound_ptdma(rate, c, window) if policy is PolicyKind.PTDMA else privacy_bound_acc_serve(
        rate, c, window
    )
    if _nested(window, c):
        return ClosedForm(bound, BoundKind.EXACT)
    if _nested(c, window):
        # Windows finer than the clock reveal every count.
        return ClosedForm(0.0, BoundKind.EXACT)
    return ClosedForm(bound, BoundKind.INFORMATIVE)


def delay_reference(
    policy: PolicyKind,
    rates: Sequence[float],
    accumulate: float | None = None,
) -> ClosedForm:
    """Reference mean delay; accumulate-and-serve gets its upper bound."""
    policy = PolicyKind(policy)
    load = sum(rates)
    if policy is PolicyKind.FCFS:
        return ClosedForm(delay_fcfs(load), BoundKind.EXACT)
    if policy is PolicyKind.TDMA:
        return ClosedForm(delay_tdma(rates), BoundKind.EXACT)
    if policy is PolicyKind.PTDMA:
        return ClosedForm(delay_ptdma(load, len(rates)), BoundKind.EXACT)
    if accumulate is None:
        raise AnalysisError("Accumulate-and-serve reference needs the accumulate period")
    return ClosedForm(
        delay_bound_acc_serve(load, accumulate, include_accumulation_wait=True), BoundKind.UPPER
    )
