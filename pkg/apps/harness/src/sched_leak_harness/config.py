"""Configuration for the experiment harness."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any

from sched_leak_attack import AttackError, EstimatorKind, ProbeKind, ProbeStrategy, thm2_strategy
from sched_leak_sim import (
    DEFAULT_TICKS_PER_UNIT,
    ConfigError,
    PolicyConfig,
    PolicyKind,
    TickDuration,
    TickScale,
    TimebaseError,
    as_fraction,
    format_rational,
    make_scale,
)

VICTIM = 0


class ExperimentConfigError(ValueError):
    """Raised when an experiment configuration is invalid."""
    pass


class ExperimentKind(str, Enum):
    PRIVACY = "privacy"
    DELAY = "delay"
    TRADEOFF = "tradeoff"
    ATTACK_DEMO = "attack-demo"


@dataclass(frozen=True)
class HarnessSettings:
    """Process-level settings."""

    threads: int = 1
    output_dir: Path = Path("results")

    @classmethod
    def load(cls) -> HarnessSettings:
        """Load from environment variables."""
        try:
            threads = int(os.getenv("SCHED_LEAK_THREADS", "1"))
        except ValueError as e:
            raise ExperimentConfigError(f"SCHED_LEAK_THREADS must be an integer: {e}") from e
        return cls(
            threads=max(1, threads),
            output_dir=Path(os.getenv("SCHED_LEAK_OUTPUT_DIR", "results")),
        )


@dataclass(frozen=True)
class SweepConfig:
    """Accumulate and adaptation periods to sweep in a tradeoff run."""

    accumulate_periods: tuple[Fraction, ...] = ()
    adaptation_periods: tuple[Fraction, ...] = ()

    def __post_init__(self) -> None:
        for name in ("accumulate_periods", "adaptation_periods"):
            values = tuple(as_fraction(v) for v in getattr(self, name))
            if any(v <= 0 for v in values):
                raise ExperimentConfigError(f"{name} must be positive")
            object.__setattr__(self, name, values)

    def to_dict(self) -> dict[str, Any]:
        return {
            "accumulate_periods": [format_rational(v) for v in self.accumulate_periods],
            "adaptation_periods": [format_rational(v) for v in self.adaptation_periods],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SweepConfig:
        unknown = set(data) - {"accumulate_periods", "adaptation_periods"}
        if unknown:
            raise ExperimentConfigError(f"Unknown sweep keys: {sorted(unknown)}")
        return cls(
            accumulate_periods=tuple(data.get("accumulate_periods", ())),
            adaptation_periods=tuple(data.get("adaptation_periods", ())),
        )


_KEYS = {
    "kind", "policy", "rates", "clock_period", "probe_rate", "estimator", "horizon",
    "replications", "seed", "ticks_per_unit", "warmup_fraction", "output", "sweep",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment.

    rates lists every user's Poisson rate; rates[0] is the victim. In
    privacy runs the attacker's probe stream takes the place of user 1 and
    its load is probe_rate. horizon is in units.
    """

    kind: ExperimentKind
    policy: PolicyConfig
    rates: tuple[float, ...] = (0.2, 0.45)
    clock_period: Fraction = Fraction(2)
    probe_rate: Fraction = Fraction(1, 10)
    estimator: EstimatorKind | None = None
    horizon: Fraction = Fraction(100_000)
    replications: int = 30
    seed: int = 0
    ticks_per_unit: int = DEFAULT_TICKS_PER_UNIT
    warmup_fraction: float = 0.1
    output: Path | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", ExperimentKind(self.kind))
            if self.estimator is not None:
                object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        except ValueError as e:
            raise ExperimentConfigError(str(e)) from e
        for name in ("clock_period", "probe_rate", "horizon"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.output is not None:
            object.__setattr__(self, "output", Path(self.output))

    @property
    def victim_rate(self) -> float:
        return self.rates[VICTIM]

    @property
    def side_window(self) -> Fraction | None:
        """Length of the windows the genie sees totals for, if any."""
        if self.policy.kind is PolicyKind.ACC_SERVE:
            return self.policy.accumulate_period
        if self.policy.kind is PolicyKind.PTDMA:
            return self.policy.adaptation_period
        return None

    @property
    def resolved_estimator(self) -> EstimatorKind:
        if self.estimator is not None:
            return self.estimator
        kind = self.policy.kind
        if kind is PolicyKind.FCFS:
            return EstimatorKind.FCFS_EXACT
        if kind is PolicyKind.TDMA:
            return EstimatorKind.STATISTICAL_MEAN
        window = self.side_window
        assert window is not None
        if (window / self.clock_period).denominator != 1:
            return EstimatorKind.OVERLAP_GENIE
        return EstimatorKind.ACC_SERVE_GENIE if kind is PolicyKind.ACC_SERVE else EstimatorKind.PTDMA_GENIE

    def probe_strategy(self, scale: TickScale) -> ProbeStrategy:
        """
        The attacker's probe stream for this experiment.

        Against FCFS the exact-recovery pattern is used. Slotted and batching
        policies serve one job per slot or batch position whatever its size,
        so there the attacker sends unit jobs every 1/probe_rate units.
        """
        c = scale.duration(self.clock_period)
        if self.policy.kind is PolicyKind.FCFS:
            return thm2_strategy(c, self.probe_rate, scale, victim_rate=self.victim_rate)
        return ProbeStrategy(
            kind=ProbeKind.GENERIC,
            rate_budget=self.probe_rate,
            period=scale.duration(1 / self.probe_rate),
            probe_size=TickDuration(scale.ticks_per_unit),
        )

    def validate(self) -> None:
        """
        Check the configuration against every policy precondition before a run.

        Raises:
            ExperimentConfigError: on the first violated precondition.
        """
        # Reports need a standard error; the demo replays a single run.
        minimum = 1 if self.kind is ExperimentKind.ATTACK_DEMO else 2
        if self.replications < minimum:
            raise ExperimentConfigError(
                f"Need at least {minimum} replications, got {self.replications}"
            )
        if self.horizon <= 0:
            raise ExperimentConfigError("horizon must be positive")
        if self.clock_period <= 0:
            raise ExperimentConfigError("clock_period must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ExperimentConfigError("warmup_fraction must be in [0, 1)")
        if any(r < 0 for r in self.rates) or not self.rates:
            raise ExperimentConfigError("rates must be non-negative and non-empty")

        needed = list(self.policy.durations()) + [self.clock_period, self.horizon]
        try:
            make_scale(self.ticks_per_unit, needed)
        except TimebaseError as e:
            raise ExperimentConfigError(str(e)) from e

        if self.kind in (ExperimentKind.PRIVACY, ExperimentKind.ATTACK_DEMO):
            self._validate_privacy()
        else:
            self._validate_delay()

    def _validate_privacy(self) -> None:
        if self.policy.num_users != 2:
            raise ExperimentConfigError("Privacy runs have exactly two users: victim 0 and attacker 1")
        if self.victim_rate <= 0:
            raise ExperimentConfigError("Victim rate must be positive")
        if not 0 < self.probe_rate < 1 - as_fraction(self.victim_rate):
            raise ExperimentConfigError(
                f"probe_rate {self.probe_rate} must lie in (0, 1 - {self.victim_rate})"
            )
        try:
            self.probe_strategy(TickScale(self.ticks_per_unit))
        except (AttackError, TimebaseError) as e:
            raise ExperimentConfigError(f"Probe stream not representable: {e}") from e
        if self.policy.kind is PolicyKind.TDMA and self.victim_rate * 2 >= 1:
            raise ExperimentConfigError("TDMA needs the victim rate below 1/2")
        est = self.resolved_estimator
        window = self.side_window
        if est in (EstimatorKind.ACC_SERVE_GENIE, EstimatorKind.PTDMA_GENIE):
            if window is None or (window / self.clock_period).denominator != 1:
                raise ExperimentConfigError(
                    f"{est.value} needs the side-information window to be a multiple of clock_period"
                )
        if est is EstimatorKind.OVERLAP_GENIE and window is None:
            raise ExperimentConfigError("overlap_genie needs an accumulate or adaptation period")
        if est is EstimatorKind.FCFS_EXACT and self.policy.kind is not PolicyKind.FCFS:
            raise ExperimentConfigError("fcfs_exact only reads FCFS observations")

    def _validate_delay(self) -> None:
        if len(self.rates) != self.policy.num_users:
            raise ExperimentConfigError(
                f"{len(self.rates)} rates for {self.policy.num_users} users"
            )
        load = sum(self.rates)
        if load >= 1:
            raise ExperimentConfigError(f"Total load {load} is not below 1")
        m = self.policy.num_users
        if self.policy.kind is PolicyKind.TDMA and any(r * m >= 1 for r in self.rates):
            raise ExperimentConfigError(f"TDMA needs every rate below 1/{m}")
        if self.kind is ExperimentKind.TRADEOFF:
            if self.policy.num_users != 2 or len(self.rates) != 2:
                raise ExperimentConfigError("Tradeoff runs compare two users")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "kind": self.kind.value,
            "policy": self.policy.to_dict(),
            "rates": list(self.rates),
            "clock_period": format_rational(self.clock_period),
            "probe_rate": format_rational(self.probe_rate),
            "horizon": format_rational(self.horizon),
            "replications": self.replications,
            "seed": self.seed,
            "ticks_per_unit": self.ticks_per_unit,
            "warmup_fraction": self.warmup_fraction,
            "sweep": self.sweep.to_dict(),
        }
        if self.estimator is not None:
            d["estimator"] = self.estimator.value
        if self.output is not None:
            d["output"] = str(self.output)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        unknown = set(data) - _KEYS
        if unknown:
            raise ExperimentConfigError(f"Unknown config keys: {sorted(unknown)}")
        if "kind" not in data or "policy" not in data:
            raise ExperimentConfigError("Config needs 'kind' and 'policy'")
        try:
            policy = PolicyConfig.from_dict(data["policy"])
        except ConfigError as e:
            raise ExperimentConfigError(f"Invalid policy: {e}") from e

        defaults = cls(kind=data["kind"], policy=policy)
        output = data.get("output")
        return cls(
            kind=data["kind"],
            policy=policy,
            rates=tuple(data.get("rates", defaults.rates)),
            clock_period=data.get("clock_period", defaults.clock_period),
            probe_rate=data.get("probe_rate", defaults.probe_rate),
            estimator=data.get("estimator"),
            horizon=data.get("horizon", defaults.horizon),
            replications=int(data.get("replications", defaults.replications)),
            seed=int(data.get("seed", defaults.seed)),
            ticks_per_unit=int(data.get("ticks_per_unit", defaults.ticks_per_unit)),
            warmup_fraction=float(data.get("warmup_fraction", defaults.warmup_fraction)),
            output=Path(output) if output is not None else None,
            sweep=SweepConfig.from_dict(data.get("sweep", {})),
        )

    @classmethod
    def load(cls, path: Path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ExperimentConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ExperimentConfigError(f"{path} must hold a JSON object")
        return cls.from_dict(data)

    def dump(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
