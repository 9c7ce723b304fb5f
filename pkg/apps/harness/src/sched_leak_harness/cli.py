"""CLI for the scheduler timing-leak experiments."""

from __future__ import annotations

import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, TypeVar

import click

from sched_leak_sim import PolicyConfig, PolicyKind, as_fraction

from .checks import CHECK_NAMES, CheckScale, run_checks
from .config import ExperimentConfig, ExperimentKind, HarnessSettings
from .experiments import (
    AcceptanceFailed,
    run_attack_demo,
    run_delay_experiment,
    run_privacy_experiment,
    run_tradeoff,
)

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., object])


def _run_options(func: F) -> F:
    func = click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Report CSV path")(func)
    func = click.option("--replications", type=int, help="Override replication count")(func)
    func = click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Override base seed")(func)
    func = click.option(
        "--config", "config_path", required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Experiment JSON",
    )(func)
    return func


def _load(config_path: Path, kind: ExperimentKind, seed: int | None,
          replications: int | None, out: Path | None) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.load(config_path)
        overrides: dict[str, object] = {"kind": kind}
        if seed is not None:
            overrides["seed"] = seed
        if replications is not None:
            overrides["replications"] = replications
        if out is not None:
            overrides["output"] = out
        elif cfg.output is None:
            overrides["output"] = HarnessSettings.load().output_dir / f"{config_path.stem}_{kind.value}.csv"
        return replace(cfg, **overrides)  # type: ignore[arg-type]
    except ValueError as e:
        raise click.ClickException(str(e)) from e


def _guard(fn: Callable[[], None]) -> None:
    """Turn library errors into a clean message and exit status."""
    try:
        fn()
    except AcceptanceFailed as e:
        for failure in e.failures:
            logger.error("Check failed: %s", failure)
        sys.exit(1)
    except ValueError as e:
        raise click.ClickException(str(e)) from e


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging")
def cli(verbose: bool) -> None:
    """Simulate shared-server schedulers and measure what a prober learns."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[logging.StreamHandler(sys.stdout)],
    )


@cli.command()
@_run_options
@click.option("--check", is_flag=True, help="Exit non-zero outside the 3-SE acceptance band")
def privacy(config_path: Path, seed: int | None, replications: int | None,
            out: Path | None, check: bool) -> None:
    """Estimation error of the attacker against one policy."""
    cfg = _load(config_path, ExperimentKind.PRIVACY, seed, replications, out)

    def go() -> None:
        report = run_privacy_experiment(cfg, check=check)
        ref = report.reference
        click.echo(
            f"{report.policy.value} / {report.estimator}: MSE {report.mse:.6f} +/- {report.stderr:.6f} "
            f"over {report.replications} replications"
            + ("" if ref is None else f" (closed form {ref.value:.6f}, {ref.kind.value})")
        )
        click.echo(f"Report: {cfg.output}")

    _guard(go)


@cli.command()
@_run_options
@click.option("--check", is_flag=True, help="Exit non-zero outside the acceptance band")
@click.option("--rel-tol", type=float, default=0.0, show_default=True,
              help="Relative tolerance added to the 3-SE band")
def delay(config_path: Path, seed: int | None, replications: int | None,
          out: Path | None, check: bool, rel_tol: float) -> None:
    """Mean job delay under one policy."""
    cfg = _load(config_path, ExperimentKind.DELAY, seed, replications, out)

    def go() -> None:
        report = run_delay_experiment(cfg, check=check, rel_tol=rel_tol)
        ref = report.reference
        click.echo(
            f"{report.policy.value}: mean delay {report.mean_delay:.4f} +/- {report.stderr:.4f} "
            f"over {report.jobs} jobs"
            + ("" if ref is None else f" (closed form {ref.value:.4f}, {ref.kind.value})")
        )
        if report.mean_backlog is not None:
            click.echo(f"mean end-of-period backlog {report.mean_backlog:.4f}")
        click.echo(f"Report: {cfg.output}")

    _guard(go)


@cli.command()
@_run_options
def tradeoff(config_path: Path, seed: int | None, replications: int | None, out: Path | None) -> None:
    """Privacy and delay ratios for FCFS, TDMA and the swept policies."""
    cfg = _load(config_path, ExperimentKind.TRADEOFF, seed, replications, out)

    def go() -> None:
        points = run_tradeoff(cfg)
        for p in points:
            label = p.policy.value if p.param is None else f"{p.policy.value}({p.param:g})"
            click.echo(f"{label:<18} privacy {p.privacy_ratio:.4f}  delay {p.delay_ratio:.4f}")
        click.echo(f"Tradeoff: {cfg.output}")

    _guard(go)


@cli.command("attack-demo")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Experiment JSON (defaults to FCFS, c=2, horizon 10)")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Override base seed")
@click.option("--victim-arrival", "victim_arrivals", multiple=True,
              help="Victim arrival instant in units; repeat for several")
def attack_demo(config_path: Path | None, seed: int | None, victim_arrivals: tuple[str, ...]) -> None:
    """Replay the exact-recovery attack and print every probe interval."""
    if config_path is not None:
        try:
            cfg = ExperimentConfig.load(config_path)
        except ValueError as e:
            raise click.ClickException(str(e)) from e
    else:
        cfg = ExperimentConfig(
            kind=ExperimentKind.ATTACK_DEMO,
            policy=PolicyConfig(kind=PolicyKind.FCFS),
            horizon=Fraction(10),
            replications=1,
        )
    if seed is not None:
        cfg = replace(cfg, seed=seed)

    def go() -> None:
        arrivals = [as_fraction(a) for a in victim_arrivals] or None
        click.echo(run_attack_demo(cfg, arrivals).render())

    _guard(go)


@cli.command()
@click.option("--horizon", type=float, default=100_000, show_default=True, help="Horizon in units")
@click.option("--replications", type=int, default=30, show_default=True)
@click.option("--exact-seeds", type=int, default=100, show_default=True,
              help="Seeds for the exact-recovery check")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--only", multiple=True, type=click.Choice(CHECK_NAMES), help="Run only these checks")
def check(horizon: float, replications: int, exact_seeds: int, seed: int, only: tuple[str, ...]) -> None:
    """Run the acceptance battery; exit status 1 if any check fails."""
    scale = CheckScale(
        horizon=as_fraction(horizon), replications=replications, exact_seeds=exact_seeds, seed=seed
    )
    selected = set(only)
    try:
        results = run_checks(scale, only=(lambda name: name in selected) if selected else None)
    except ValueError as e:
        raise click.ClickException(str(e)) from e

    for r in results:
        click.echo(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    if not all(r.passed for r in results):
        sys.exit(1)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
