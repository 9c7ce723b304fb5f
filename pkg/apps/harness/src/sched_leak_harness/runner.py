"""Replication fan-out with an ordered reduce."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, TypeVar

from .config import ExperimentConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")

# A task runs one replication end to end; it must be a module-level function
# so worker processes can import it.
ReplicationTask = Callable[[ExperimentConfig, int], T]


def replication_seeds(cfg: ExperimentConfig, n: int | None = None) -> list[int]:
    count = cfg.replications if n is None else n
    return [cfg.seed + r for r in range(count)]


def run_replications(
    task: ReplicationTask[T],
    cfg: ExperimentConfig,
    n: int | None = None,
    workers: int = 1,
) -> list[T]:
    """
    Run `task(cfg, seed)` for seeds base_seed + r, r = 0..n-1.

    Results come back in replication order whatever order the workers
    finish in.
    """
    seeds = replication_seeds(cfg, n)
    if workers <= 1 or len(seeds) <= 1:
        results = []
        for r, seed in enumerate(seeds):
            results.append(task(cfg, seed))
            logger.debug("Replication %d/%d done (seed %d)", r + 1, len(seeds), seed)
        return results

    indexed: dict[int, T] = {}
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(task, cfg, seed): r for r, seed in enumerate(seeds)}
        for future in as_completed(futures):
            r = futures[future]
            indexed[r] = future.result()
            logger.debug("Replication %d/%d done", len(indexed), len(seeds))
    return [indexed[r] for r in range(len(seeds))]
