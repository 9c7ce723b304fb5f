from typing import Callable, Sequence

import numpy as np
import pytest

from sched_leak_sim import ArrivalTrace, TickDuration, TickScale, TickTime

TraceFactory = Callable[..., ArrivalTrace]


@pytest.fixture
def scale() -> TickScale:
    """Ten ticks per unit keeps hand-worked timelines readable."""
    return TickScale(10)


@pytest.fixture
def make_trace() -> TraceFactory:
    def _make(owner: int, ticks: Sequence[int], horizon: int, size: int = 10) -> ArrivalTrace:
        return ArrivalTrace(
            owner, np.array(ticks, dtype=np.int64), TickDuration(size), TickTime(horizon)
        )

    return _make
