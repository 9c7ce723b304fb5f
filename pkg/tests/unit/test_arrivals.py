import numpy as np
import pytest

from sched_leak_sim import (
    ArrivalError,
    ArrivalTrace,
    HorizonExceeded,
    PoissonSource,
    TickDuration,
    TickScale,
    TickTime,
    TooFewPeriods,
    bin_counts,
    empirical_count_variance,
    generate,
)

SCALE = TickScale(10_000)


def _trace(ticks, horizon=100_000):
    return ArrivalTrace(0, np.array(ticks, dtype=np.int64), TickDuration(10_000), TickTime(horizon))


def test_arrival_times_on_tick_grid():
    assert _trace([5, 20]).arrival_times == [TickTime(5), TickTime(20)]


def test_generate_is_deterministic():
    src = PoissonSource(0.3, seed=7, owner=0)
    a = generate(src, TickTime(1_000_000), SCALE)
    b = generate(src, TickTime(1_000_000), SCALE)
    assert np.array_equal(a.arrival_ticks, b.arrival_ticks)


def test_owners_get_independent_streams():
    a = generate(PoissonSource(0.3, seed=7, owner=0), TickTime(1_000_000), SCALE)
    b = generate(PoissonSource(0.3, seed=7, owner=1), TickTime(1_000_000), SCALE)
    assert not np.array_equal(a.arrival_ticks[:10], b.arrival_ticks[:10])


def test_generated_times_strictly_increasing_and_positive():
    trace = generate(PoissonSource(0.9, seed=3), TickTime(500_000), TickScale(10))
    ticks = trace.arrival_ticks
    assert ticks[0] >= 1
    assert np.all(np.diff(ticks) > 0)
    assert ticks[-1] < trace.horizon.ticks


def test_generated_rate_close_to_nominal():
    horizon_units = 200_000
    trace = generate(PoissonSource(0.25, seed=11), SCALE.time(horizon_units), SCALE)
    assert len(trace) / horizon_units == pytest.approx(0.25, rel=0.02)


def test_empty_horizon():
    trace = generate(PoissonSource(0.5, seed=1), TickTime(0), SCALE)
    assert len(trace) == 0


def test_non_positive_rate_rejected():
    with pytest.raises(ArrivalError):
        PoissonSource(0.0, seed=1)


def test_trace_rejects_unsorted_times():
    with pytest.raises(ArrivalError):
        _trace([5, 5, 9])


def test_binning_is_right_inclusive():
    c = TickDuration(20_000)
    binning = bin_counts(_trace([1, 20_000, 20_001, 39_999, 40_000, 60_000]), c, 3)
    assert binning.counts.tolist() == [2, 3, 1]
    assert binning.total == 6


def test_binning_past_horizon():
    with pytest.raises(HorizonExceeded):
        bin_counts(_trace([1], horizon=30_000), TickDuration(20_000), 2)


def test_poisson_count_variance():
    c = SCALE.duration(2)
    n = 50_000
    trace = generate(PoissonSource(0.2, seed=5), TickTime(n * c.ticks), SCALE)
    var = empirical_count_variance(bin_counts(trace, c, n))
    assert var == pytest.approx(0.4, rel=0.05)


def test_variance_needs_two_periods():
    with pytest.raises(TooFewPeriods):
        empirical_count_variance(bin_counts(_trace([5]), TickDuration(20_000), 1))


def test_export_csv(tmp_path):
    path = tmp_path / "trace.csv"
    _trace([3, 7]).export_csv(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["owner,arrival_ticks,size_ticks", "0,3,10000", "0,7,10000"]
