from fractions import Fraction

import numpy as np
import pytest

from sched_leak_sim import (
    NegativeTime,
    NonRepresentable,
    TickDuration,
    TickScale,
    TickTime,
    as_fraction,
    ceil_div_units,
    format_rational,
    make_scale,
)


def test_float_reads_as_its_decimal():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction("3/4") == Fraction(3, 4)
    assert as_fraction(2) == Fraction(2)


def test_bool_is_not_a_duration():
    with pytest.raises(TypeError):
        as_fraction(True)


def test_to_ticks_exact():
    scale = TickScale(10_000)
    assert scale.to_ticks(0.1) == 1_000
    assert scale.to_ticks(Fraction(3, 4)) == 7_500
    assert scale.to_ticks(2) == 20_000


def test_non_representable_duration():
    scale = TickScale(10_000)
    with pytest.raises(NonRepresentable) as exc:
        scale.to_ticks(Fraction(1, 3))
    assert exc.value.ticks_per_unit == 10_000
    assert exc.value.duration == Fraction(1, 3)


def test_make_scale_checks_every_duration():
    assert make_scale(10_000, [2, 0.75, 0.01]).ticks_per_unit == 10_000
    with pytest.raises(NonRepresentable):
        make_scale(100, [0.001])


def test_negative_values_rejected():
    with pytest.raises(NegativeTime):
        TickDuration(-1)
    with pytest.raises(NegativeTime):
        TickTime(-5)
    with pytest.raises(NegativeTime):
        TickScale().to_ticks(-1)


def test_time_arithmetic():
    t = TickTime(100)
    d = TickDuration(30)
    assert t + d == TickTime(130)
    assert TickTime(130) - t == TickDuration(30)
    assert t - d == TickTime(70)
    assert d * 3 == TickDuration(90)
    assert 2 * d == TickDuration(60)
    with pytest.raises(NegativeTime):
        t - TickTime(200)


def test_ceil_div_units():
    scale = TickScale(10_000)
    assert ceil_div_units(TickDuration(0), scale) == 0
    assert ceil_div_units(TickDuration(1), scale) == 1
    assert ceil_div_units(TickDuration(10_000), scale) == 1
    assert ceil_div_units(TickDuration(10_001), scale) == 2
    assert ceil_div_units(TickDuration(15_000), scale) == 2


def test_quantize_floors_onto_grid():
    ticks = TickScale(10).quantize([0.0, 0.05, 0.1, 1.99, 2.5])
    assert ticks.tolist() == [0, 0, 1, 19, 25]
    assert ticks.dtype == np.int64


@pytest.mark.parametrize("value", [Fraction(2), Fraction(1, 10), Fraction(1, 3)])
def test_format_rational_reads_back(value):
    assert as_fraction(format_rational(value)) == value
