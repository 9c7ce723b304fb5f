import math

import pytest

from sched_leak_analysis import (
    AnalysisError,
    BoundKind,
    ClosedForm,
    Unstable,
    delay_bound_acc_serve,
    delay_fcfs,
    delay_ptdma,
    delay_ratio_limit_low_load,
    delay_reference,
    delay_tdma,
    lambda_star,
    privacy_bound_acc_serve,
    privacy_bound_ptdma,
    privacy_max,
    privacy_reference,
    queue_bound_acc_serve,
    queue_bound_printed_forms,
)
from sched_leak_sim import PolicyKind


class TestPrivacy:
    def test_max_error_is_count_variance(self):
        assert privacy_max(0.2, 2) == pytest.approx(0.4)

    def test_acc_serve_bound(self):
        assert privacy_bound_acc_serve(0.2, 2, 10) == pytest.approx(0.32)

    def test_bound_clamps_at_zero(self):
        assert privacy_bound_ptdma(0.2, 4, 2) == 0.0

    @pytest.mark.parametrize("window", [4, 10, 20, 40])
    def test_bound_grows_with_window(self, window):
        assert privacy_bound_acc_serve(0.45, 2, window) < privacy_max(0.45, 2)


class TestDelay:
    def test_md1(self):
        assert delay_fcfs(0.5) == pytest.approx(1.5)
        assert delay_fcfs(0.0) == 1.0

    def test_fcfs_unstable(self):
        with pytest.raises(Unstable) as exc:
            delay_fcfs(1.0)
        assert exc.value.load == 1.0

    def test_tdma(self):
        assert delay_tdma([0.2, 0.2]) == pytest.approx(2.6667, abs=1e-4)

    def test_tdma_idle_user(self):
        assert delay_tdma([0.0, 0.0]) == 2.0

    def test_tdma_needs_rate_below_share(self):
        with pytest.raises(Unstable):
            delay_tdma([0.2, 0.5])

    def test_tdma_more_rates_than_users(self):
        with pytest.raises(AnalysisError):
            delay_tdma([0.1, 0.1, 0.1], num_users=2)

    def test_ptdma(self):
        assert delay_ptdma(0.65, 2) == pytest.approx(5.2857, abs=1e-4)

    def test_lambda_star(self):
        assert lambda_star(5) == pytest.approx(0.64174, abs=1e-5)

    def test_lambda_star_needs_positive_period(self):
        with pytest.raises(AnalysisError):
            lambda_star(0)

    @pytest.mark.parametrize("load, expected", [(0.3, 3.1247), (0.65, 4.7536)])
    def test_acc_serve_printed_bound(self, load, expected):
        assert delay_bound_acc_serve(load, 5) == pytest.approx(expected, abs=1e-4)

    def test_acc_serve_bound_with_accumulation_wait(self):
        value = delay_bound_acc_serve(0.65, 5, include_accumulation_wait=True)
        assert value == pytest.approx(1 + 1.65 * 2.5 + 1.8036, abs=1e-4)

    def test_branches_meet_at_lambda_star(self):
        forms = queue_bound_printed_forms(lambda_star(5), 5)
        assert forms["low_load"] == pytest.approx(forms["high_load_T"], rel=1e-6)
        assert forms["lambda_star"] == pytest.approx(0.64174, abs=1e-5)


class TestQueueBound:
    def test_interior_minimum(self):
        assert queue_bound_acc_serve(0.5, 5) == pytest.approx(math.sqrt(2.5), abs=1e-4)

    def test_minimum_at_period_end(self):
        assert queue_bound_acc_serve(0.65, 5) == pytest.approx(1.8036, abs=1e-4)

    def test_zero_load(self):
        assert queue_bound_acc_serve(0.0, 5) == 0.0

    def test_unstable(self):
        with pytest.raises(Unstable):
            queue_bound_acc_serve(1.2, 5)


class TestLowLoadLimits:
    def test_fcfs(self):
        assert delay_ratio_limit_low_load(PolicyKind.FCFS) == 1.0

    def test_tdma(self):
        assert delay_ratio_limit_low_load("tdma", num_users=2) == 2.0

    def test_ptdma(self):
        assert delay_ratio_limit_low_load(PolicyKind.PTDMA) == 2.5

    def test_acc_serve(self):
        assert delay_ratio_limit_low_load(PolicyKind.ACC_SERVE, accumulate=10) == 6.0
        with pytest.raises(AnalysisError):
            delay_ratio_limit_low_load(PolicyKind.ACC_SERVE)


class TestAccepts:
    def test_exact_within_bands(self):
        ref = ClosedForm(1.0, BoundKind.EXACT)
        assert ref.accepts(1.02, stderr=0.01)
        assert not ref.accepts(1.05, stderr=0.01)

    def test_exact_zero_needs_zero(self):
        ref = ClosedForm(0.0, BoundKind.EXACT)
        assert ref.accepts(0.0, stderr=0.0)
        assert not ref.accepts(1e-6, stderr=0.0)

    def test_relative_tolerance(self):
        ref = ClosedForm(2.0, BoundKind.EXACT)
        assert ref.accepts(2.05, stderr=0.0, rel_tol=0.03)
        assert not ref.accepts(2.07, stderr=0.0, rel_tol=0.03)

    def test_upper(self):
        ref = ClosedForm(3.0, BoundKind.UPPER)
        assert ref.accepts(1.0, stderr=0.1)
        assert not ref.accepts(3.5, stderr=0.1)

    def test_lower(self):
        ref = ClosedForm(3.0, BoundKind.LOWER)
        assert ref.accepts(9.0, stderr=0.1)
        assert not ref.accepts(2.5, stderr=0.1)

    def test_informative_always_passes(self):
        assert ClosedForm(3.0, BoundKind.INFORMATIVE).accepts(100.0, stderr=0.0)


class TestReferences:
    def test_exact_recovery(self):
        ref = privacy_reference(PolicyKind.FCFS, "fcfs_exact", 0.2, 2)
        assert ref == ClosedForm(0.0, BoundKind.EXACT)

    def test_statistical_mean(self):
        ref = privacy_reference(PolicyKind.TDMA, "statistical_mean", 0.2, 2)
        assert ref.value == pytest.approx(0.4)
        assert ref.kind is BoundKind.EXACT

    def test_nested_genie(self):
        ref = privacy_reference(PolicyKind.ACC_SERVE, "acc_serve_genie", 0.2, 2, window=10)
        assert ref.value == pytest.approx(0.32)
        assert ref.kind is BoundKind.EXACT

    def test_finer_windows(self):
        ref = privacy_reference(PolicyKind.PTDMA, "overlap_genie", 0.2, 2, window=1)
        assert ref == ClosedForm(0.0, BoundKind.EXACT)

    def test_misaligned_is_informative(self):
        ref = privacy_reference(PolicyKind.ACC_SERVE, "overlap_genie", 0.2, 2, window=3)
        assert ref.kind is BoundKind.INFORMATIVE
        assert ref.value == pytest.approx(0.4 / 3)

    def test_genie_needs_window(self):
        with pytest.raises(AnalysisError):
            privacy_reference(PolicyKind.ACC_SERVE, "acc_serve_genie", 0.2, 2)

    def test_delay_references(self):
        assert delay_reference(PolicyKind.FCFS, [0.25, 0.25]).value == pytest.approx(1.5)
        assert delay_reference(PolicyKind.TDMA, [0.2, 0.2]).kind is BoundKind.EXACT
        assert delay_reference(PolicyKind.PTDMA, [0.2, 0.45]).value == pytest.approx(5.2857, abs=1e-4)
        acc = delay_reference(PolicyKind.ACC_SERVE, [0.3, 0.35], accumulate=5)
        assert acc.kind is BoundKind.UPPER
        assert acc.value == pytest.approx(delay_bound_acc_serve(0.65, 5, include_accumulation_wait=True))
