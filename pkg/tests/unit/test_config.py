import json
from fractions import Fraction
from pathlib import Path

import pytest

from sched_leak_attack import EstimatorKind, ProbeKind
from sched_leak_harness import (
    ExperimentConfig,
    ExperimentConfigError,
    ExperimentKind,
    HarnessSettings,
    SweepConfig,
)
from sched_leak_sim import PolicyConfig, PolicyKind, TickDuration, TickScale


def _privacy(policy, **kwargs):
    return ExperimentConfig(kind=ExperimentKind.PRIVACY, policy=policy, **kwargs)


def _delay(policy, **kwargs):
    return ExperimentConfig(kind=ExperimentKind.DELAY, policy=policy, **kwargs)


FCFS = PolicyConfig(kind=PolicyKind.FCFS)
TDMA = PolicyConfig(kind=PolicyKind.TDMA)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(
            kind=ExperimentKind.TRADEOFF,
            policy=FCFS,
            rates=(0.2, 0.45),
            clock_period=Fraction(3, 2),
            probe_rate="1/3",
            horizon=5_000,
            replications=4,
            seed=7,
            output=Path("out/report.csv"),
            sweep=SweepConfig(accumulate_periods=(4, 10), adaptation_periods=(20,)),
        )
        path = tmp_path / "cfg.json"
        cfg.dump(path)
        assert ExperimentConfig.load(path) == cfg

    def test_defaults_fill_in(self):
        cfg = ExperimentConfig.from_dict({"kind": "privacy", "policy": {"kind": "fcfs"}})
        assert cfg.rates == (0.2, 0.45)
        assert cfg.clock_period == Fraction(2)
        assert cfg.probe_rate == Fraction(1, 10)
        assert cfg.replications == 30

    def test_unknown_key(self):
        with pytest.raises(ExperimentConfigError, match="Unknown config keys"):
            ExperimentConfig.from_dict({"kind": "privacy", "policy": {"kind": "fcfs"}, "threads": 4})

    def test_unknown_sweep_key(self):
        with pytest.raises(ExperimentConfigError):
            SweepConfig.from_dict({"batch_sizes": [1]})

    def test_missing_policy(self):
        with pytest.raises(ExperimentConfigError):
            ExperimentConfig.from_dict({"kind": "privacy"})

    def test_bad_policy(self):
        with pytest.raises(ExperimentConfigError, match="Invalid policy"):
            ExperimentConfig.from_dict({"kind": "privacy", "policy": {"kind": "lottery"}})

    def test_bad_kind(self):
        with pytest.raises(ExperimentConfigError):
            ExperimentConfig(kind="benchmark", policy=FCFS)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ExperimentConfigError):
            ExperimentConfig.load(path)

    def test_json_must_be_object(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps([1, 2]), encoding="utf-8")
        with pytest.raises(ExperimentConfigError):
            ExperimentConfig.load(path)

    def test_negative_sweep_value(self):
        with pytest.raises(ExperimentConfigError):
            SweepConfig(accumulate_periods=(4, -1))


class TestEstimatorChoice:
    @pytest.mark.parametrize("policy, expected", [
        (FCFS, EstimatorKind.FCFS_EXACT),
        (TDMA, EstimatorKind.STATISTICAL_MEAN),
        (PolicyConfig(kind="acc_serve", accumulate_period=10), EstimatorKind.ACC_SERVE_GENIE),
        (PolicyConfig(kind="acc_serve", accumulate_period=5), EstimatorKind.OVERLAP_GENIE),
        (PolicyConfig(kind="ptdma", adaptation_period=20), EstimatorKind.PTDMA_GENIE),
    ])
    def test_resolved(self, policy, expected):
        assert _privacy(policy).resolved_estimator is expected

    def test_explicit_estimator_wins(self):
        cfg = _privacy(PolicyConfig(kind="acc_serve", accumulate_period=10), estimator="overlap_genie")
        assert cfg.resolved_estimator is EstimatorKind.OVERLAP_GENIE


class TestProbeStrategy:
    def test_fcfs_uses_exact_recovery_pattern(self):
        strategy = _privacy(FCFS).probe_strategy(TickScale(10_000))
        assert strategy.kind is ProbeKind.THM2
        assert strategy.period == TickDuration(10_000)
        assert strategy.probe_size == TickDuration(1_000)

    def test_slotted_policy_uses_unit_probes(self):
        strategy = _privacy(TDMA).probe_strategy(TickScale(10_000))
        assert strategy.kind is ProbeKind.GENERIC
        assert strategy.period == TickDuration(100_000)
        assert strategy.probe_size == TickDuration(10_000)


class TestValidation:
    def test_default_privacy_config_is_valid(self):
        _privacy(FCFS).validate()

    def test_privacy_needs_two_users(self):
        with pytest.raises(ExperimentConfigError):
            _privacy(PolicyConfig(kind="fcfs", num_users=3)).validate()

    def test_probe_rate_leaves_room(self):
        with pytest.raises(ExperimentConfigError, match="probe_rate"):
            _privacy(FCFS, probe_rate=0.8).validate()

    def test_probe_stream_on_tick_grid(self):
        with pytest.raises(ExperimentConfigError, match="not representable"):
            _privacy(FCFS, clock_period=2.5).validate()

    def test_tdma_victim_below_share(self):
        with pytest.raises(ExperimentConfigError, match="TDMA"):
            _privacy(TDMA, rates=(0.5, 0.0)).validate()

    def test_genie_needs_nested_windows(self):
        cfg = _privacy(PolicyConfig(kind="acc_serve", accumulate_period=5), estimator="acc_serve_genie")
        with pytest.raises(ExperimentConfigError, match="multiple of clock_period"):
            cfg.validate()

    def test_exact_estimator_only_for_fcfs(self):
        with pytest.raises(ExperimentConfigError, match="fcfs_exact"):
            _privacy(TDMA, estimator="fcfs_exact").validate()

    def test_horizon_on_tick_grid(self):
        with pytest.raises(ExperimentConfigError):
            _delay(FCFS, horizon="1/3").validate()

    def test_unstable_load(self):
        with pytest.raises(ExperimentConfigError, match="not below 1"):
            _delay(FCFS, rates=(0.5, 0.5)).validate()

    def test_tdma_per_user_rate(self):
        with pytest.raises(ExperimentConfigError, match="1/2"):
            _delay(TDMA, rates=(0.2, 0.5)).validate()

    def test_rate_count_matches_users(self):
        with pytest.raises(ExperimentConfigError):
            _delay(FCFS, rates=(0.1, 0.1, 0.1)).validate()

    @pytest.mark.parametrize(
        "kind", [ExperimentKind.PRIVACY, ExperimentKind.DELAY, ExperimentKind.TRADEOFF]
    )
    @pytest.mark.parametrize("replications", [0, 1])
    def test_reports_need_two_replications(self, kind, replications):
        cfg = ExperimentConfig(kind=kind, policy=FCFS, replications=replications)
        with pytest.raises(ExperimentConfigError, match="at least 2 replications"):
            cfg.validate()

    def test_attack_demo_runs_once(self):
        ExperimentConfig(kind=ExperimentKind.ATTACK_DEMO, policy=FCFS, replications=1).validate()
        with pytest.raises(ExperimentConfigError, match="at least 1 replications"):
            ExperimentConfig(kind=ExperimentKind.ATTACK_DEMO, policy=FCFS, replications=0).validate()

    def test_warmup_fraction(self):
        with pytest.raises(ExperimentConfigError):
            _delay(FCFS, warmup_fraction=1.0).validate()


class TestHarnessSettings:
    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("SCHED_LEAK_THREADS", raising=False)
        monkeypatch.delenv("SCHED_LEAK_OUTPUT_DIR", raising=False)
        assert HarnessSettings.load() == HarnessSettings(threads=1, output_dir=Path("results"))

    def test_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("SCHED_LEAK_THREADS", "4")
        monkeypatch.setenv("SCHED_LEAK_OUTPUT_DIR", str(tmp_path))
        settings = HarnessSettings.load()
        assert settings.threads == 4
        assert settings.output_dir == tmp_path

    def test_threads_at_least_one(self, monkeypatch):
        monkeypatch.setenv("SCHED_LEAK_THREADS", "0")
        assert HarnessSettings.load().threads == 1

    def test_threads_not_a_number(self, monkeypatch):
        monkeypatch.setenv("SCHED_LEAK_THREADS", "many")
        with pytest.raises(ExperimentConfigError):
            HarnessSettings.load()


CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    ExperimentConfig.load(path).validate()
