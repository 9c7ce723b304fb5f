import json

import pytest
from click.testing import CliRunner

from sched_leak_harness import AcceptanceFailed, cli as cli_module, experiments as experiments_module
from sched_leak_harness.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.fixture
def fcfs_privacy(tmp_path):
    return _write(tmp_path, "privacy_fcfs.json", {
        "kind": "privacy",
        "policy": {"kind": "fcfs"},
        "rates": [0.2, 0.0],
        "clock_period": 2,
        "probe_rate": 0.1,
        "horizon": 200,
        "replications": 2,
    })


@pytest.fixture
def fcfs_delay(tmp_path):
    return _write(tmp_path, "delay_fcfs.json", {
        "kind": "delay",
        "policy": {"kind": "fcfs"},
        "rates": [0.25, 0.25],
        "horizon": 2000,
        "replications": 2,
    })


def test_privacy(runner, fcfs_privacy, tmp_path):
    out = tmp_path / "report.csv"
    result = runner.invoke(cli, ["privacy", "--config", str(fcfs_privacy), "--out", str(out), "--check"])
    assert result.exit_code == 0, result.output
    assert "MSE 0.000000" in result.output
    assert out.exists()
    assert (tmp_path / "report_estimates.csv").exists()


def test_privacy_default_output_dir(runner, fcfs_privacy, tmp_path, monkeypatch):
    monkeypatch.setenv("SCHED_LEAK_OUTPUT_DIR", str(tmp_path / "results"))
    result = runner.invoke(cli, ["privacy", "--config", str(fcfs_privacy), "--seed", "3"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "results" / "privacy_fcfs_privacy.csv").exists()


def test_delay(runner, fcfs_delay, tmp_path):
    out = tmp_path / "delay.csv"
    result = runner.invoke(cli, ["delay", "--config", str(fcfs_delay), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "mean delay" in result.output
    assert "closed form 1.5000" in result.output


@pytest.mark.parametrize("command", ["privacy", "delay"])
def test_single_replication_rejected_before_running(runner, fcfs_privacy, fcfs_delay, tmp_path,
                                                    monkeypatch, command):
    def never(*args, **kwargs):
        raise AssertionError("replications started")

    monkeypatch.setattr(experiments_module, "run_replications", never)
    config = fcfs_privacy if command == "privacy" else fcfs_delay
    result = runner.invoke(
        cli, [command, "--config", str(config), "--replications", "1", "--out", str(tmp_path / "r.csv")]
    )
    assert result.exit_code == 1
    assert "at least 2 replications" in result.output


@pytest.mark.parametrize("command", ["privacy", "delay", "tradeoff"])
def test_bad_thread_count(runner, fcfs_privacy, monkeypatch, command):
    monkeypatch.setenv("SCHED_LEAK_THREADS", "abc")
    result = runner.invoke(cli, [command, "--config", str(fcfs_privacy)])
    assert result.exit_code == 1
    assert "SCHED_LEAK_THREADS must be an integer" in result.output
    assert result.exception is None or isinstance(result.exception, SystemExit)
    assert "Traceback" not in result.output


def test_unstable_config(runner, tmp_path):
    path = _write(tmp_path, "bad.json", {
        "kind": "delay", "policy": {"kind": "fcfs"}, "rates": [0.6, 0.6], "horizon": 100,
    })
    result = runner.invoke(cli, ["delay", "--config", str(path), "--out", str(tmp_path / "x.csv")])
    assert result.exit_code == 1
    assert "not below 1" in result.output


def test_unknown_config_key(runner, tmp_path):
    path = _write(tmp_path, "bad.json", {"kind": "privacy", "policy": {"kind": "fcfs"}, "workers": 2})
    result = runner.invoke(cli, ["privacy", "--config", str(path)])
    assert result.exit_code == 1
    assert "Unknown config keys" in result.output


def test_failed_check_exit_status(runner, fcfs_privacy, tmp_path, monkeypatch):
    def failing(cfg, check=False):
        raise AcceptanceFailed(["MSE 0.5 outside 3 SE of 0.0"])

    monkeypatch.setattr(cli_module, "run_privacy_experiment", failing)
    result = runner.invoke(
        cli, ["privacy", "--config", str(fcfs_privacy), "--check", "--out", str(tmp_path / "r.csv")]
    )
    assert result.exit_code == 1


def test_attack_demo(runner):
    result = runner.invoke(cli, ["attack-demo", "--victim-arrival", "0.35"])
    assert result.exit_code == 0, result.output
    assert "busy_start" in result.output
    assert "MISMATCH" not in result.output


def test_attack_demo_rejects_other_policies(runner, tmp_path):
    path = _write(tmp_path, "tdma.json", {"kind": "attack-demo", "policy": {"kind": "tdma"}, "horizon": 10})
    result = runner.invoke(cli, ["attack-demo", "--config", str(path)])
    assert result.exit_code == 1
    assert "FCFS only" in result.output


def test_tradeoff(runner, tmp_path):
    path = _write(tmp_path, "tradeoff.json", {
        "kind": "tradeoff",
        "policy": {"kind": "fcfs"},
        "rates": [0.2, 0.45],
        "horizon": 200,
        "replications": 2,
        "sweep": {"accumulate_periods": [4], "adaptation_periods": [4]},
    })
    out = tmp_path / "tradeoff.csv"
    result = runner.invoke(cli, ["tradeoff", "--config", str(path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "acc_serve(4)" in result.output
    assert out.exists()


def test_check_subset(runner):
    result = runner.invoke(
        cli, ["check", "--only", "exact", "--horizon", "200", "--exact-seeds", "3"]
    )
    assert result.exit_code == 0, result.output
    assert "[PASS] exact recovery under FCFS" in result.output
