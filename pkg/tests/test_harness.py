"""Harness tests: CSV schema, determinism, output layout, config precedence,
evaluation and CLI exit codes."""

import dataclasses
import json
import math

import numpy as np
import pytest

from celltune.harness import (
    METRICS_COLUMNS,
    ExperimentConfig,
    MetricsWriter,
    build_config,
    cmd_eval,
    cmd_heuristic_eval,
    cmd_sweep_w,
    cmd_train,
    main,
    mean_ci,
    output_root,
    read_metrics,
    train_seed,
)
from celltune.agents import EpisodeRow
from celltune.env import ConfigError


def tiny_overrides(out_dir, **extra):
    doc = {
        "algorithm": "gqn",
        "n_seeds": 1,
        "out_dir": str(out_dir),
        "scenario": {"n_sites": 1, "n_users": 60, "isd_range": (400.0, 900.0)},
        "training": {"total_steps": 60, "batch_size": 8, "replay_capacity": 200},
    }
    doc.update(extra)
    return doc


def test_metrics_csv_schema_and_row_count(tmp_path):
    config = build_config(tiny_overrides(tmp_path))
    train_seed(config, seed=0)
    path = tmp_path / "gqn" / "tilt" / "seed0" / "metrics.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 1 + 60 // 20
    rows = read_metrics(path)
    assert [r["episode"] for r in rows] == [1, 2, 3]
    assert all(r["algorithm"] == "gqn" for r in rows)
    assert all(r["seed"] == 0 for r in rows)


def test_training_byte_identical_across_reruns(tmp_path):
    config = build_config(tiny_overrides(tmp_path / "a"))
    train_seed(config, seed=3)
    config2 = build_config(tiny_overrides(tmp_path / "b"))
    train_seed(config2, seed=3)
    a = (tmp_path / "a" / "gqn" / "tilt" / "seed3" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "gqn" / "tilt" / "seed3" / "metrics.csv").read_bytes()
    assert a == b
    ca = (tmp_path / "a" / "gqn" / "tilt" / "seed3" / "checkpoint.bin").read_bytes()
    cb = (tmp_path / "b" / "gqn" / "tilt" / "seed3" / "checkpoint.bin").read_bytes()
    assert ca == cb


def test_seed_isolation(tmp_path):
    multi = build_config(tiny_overrides(tmp_path / "multi", n_seeds=2))
    cmd_train(multi)
    solo = build_config(tiny_overrides(tmp_path / "solo", base_seed=1))
    cmd_train(solo)
    a = (tmp_path / "multi" / "gqn" / "tilt" / "seed1" / "metrics.csv").read_bytes()
    b = (tmp_path / "solo" / "gqn" / "tilt" / "seed1" / "metrics.csv").read_bytes()
    assert a == b


def test_output_layout_and_snapshot(tmp_path):
    config = build_config(tiny_overrides(tmp_path))
    cmd_train(config)
    seed_dir = tmp_path / "gqn" / "tilt" / "seed0"
    assert (seed_dir / "metrics.csv").exists()
    assert (seed_dir / "checkpoint.bin").exists()
    snapshot = json.loads((seed_dir / "config.snapshot").read_text())
    assert snapshot["algorithm"] == "gqn"
    assert snapshot["scenario"]["n_sites"] == 1
    assert snapshot["training"]["learning_rate"] == 1e-2
    assert (tmp_path / "gqn" / "tilt" / "summary.json").exists()


def test_zero_steps_writes_initial_checkpoint(tmp_path):
    config = build_config(tiny_overrides(tmp_path))
    config.training.total_steps = 0
    train_seed(config, seed=0)
    assert (tmp_path / "gqn" / "tilt" / "seed0" / "checkpoint.bin").exists()


def test_config_file_overrides_flags(tmp_path):
    cfg_file = tmp_path / "conf.json"
    cfg_file.write_text(json.dumps({"scenario": {"n_sites": 7}}))
    config = build_config({"scenario": {"n_sites": 1, "n_users": 50}},
                          config_file=cfg_file)
    assert config.scenario.n_sites == 7       # file wins over flag
    assert config.scenario.n_users == 50      # flag wins over default


def test_flags_override_preset():
    config = build_config({"scenario": {"n_users": 99}}, preset="desk")
    assert config.scenario.n_users == 99
    assert config.scenario.n_sites == 7
    assert config.training.total_steps == 3000


def test_algorithm_learning_rate_defaults():
    assert build_config({"algorithm": "gqn"}).training.learning_rate == 1e-2
    assert build_config({"algorithm": "gqn_gat"}).training.learning_rate == 1e-2
    assert build_config({"algorithm": "dqn"}).training.learning_rate == 1e-3
    explicit = build_config({"algorithm": "gqn", "training": {"learning_rate": 5e-4}})
    assert explicit.training.learning_rate == 5e-4


def test_baselines_forced_to_local_reward():
    assert build_config({"algorithm": "dqn"}).scenario.reward_scope == "local"
    assert build_config({"algorithm": "gqn"}).scenario.reward_scope == "global"


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        build_config({"scenario": {"bogus": 1}})
    with pytest.raises(ConfigError):
        build_config({"bogus": 1})
    with pytest.raises(ConfigError):
        build_config({"algorithm": "vdn"})


def test_split_agents_rejected_for_baselines():
    with pytest.raises(ConfigError):
        build_config({"algorithm": "dqn",
                      "scenario": {"scenario": "joint", "split_agents": True}})


def test_mean_ci_against_closed_form():
    # t quantile for df=2 has the closed form x*sqrt(2/(1-x^2)), x = 2p-1
    x = 0.95
    t_975_df2 = x * math.sqrt(2.0 / (1.0 - x * x))
    m, half = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0
    assert half == pytest.approx(t_975_df2 / math.sqrt(3.0), rel=1e-9)
    m1, half1 = mean_ci([4.2])
    assert (m1, half1) == (4.2, 0.0)


def test_metrics_writer_resumes_append(tmp_path):
    path = tmp_path / "metrics.csv"
    row = EpisodeRow(step=20, episode=1, epsilon=0.5, loss=None,
                     reward_mean=0.1, global_sinr_db=9.0, mean_power_w=40.0)
    with MetricsWriter(path, seed=0, algorithm="gqn") as w:
        w.write_row(row)
    with MetricsWriter(path, seed=0, algorithm="gqn") as w:
        w.write_row(dataclasses.replace(row, episode=2, step=40))
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == ",".join(METRICS_COLUMNS)
    rows = read_metrics(path)
    assert rows[0]["loss"] is None
    assert rows[1]["episode"] == 2


def test_eval_on_larger_deployment(tmp_path):
    config = build_config(tiny_overrides(tmp_path))
    train_seed(config, seed=0)
    ckpt = tmp_path / "gqn" / "tilt" / "seed0" / "checkpoint.bin"
    eval_cfg = build_config({"scenario": {"n_sites": 7, "n_users": 80,
                                          "isd_range": (400.0, 900.0)}})
    report = cmd_eval(ckpt, eval_cfg.scenario, n_episodes=3,
                      report_path=tmp_path / "eval.json")
    assert report["eval_scenario"]["n_agents"] == 21
    assert np.isfinite(report["final_global_sinr_db"]["mean"])
    assert (tmp_path / "eval.json").exists()


def test_eval_architecture_mismatch(tmp_path):
    from celltune.harness import CheckpointIncompatibleError
    config = build_config(tiny_overrides(tmp_path))
    train_seed(config, seed=0)
    ckpt = tmp_path / "gqn" / "tilt" / "seed0" / "checkpoint.bin"
    joint_cfg = build_config({"scenario": {"scenario": "joint", "n_sites": 1,
                                           "n_users": 50}})
    with pytest.raises(CheckpointIncompatibleError):
        cmd_eval(ckpt, joint_cfg.scenario, n_episodes=1)


def test_heuristic_eval_report(tmp_path):
    cfg = build_config({"algorithm": "heuristic",
                        "scenario": {"n_sites": 7, "n_users": 60,
                                     "isd_range": (400.0, 900.0)}})
    report = cmd_heuristic_eval(cfg.scenario, n_episodes=4)
    assert report["n_episodes"] == 4
    assert np.isfinite(report["final_global_sinr_db"]["mean"])


def test_sweep_requires_joint(tmp_path):
    config = build_config(tiny_overrides(tmp_path))
    with pytest.raises(ConfigError):
        cmd_sweep_w(config, [0.5])


def test_sweep_w_layout(tmp_path):
    overrides = tiny_overrides(tmp_path, scenario={
        "n_sites": 1, "n_users": 50, "scenario": "joint",
        "isd_range": (400.0, 900.0)})
    config = build_config(overrides)
    out = cmd_sweep_w(config, [0.0, 1.0])
    assert set(out["w_sweep"]) == {"0.0", "1.0"}
    assert (tmp_path / "gqn" / "joint-w1" / "seed0" / "metrics.csv").exists()
    assert (tmp_path / "gqn" / "sweep_w_summary.json").exists()


def test_output_root_environment_variable(monkeypatch):
    monkeypatch.setenv("CELLTUNE_OUT_ROOT", "/tmp/ct-out")
    assert output_root(None) == "/tmp/ct-out"
    assert output_root("explicit") == "explicit"
    monkeypatch.delenv("CELLTUNE_OUT_ROOT")
    assert output_root(None) == "runs"


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["train", "--algorithm", "gqn", "--sites", "1", "--users", "50",
                 "--steps", "20", "--seeds", "1", "--batch-size", "4",
                 "--out", str(tmp_path / "ok")]) == 0
    assert main(["train", "--algorithm", "gqn", "--sites", "5",
                 "--out", str(tmp_path / "bad")]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.bin"),
                 "--sites", "1", "--users", "50"]) == 2
    capsys.readouterr()


def test_cli_runtime_abort_exit_code(tmp_path, capsys):
    # an absurd learning rate blows the parameters up to non-finite values
    code = main(["train", "--algorithm", "gqn", "--sites", "1", "--users", "40",
                 "--steps", "80", "--seeds", "1", "--batch-size", "4",
                 "--lr", "1e100", "--out", str(tmp_path)])
    assert code == 3
    capsys.readouterr()
