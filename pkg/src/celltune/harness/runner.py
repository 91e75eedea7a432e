"""Experiment orchestration: seeded trainings, greedy evaluation, w-sweeps,
metrics CSV emission and cross-seed summaries."""

import dataclasses
import json
import os
from pathlib import Path

import numpy as np
from scipy import stats

from ..agents import (
    GAQModel,
    GQNAlgorithm,
    GQNModel,
    HeuristicAlgorithm,
    LocalAgentModel,
    PerCellAlgorithm,
    TrainingConfig,
    greedy_policy,
    run_evaluation,
    run_training,
)
from ..env import AntennaEnv, ConfigError
from ..nn import load_checkpoint, save_checkpoint
from .config import GQN_FAMILY, PER_CELL_FAMILY

METRICS_COLUMNS = ("step", "episode", "epsilon", "loss", "reward_mean",
                   "global_sinr_db", "mean_power_w", "seed", "algorithm")
DEFAULT_W_LIST = (0.05, 0.1, 0.15, 0.2, 0.5)
HEURISTIC_EVAL_EPISODES = 300
MODEL_INIT_STREAM = 7


class CheckpointIncompatibleError(RuntimeError):
    pass


def mean_ci(values, confidence=0.95):
    """Sample mean and the half-width of its Student-t confidence interval."""
    arr = np.asarray(values, dtype=np.float64)
    m = float(arr.mean())
    if arr.size < 2:
        return m, 0.0
    sem = float(arr.std(ddof=1) / np.sqrt(arr.size))
    half = float(stats.t.ppf(0.5 + confidence / 2.0, arr.size - 1) * sem)
    return m, half


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    """Append-only per-episode CSV, flushed after every row so a crashed
    run can resume by appending."""

    def __init__(self, path, seed, algorithm):
        self.path = Path(path)
        self.seed = seed
        self.algorithm = algorithm
        write_header = not (self.path.exists() and self.path.stat().st_size > 0)
        self._fh = open(self.path, "a")
        if write_header:
            self._fh.write(",".join(METRICS_COLUMNS) + "\n")
            self._fh.flush()

    def write_row(self, row):
        values = [row.step, row.episode, row.epsilon, row.loss, row.reward_mean,
                  row.global_sinr_db, row.mean_power_w, self.seed, self.algorithm]
        self._fh.write(",".join(_fmt(v) for v in values) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path):
    """Parse a metrics CSV back into a list of row dicts."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics schema {header}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            row = dict(zip(METRICS_COLUMNS, parts))
            for key in ("step", "episode", "seed"):
                row[key] = int(row[key])
            for key in ("epsilon", "loss", "reward_mean", "global_sinr_db",
                        "mean_power_w"):
                row[key] = float(row[key]) if row[key] != "" else None
            rows.append(row)
    return rows


def build_model(config, seed):
    scenario = config.scenario
    n_actions = scenario.actions_per_agent
    rng = [seed, MODEL_INIT_STREAM]
    if config.algorithm in GQN_FAMILY:
        gnn = "gat" if config.algorithm == "gqn_gat" else "gcn"
        return GQNModel(scenario.observation_dim, n_actions, gnn=gnn, rng=rng)
    if config.algorithm == "dqn":
        return LocalAgentModel(scenario.observation_dim, n_actions, rng=rng,
                               kind="dqn")
    if config.algorithm == "ndqn":
        return LocalAgentModel(6 * scenario.observation_dim, n_actions,
                               rng=rng, kind="ndqn")
    if config.algorithm == "gaq":
        return GAQModel(scenario.observation_dim, n_actions, rng=rng)
    return None  # heuristic


def build_algorithm(config, env, seed):
    model = build_model(config, seed)
    if config.algorithm in GQN_FAMILY:
        return GQNAlgorithm(model, config.training)
    if config.algorithm in PER_CELL_FAMILY:
        return PerCellAlgorithm(model, config.training, config.algorithm)
    return HeuristicAlgorithm(env)


def scenario_label(config):
    return config.scenario.scenario


def run_dir_for_seed(config, seed, label=None):
    label = label or scenario_label(config)
    return Path(config.out_dir) / config.algorithm / label / f"seed{seed}"


def train_seed(config, seed, label=None):
    """One seeded training: metrics CSV, checkpoint, config snapshot."""
    run_dir = run_dir_for_seed(config, seed, label)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.snapshot").write_text(config.snapshot_json())
    env = AntennaEnv(config.scenario, seed=seed)
    algorithm = build_algorithm(config, env, seed)
    metrics_path = run_dir / "metrics.csv"
    if metrics_path.exists():
        metrics_path.unlink()
    with MetricsWriter(metrics_path, seed, config.algorithm) as writer:
        rows = run_training(env, algorithm, config.training, seed,
                            on_episode=writer.write_row)
    if algorithm is not None and hasattr(algorithm, "checkpoint_payload"):
        arch, params = algorithm.checkpoint_payload()
        extra = {
            "algorithm": config.algorithm,
            "seed": seed,
            "training_step": config.training.total_steps,
            "epsilon_schedule": config.training.epsilon_schedule().state_dict(),
        }
        save_checkpoint(run_dir / "checkpoint.bin", arch, params, extra)
    return rows


def _window_stats(rows, window=10):
    sinr = [r.global_sinr_db for r in rows]
    power = [r.mean_power_w for r in rows]
    reward = [r.reward_mean for r in rows]
    k = min(window, len(rows))
    return {
        "episodes": len(rows),
        "first_sinr_db": float(np.mean(sinr[:k])) if rows else None,
        "final_sinr_db": float(np.mean(sinr[-k:])) if rows else None,
        "final_power_w": float(np.mean(power[-k:])) if rows else None,
        "final_reward": float(np.mean(reward[-k:])) if rows else None,
        "last_episode_power_w": power[-1] if rows else None,
        "last_episode_sinr_db": sinr[-1] if rows else None,
    }


def cmd_train(config, label=None):
    """n_seeds independent trainings plus an aggregate summary with 95%
    Student-t confidence intervals across seeds."""
    per_seed = {}
    for seed in config.seeds():
        rows = train_seed(config, seed, label)
        per_seed[seed] = _window_stats(rows)
    summary = {"algorithm": config.algorithm,
               "scenario": label or scenario_label(config),
               "seeds": {str(s): st for s, st in per_seed.items()}}
    for key in ("first_sinr_db", "final_sinr_db", "final_power_w", "final_reward"):
        values = [st[key] for st in per_seed.values() if st[key] is not None]
        if values:
            m, half = mean_ci(values)
            summary[key] = {"mean": m, "ci95": half}
    label_dir = Path(config.out_dir) / config.algorithm / (
        label or scenario_label(config))
    label_dir.mkdir(parents=True, exist_ok=True)
    (label_dir / "summary.json").write_text(json.dumps(summary, indent=1,
                                                       sort_keys=True))
    return summary


def _eval_policy(arch, state, scenario, env):
    kind = arch.get("model")
    if kind == "gqn":
        if arch["obs_dim"] != scenario.observation_dim:
            raise CheckpointIncompatibleError(
                f"checkpoint expects {arch['obs_dim']}-dim observations, "
                f"scenario provides {scenario.observation_dim}")
        if arch["n_actions"] != scenario.actions_per_agent:
            raise CheckpointIncompatibleError(
                f"checkpoint expects {arch['n_actions']} actions, scenario "
                f"provides {scenario.actions_per_agent}")
        model = GQNModel.from_architecture(arch)
        model.params.load_state_dict(state)
        return greedy_policy(model)
    if kind in ("dqn", "ndqn", "gaq"):
        expected = (6 * scenario.observation_dim if kind == "ndqn"
                    else scenario.observation_dim)
        if arch["obs_dim"] != expected or arch["n_actions"] != scenario.actions_per_agent:
            raise CheckpointIncompatibleError(
                f"{kind} checkpoint does not match the evaluation scenario")
        if kind == "gaq":
            model = GAQModel.from_architecture(arch)
        else:
            model = LocalAgentModel.from_architecture(arch)
        model.params.load_state_dict(state)
        algo = PerCellAlgorithm(model, TrainingConfig(), kind)
        rng = np.random.default_rng(0)

        def act(obs, graph):
            return algo.act(obs, graph, 0.0, rng)

        return act
    raise CheckpointIncompatibleError(f"unknown model kind {kind!r}")


def cmd_eval(checkpoint_path, scenario, n_episodes=50, eval_seed=100_000,
             report_path=None):
    """Greedy rollouts of a checkpointed policy on a (possibly different)
    deployment family; reports final-step metrics with t-intervals over
    episodes."""
    scenario.validate()
    arch, extra, state = load_checkpoint(checkpoint_path)
    env = AntennaEnv(scenario, seed=eval_seed)
    act = _eval_policy(arch, state, scenario, env)
    episodes = run_evaluation(env, act, n_episodes)
    report = {
        "checkpoint": str(checkpoint_path),
        "trained_algorithm": extra.get("algorithm"),
        "trained_seed": extra.get("seed"),
        "n_episodes": n_episodes,
        "eval_scenario": {
            "layout": scenario.layout,
            "n_sites": scenario.n_sites,
            "n_agents": env.n_agents,
            "scenario": scenario.scenario,
        },
    }
    for key in ("final_global_sinr_db", "final_mean_power_w",
                "mean_global_sinr_db", "mean_power_w"):
        m, half = mean_ci([ep[key] for ep in episodes])
        report[key] = {"mean": m, "ci95": half}
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(json.dumps(report, indent=1, sort_keys=True))
    return report


def cmd_heuristic_eval(scenario, n_episodes=HEURISTIC_EVAL_EPISODES,
                       eval_seed=100_000, report_path=None):
    """Constant-policy evaluation of the geometric tilt heuristic."""
    scenario.validate()
    env = AntennaEnv(scenario, seed=eval_seed)
    algo = HeuristicAlgorithm(env)
    episodes = run_evaluation(env, algo.policy(), n_episodes)
    report = {
        "algorithm": "heuristic",
        "n_episodes": n_episodes,
        "eval_scenario": {"layout": scenario.layout, "n_sites": scenario.n_sites,
                          "scenario": scenario.scenario},
    }
    for key in ("final_global_sinr_db", "final_mean_power_w",
                "mean_global_sinr_db", "mean_power_w"):
        m, half = mean_ci([ep[key] for ep in episodes])
        report[key] = {"mean": m, "ci95": half}
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(json.dumps(report, indent=1, sort_keys=True))
    return report


def cmd_sweep_w(config, w_list=DEFAULT_W_LIST):
    """One training per (w, seed) on the joint scenario; tabulates the
    final SINR and power per w."""
    if config.scenario.scenario != "joint":
        raise ConfigError("the w sweep requires scenario=joint")
    table = {}
    for w in w_list:
        cfg = dataclasses.replace(config,
                                  scenario=dataclasses.replace(config.scenario, w=w))
        summary = cmd_train(cfg, label=f"joint-w{w:g}")
        table[str(w)] = {
            "final_sinr_db": summary.get("final_sinr_db"),
            "final_power_w": summary.get("final_power_w"),
            "final_reward": summary.get("final_reward"),
        }
    out = {"w_sweep": table, "algorithm": config.algorithm}
    path = Path(config.out_dir) / config.algorithm / "sweep_w_summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=1, sort_keys=True))
    return out


def output_root(flag_value=None):
    """Output root: the flag wins, then the environment variable, then
    ./runs."""
    if flag_value:
        return flag_value
    return os.environ.get("CELLTUNE_OUT_ROOT", "runs")
