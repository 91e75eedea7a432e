"""Command line entry point: train, eval, sweep-w, heuristic-baseline.

Exit codes: 0 success, 2 configuration errors, 3 runtime aborts.
"""

import argparse
import json
import sys

from ..env import ConfigError
from ..nn import CheckpointError, NumericsError
from .config import ALGORITHMS, build_config
from .runner import (
    DEFAULT_W_LIST,
    HEURISTIC_EVAL_EPISODES,
    CheckpointIncompatibleError,
    cmd_eval,
    cmd_heuristic_eval,
    cmd_sweep_w,
    cmd_train,
    output_root,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_scenario_flags(parser):
    parser.add_argument("--scenario", choices=["tilt", "joint"], default=None)
    parser.add_argument("--layout", choices=["hex", "random"], default=None)
    parser.add_argument("--sites", type=int, default=None)
    parser.add_argument("--users", type=int, default=None)
    parser.add_argument("--isd-min", type=float, default=None)
    parser.add_argument("--isd-max", type=float, default=None)
    parser.add_argument("--w", type=float, default=None)
    parser.add_argument("--split-agents", action=argparse.BooleanOptionalAction,
                        default=None)
    parser.add_argument("--episode-length", type=int, default=None)


def _add_training_flags(parser):
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--gamma", type=float, default=None)
    parser.add_argument("--epsilon-decay-steps", type=int, default=None)
    parser.add_argument("--replay-capacity", type=int, default=None)
    parser.add_argument("--target-update-period", type=int, default=None)


def _add_common_flags(parser):
    parser.add_argument("--config", default=None,
                        help="JSON config file; its keys override flags")
    parser.add_argument("--preset", choices=["desk"], default=None)
    parser.add_argument("--out", default=None,
                        help="output root (default: $CELLTUNE_OUT_ROOT or ./runs)")


def _flag_overrides(args):
    scenario = {}
    for flag, key in (("scenario", "scenario"), ("layout", "layout"),
                      ("sites", "n_sites"), ("users", "n_users"),
                      ("w", "w"), ("split_agents", "split_agents"),
                      ("episode_length", "episode_length")):
        value = getattr(args, flag, None)
        if value is not None:
            scenario[key] = value
    isd_min = getattr(args, "isd_min", None)
    isd_max = getattr(args, "isd_max", None)
    if isd_min is not None or isd_max is not None:
        lo = isd_min if isd_min is not None else 300.0
        hi = isd_max if isd_max is not None else 1500.0
        scenario["isd_range"] = (lo, hi)
    training = {}
    for flag, key in (("steps", "total_steps"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate"), ("gamma", "gamma"),
                      ("epsilon_decay_steps", "epsilon_decay_steps"),
                      ("replay_capacity", "replay_capacity"),
                      ("target_update_period", "target_update_period")):
        value = getattr(args, flag, None)
        if value is not None:
            training[key] = value
    overrides = {}
    if scenario:
        overrides["scenario"] = scenario
    if training:
        overrides["training"] = training
    for flag, key in (("algorithm", "algorithm"), ("seeds", "n_seeds"),
                      ("seed", "base_seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    overrides["out_dir"] = output_root(getattr(args, "out", None))
    return overrides


def _config_from_args(args):
    return build_config(_flag_overrides(args), config_file=args.config,
                        preset=args.preset)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="celltune",
        description="Antenna-tuning experiments: multi-agent Q-learning on a "
                    "simulated macro network.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="seeded training runs")
    p_train.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    p_train.add_argument("--seeds", type=int, default=None, help="number of seeds")
    p_train.add_argument("--seed", type=int, default=None, help="base seed")
    _add_scenario_flags(p_train)
    _add_training_flags(p_train)
    _add_common_flags(p_train)

    p_eval = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=50)
    p_eval.add_argument("--eval-seed", type=int, default=100_000)
    p_eval.add_argument("--report", default=None, help="report JSON path")
    _add_scenario_flags(p_eval)
    _add_common_flags(p_eval)

    p_sweep = sub.add_parser("sweep-w", help="train across power-penalty weights")
    p_sweep.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    p_sweep.add_argument("--seeds", type=int, default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--w-list", default=None,
                         help="comma separated, default "
                              + ",".join(str(w) for w in DEFAULT_W_LIST))
    _add_scenario_flags(p_sweep)
    _add_training_flags(p_sweep)
    _add_common_flags(p_sweep)

    p_h = sub.add_parser("heuristic-baseline",
                         help="constant-policy heuristic evaluation")
    p_h.add_argument("--episodes", type=int, default=HEURISTIC_EVAL_EPISODES)
    p_h.add_argument("--eval-seed", type=int, default=100_000)
    p_h.add_argument("--report", default=None)
    _add_scenario_flags(p_h)
    _add_common_flags(p_h)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            summary = cmd_train(_config_from_args(args))
            print(json.dumps(summary, indent=1, sort_keys=True))
        elif args.command == "eval":
            config = _config_from_args(args)
            report = cmd_eval(args.checkpoint, config.scenario,
                              n_episodes=args.episodes, eval_seed=args.eval_seed,
                              report_path=args.report)
            print(json.dumps(report, indent=1, sort_keys=True))
        elif args.command == "sweep-w":
            config = _config_from_args(args)
            if args.w_list is not None:
                w_list = [float(tok) for tok in args.w_list.split(",") if tok]
            else:
                w_list = DEFAULT_W_LIST
            out = cmd_sweep_w(config, w_list)
            print(json.dumps(out, indent=1, sort_keys=True))
        elif args.command == "heuristic-baseline":
            config = _config_from_args(args)
            report = cmd_heuristic_eval(config.scenario, n_episodes=args.episodes,
                                        eval_seed=args.eval_seed,
                                        report_path=args.report)
            print(json.dumps(report, indent=1, sort_keys=True))
    except (ConfigError, CheckpointError, CheckpointIncompatibleError,
            FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
