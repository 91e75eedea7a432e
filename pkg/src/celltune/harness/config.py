"""Experiment configuration: defaults, algorithm-derived settings, config
file and flag merging, JSON snapshots."""

import dataclasses
import json
from dataclasses import dataclass, field

from ..agents import TrainingConfig
from ..env import ConfigError, ScenarioConfig
from ..radio import RadioConfig

ALGORITHMS = ("gqn", "gqn_gat", "dqn", "ndqn", "gaq", "heuristic")
GQN_FAMILY = ("gqn", "gqn_gat")
PER_CELL_FAMILY = ("dqn", "ndqn", "gaq")
GQN_LEARNING_RATE = 1e-2
BASELINE_LEARNING_RATE = 1e-3

DESK_PRESET = {
    "scenario": {"n_sites": 7, "n_users": 500},
    "training": {"total_steps": 3000},
}


@dataclass
class ExperimentConfig:
    algorithm: str = "gqn"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    # learning rate stays unset until resolve() picks the per-algorithm value
    training: TrainingConfig = field(
        default_factory=lambda: TrainingConfig(learning_rate=None))
    n_seeds: int = 3
    base_seed: int = 0
    out_dir: str = "runs"

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; "
                              f"expected one of {ALGORITHMS}")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be positive")
        if self.algorithm not in GQN_FAMILY and self.scenario.split_agents:
            raise ConfigError("split_agents is only supported by the gqn family")
        self.scenario.validate()
        return self

    def resolve(self):
        """Fill in algorithm-derived settings: learning rate per the
        hyperparameter table, reward scope per training signal."""
        if self.training.learning_rate is None:
            self.training.learning_rate = (
                GQN_LEARNING_RATE if self.algorithm in GQN_FAMILY
                else BASELINE_LEARNING_RATE)
        self.scenario.reward_scope = (
            "local" if self.algorithm in PER_CELL_FAMILY else "global")
        return self.validate()

    def seeds(self):
        return [self.base_seed + k for k in range(self.n_seeds)]

    def to_dict(self):
        doc = dataclasses.asdict(self)
        doc["scenario"]["isd_range"] = list(doc["scenario"]["isd_range"])
        return doc

    def snapshot_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _apply_overrides(obj, overrides, where):
    valid = {f.name for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if key not in valid:
            raise ConfigError(f"unknown {where} key {key!r}")
        if key == "isd_range":
            value = tuple(value)
        setattr(obj, key, value)


def build_config(flag_overrides=None, config_file=None, preset=None):
    """Defaults, then preset, then CLI flags, then the config file (the
    file wins over flags)."""
    cfg = ExperimentConfig()
    layers = []
    if preset == "desk":
        layers.append(DESK_PRESET)
    elif preset is not None:
        raise ConfigError(f"unknown preset {preset!r}")
    if flag_overrides:
        layers.append(flag_overrides)
    if config_file is not None:
        try:
            with open(config_file) as fh:
                layers.append(json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_file}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
    for layer in layers:
        for key, value in layer.items():
            if key == "scenario":
                _apply_overrides(cfg.scenario, value, "scenario")
            elif key == "training":
                _apply_overrides(cfg.training, value, "training")
            elif key == "radio":
                _apply_overrides(cfg.scenario.radio, value, "radio")
            elif key in ("algorithm", "n_seeds", "base_seed", "out_dir"):
                setattr(cfg, key, value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    return cfg.resolve()


def scenario_from_dict(doc):
    cfg = ScenarioConfig()
    radio_doc = doc.pop("radio", None)
    _apply_overrides(cfg, doc, "scenario")
    if radio_doc:
        cfg.radio = RadioConfig(**radio_doc)
    return cfg.validate()
