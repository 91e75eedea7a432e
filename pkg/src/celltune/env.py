"""Multi-agent antenna-tuning MDP.

Each cell is an agent observing a 9-feature vector (position, pointing
direction, SINR percentiles of its users, tilt, power), all rescaled to
[-1, 1]. Episodes sample a fresh deployment, run a fixed number of steps,
and never rewire the interference graph mid-episode. Supports a tilt-only
scenario and a joint tilt+power scenario, global or local rewards, and an
optional split of every cell into a tilt agent and a power agent.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import radio
from .graphs import NetworkGraph
from .radio import RadioConfig

TILT_DELTAS_DEG = (-1.0, 0.0, 1.0)
POWER_DELTAS_W = (-5.0, 0.0, 5.0)
FIXED_TILT_SCENARIO_POWER_W = 40.0
OBSERVATION_DIM = 9
SPLIT_OBSERVATION_DIM = 11  # 9 features + 2-dim parameter-type tag


class ConfigError(ValueError):
    pass


class InvalidStateError(RuntimeError):
    pass


@dataclass
class ScenarioConfig:
    layout: str = "hex"                  # hex | random
    n_sites: int = 19
    isd_range: tuple = (300.0, 1500.0)
    n_users: int = 10_000
    scenario: str = "tilt"               # tilt | joint
    reward_scope: str = "global"         # global | local
    w: float = 0.15                      # power penalty weight, joint only
    split_agents: bool = False
    episode_length: int = 20
    graph_max_neighbors: int = 6
    graph_distance_factor: float = 2.0
    radio: RadioConfig = field(default_factory=RadioConfig)

    def validate(self):
        if self.layout not in ("hex", "random"):
            raise ConfigError(f"layout must be hex or random, got {self.layout!r}")
        if self.layout == "hex" and self.n_sites not in radio.HEX_SITE_COUNTS:
            raise ConfigError(
                f"hex layout supports {radio.HEX_SITE_COUNTS} sites, got {self.n_sites}")
        if self.scenario not in ("tilt", "joint"):
            raise ConfigError(f"scenario must be tilt or joint, got {self.scenario!r}")
        if self.reward_scope not in ("global", "local"):
            raise ConfigError(f"reward_scope must be global or local")
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError(f"w must be in [0, 1], got {self.w}")
        if self.split_agents and self.scenario != "joint":
            raise ConfigError("split_agents requires the joint scenario")
        if self.split_agents and self.reward_scope != "global":
            raise ConfigError("split_agents requires the global reward")
        if not (0 < self.isd_range[0] <= self.isd_range[1]):
            raise ConfigError(f"bad isd_range {self.isd_range}")
        if self.episode_length < 1 or self.n_users < 1 or self.n_sites < 1:
            raise ConfigError("episode_length, n_users, n_sites must be positive")
        return self

    @property
    def actions_per_agent(self):
        if self.scenario == "tilt" or self.split_agents:
            return len(TILT_DELTAS_DEG)
        return len(TILT_DELTAS_DEG) * len(POWER_DELTAS_W)

    @property
    def observation_dim(self):
        return SPLIT_OBSERVATION_DIM if self.split_agents else OBSERVATION_DIM


def norm_affine(x, lo, hi):
    """Affine map [lo, hi] -> [-1, 1], clamped."""
    return np.clip(2.0 * (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) - 1.0,
                   -1.0, 1.0)


def norm_sinr(x, cfg):
    return norm_affine(x, cfg.sinr_floor_db, cfg.sinr_ceil_db)


def norm_tilt(x):
    return norm_affine(x, *radio.TILT_RANGE_DEG)


def norm_power(x):
    return norm_affine(x, *radio.POWER_RANGE_W)


def build_neighbor_graph(deployment, link, attachment, max_neighbors=6,
                         distance_factor=2.0):
    """Connect each cell to its strongest interference couplers.

    coupling(i, j) is the mean, over users served by cell i, of the dB gap
    between cell j's RSRP and the serving RSRP. Cell i proposes edges to
    its `max_neighbors` strongest couplers whose sites are within
    `distance_factor` times the deployment spacing; the edge set is the
    union of all proposals.
    """
    n = deployment.n_cells
    rsrp = link.rsrp_dbm
    serving = rsrp[attachment, np.arange(rsrp.shape[1])]
    coupling = np.full((n, n), -np.inf)
    for i in range(n):
        mask = attachment == i
        if not mask.any():
            continue
        coupling[i] = np.mean(rsrp[:, mask] - serving[mask], axis=1)
        coupling[i, i] = -np.inf
    cell_xy = deployment.cell_positions
    site_dist = np.linalg.norm(cell_xy[:, None] - cell_xy[None, :], axis=2)
    d_max = distance_factor * deployment.intersite_distance
    edges = set()
    for i in range(n):
        allowed = [j for j in range(n)
                   if j != i and site_dist[i, j] <= d_max
                   and np.isfinite(coupling[i, j])]
        allowed.sort(key=lambda j: (-coupling[i, j], j))
        for j in allowed[:max_neighbors]:
            edges.add((min(i, j), max(i, j)))
    return NetworkGraph(n, sorted(edges), coupling_db=coupling)


def split_graph(graph):
    """Two nodes per cell (tilt then power): partners are adjacent and each
    inherits every neighbor pair of its cell."""
    edges = [(2 * i, 2 * i + 1) for i in range(graph.n_nodes)]
    for i, j in graph.edges:
        edges.extend([(2 * i, 2 * j), (2 * i, 2 * j + 1),
                      (2 * i + 1, 2 * j), (2 * i + 1, 2 * j + 1)])
    return NetworkGraph(2 * graph.n_nodes, edges)


def split_observations(obs):
    """Duplicate per-cell features and append a one-hot parameter tag
    ((1,0) tilt node, (0,1) power node)."""
    n = obs.shape[0]
    out = np.zeros((2 * n, obs.shape[1] + 2))
    out[0::2, :-2] = obs
    out[1::2, :-2] = obs
    out[0::2, -2] = 1.0
    out[1::2, -1] = 1.0
    return out


def split_agents_per_parameter(obs, graph, scenario):
    """Per-parameter agent split for the joint scenario."""
    if scenario != "joint":
        raise InvalidStateError("agent splitting is only defined for the joint scenario")
    return split_observations(obs), split_graph(graph)


# --- reward functions ------------------------------------------------------

def reward_global_tilt(global_sinr_db, cfg):
    return float(norm_sinr(global_sinr_db, cfg))


def reward_local_tilt(local_sinr_db, cell, graph, cfg):
    """Own normalized cell SINR blended with the neighbor average; the
    two-term sum is halved so the reward stays in [-1, 1]."""
    own = float(norm_sinr(local_sinr_db[cell], cfg))
    neigh = graph.neighbors[cell]
    if not neigh:
        return own
    neigh_mean = float(np.mean(norm_sinr(local_sinr_db[list(neigh)], cfg)))
    return 0.5 * (own + neigh_mean)


def reward_global_joint(global_sinr_db, powers_w, w, cfg):
    return float((1.0 - w) * norm_sinr(global_sinr_db, cfg)
                 - w * norm_power(np.mean(powers_w)))


def reward_local_joint(local_sinr_db, powers_w, cell, graph, w, cfg):
    def term(c):
        return ((1.0 - w) * float(norm_sinr(local_sinr_db[c], cfg))
                - w * float(norm_power(powers_w[c])))

    own = term(cell)
    neigh = graph.neighbors[cell]
    if not neigh:
        return own
    return 0.5 * (own + float(np.mean([term(j) for j in neigh])))


@dataclass
class EnvState:
    deployment: radio.Deployment
    users: radio.UserPopulation
    link: radio.LinkBudget
    graph: NetworkGraph            # cell-level interference graph
    user_sinr_db: np.ndarray
    local_sinr_db: np.ndarray
    map_center: np.ndarray
    map_half_extent: float
    episode: int
    step_index: int = 0

    @property
    def global_sinr_db(self):
        return radio.global_sinr_db(self.user_sinr_db)

    @property
    def mean_power_w(self):
        return float(np.mean(self.deployment.powers()))


class AntennaEnv:
    """Episodic antenna-tuning environment; deterministic per (config, seed)."""

    def __init__(self, config, seed=0):
        self.config = config.validate()
        self.seed = int(seed)
        self.state = None
        self._episode = -1

    @property
    def n_agents(self):
        cells = self.config.n_sites * len(radio.SECTOR_AZIMUTHS_DEG)
        return 2 * cells if self.config.split_agents else cells

    def reset(self):
        """Sample a fresh deployment, users and random starting tilts."""
        self._episode += 1
        cfg = self.config
        rng = np.random.default_rng([self.seed, self._episode])
        isd = float(rng.uniform(*cfg.isd_range))
        if cfg.layout == "hex":
            deployment = radio.generate_hexagonal_deployment(
                cfg.n_sites, isd, antenna_height_m=cfg.radio.antenna_height_m)
        else:
            area = (isd * math.sqrt(4.0 * cfg.n_sites)) ** 2
            deployment = radio.generate_random_deployment(
                cfg.n_sites, isd, area, rng,
                antenna_height_m=cfg.radio.antenna_height_m)
        tilts = np.round(rng.uniform(*radio.TILT_RANGE_DEG, size=deployment.n_cells))
        if cfg.scenario == "tilt":
            powers = np.full(deployment.n_cells, FIXED_TILT_SCENARIO_POWER_W)
        else:
            levels = np.arange(radio.POWER_RANGE_W[0], radio.POWER_RANGE_W[1] + 1, 5.0)
            powers = rng.choice(levels, size=deployment.n_cells)
        for cell, tilt, power in zip(deployment.cells, tilts, powers):
            cell.tilt_deg = float(tilt)
            cell.power_w = float(power)

        lo = deployment.sites.min(axis=0)
        hi = deployment.sites.max(axis=0)
        center = (lo + hi) / 2.0
        half = float(np.max((hi - lo) / 2.0) + isd / 2.0)
        positions = rng.uniform(center - half, center + half,
                                size=(cfg.n_users, 2))

        link = radio.LinkBudget(deployment, positions, cfg.radio,
                                shadowing_rng=rng)
        attachment = radio.attach_users(link)
        users = radio.UserPopulation(positions, attachment)
        sinr = radio.per_user_sinr_db(link, attachment)
        graph = build_neighbor_graph(deployment, link, attachment,
                                     cfg.graph_max_neighbors,
                                     cfg.graph_distance_factor)
        self.state = EnvState(
            deployment=deployment, users=users, link=link, graph=graph,
            user_sinr_db=sinr,
            local_sinr_db=radio.local_sinr_db(
                sinr, attachment, deployment.n_cells, cfg.radio.sinr_floor_db),
            map_center=center, map_half_extent=half, episode=self._episode,
        )
        return self.observations(), self.agent_graph()

    def observations(self):
        """Per-agent normalized feature matrix."""
        st = self._require_state()
        cfg = self.config
        dep = st.deployment
        n = dep.n_cells
        obs = np.zeros((n, OBSERVATION_DIM))
        cell_xy = dep.cell_positions
        obs[:, 0:2] = (cell_xy - st.map_center) / st.map_half_extent
        az = np.radians([c.azimuth_deg for c in dep.cells])
        obs[:, 2] = np.cos(az)
        obs[:, 3] = np.sin(az)
        floor = cfg.radio.sinr_floor_db
        pct = np.full((n, 3), floor)
        for c in range(n):
            mask = st.users.attachment == c
            if mask.any():
                pct[c] = np.percentile(st.user_sinr_db[mask], [10.0, 50.0, 90.0])
        obs[:, 4:7] = norm_sinr(pct, cfg.radio)
        obs[:, 7] = norm_tilt(dep.tilts())
        obs[:, 8] = norm_power(dep.powers())
        if cfg.split_agents:
            return split_observations(obs)
        return obs

    def agent_graph(self):
        st = self._require_state()
        return split_graph(st.graph) if self.config.split_agents else st.graph

    def decode_actions(self, actions):
        """Map per-agent discrete actions to per-cell (tilt, power) deltas."""
        cfg = self.config
        st = self._require_state()
        actions = np.asarray(actions, dtype=np.intp)
        n_cells = st.deployment.n_cells
        expected = 2 * n_cells if cfg.split_agents else n_cells
        if actions.shape != (expected,):
            raise ValueError(f"expected {expected} agent actions, got {actions.shape}")
        if actions.min() < 0 or actions.max() >= cfg.actions_per_agent:
            raise ValueError("action index out of range")
        if cfg.split_agents:
            tilt_d = np.asarray(TILT_DELTAS_DEG)[actions[0::2]]
            power_d = np.asarray(POWER_DELTAS_W)[actions[1::2]]
        elif cfg.scenario == "joint":
            tilt_d = np.asarray(TILT_DELTAS_DEG)[actions // 3]
            power_d = np.asarray(POWER_DELTAS_W)[actions % 3]
        else:
            tilt_d = np.asarray(TILT_DELTAS_DEG)[actions]
            power_d = np.zeros(n_cells)
        return tilt_d, power_d

    def step(self, actions):
        """Apply deltas (clipped to the tilt/power ranges), refresh the
        radio state and return (obs, reward, done, info)."""
        st = self._require_state()
        cfg = self.config
        tilt_d, power_d = self.decode_actions(actions)
        dep = st.deployment
        tilts = np.clip(dep.tilts() + tilt_d, *radio.TILT_RANGE_DEG)
        powers = np.clip(dep.powers() + power_d, *radio.POWER_RANGE_W)
        for cell, tilt, power in zip(dep.cells, tilts, powers):
            cell.tilt_deg = float(tilt)
            cell.power_w = float(power)
        st.link.refresh()
        attachment = radio.attach_users(st.link)
        st.users.attachment = attachment
        st.user_sinr_db = radio.per_user_sinr_db(st.link, attachment)
        st.local_sinr_db = radio.local_sinr_db(
            st.user_sinr_db, attachment, dep.n_cells, cfg.radio.sinr_floor_db)
        st.step_index += 1
        reward = self.compute_reward()
        done = st.step_index >= cfg.episode_length
        info = {
            "global_sinr_db": st.global_sinr_db,
            "mean_power_w": st.mean_power_w,
            "step": st.step_index,
        }
        return self.observations(), reward, done, info

    def compute_reward(self):
        """Reward of the current state under the configured RewardSpec."""
        st = self._require_state()
        cfg = self.config
        rc = cfg.radio
        powers = st.deployment.powers()
        if cfg.reward_scope == "global":
            if cfg.scenario == "tilt":
                return reward_global_tilt(st.global_sinr_db, rc)
            return reward_global_joint(st.global_sinr_db, powers, cfg.w, rc)
        if cfg.scenario == "tilt":
            return np.array([
                reward_local_tilt(st.local_sinr_db, c, st.graph, rc)
                for c in range(st.deployment.n_cells)])
        return np.array([
            reward_local_joint(st.local_sinr_db, powers, c, st.graph, cfg.w, rc)
            for c in range(st.deployment.n_cells)])

    def _require_state(self):
        if self.state is None:
            raise InvalidStateError("reset() must be called before use")
        return self.state
