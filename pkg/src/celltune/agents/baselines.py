"""Comparison policies: per-cell DQN, neighbor-stacking N-DQN, per-cell
graph-attention GAQ, and the geometric tilt heuristic.

The learners share one weight set across all cells and train on the local
reward with per-cell TD targets; only their input construction differs.
"""

import math

import numpy as np

from .. import radio
from ..graphs import NetworkGraph, disjoint_union
from ..nn import (
    Adam,
    Dense,
    GraphAttention,
    NumericsError,
    ParameterSet,
    Tensor,
    gather_rows,
    take_per_row,
    tsum,
)
from .replay import PrioritizedReplay

NDQN_MAX_NEIGHBORS = 5
GAQ_HEADS = 6
DEFAULT_HEURISTIC_TILT_DEG = 6.0


class LocalAgentModel:
    """Shared per-cell Q-network: FC(64), FC(32), then the action head."""

    def __init__(self, obs_dim, n_actions, rng=0, kind="dqn"):
        rng = np.random.default_rng(rng)
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.kind = kind
        self.params = ParameterSet()
        self.layers = [
            Dense(self.params, "fc0", obs_dim, 64, rng),
            Dense(self.params, "fc1", 64, 32, rng),
            Dense(self.params, "head", 32, n_actions, rng, activation="identity"),
        ]

    def forward(self, x):
        h = Tensor(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            h = layer(h)
        return h

    def q_values(self, x):
        return self.forward(x).data

    def architecture(self):
        return {"model": self.kind, "obs_dim": self.obs_dim,
                "n_actions": self.n_actions}

    @classmethod
    def from_architecture(cls, arch, rng=0):
        return cls(arch["obs_dim"], arch["n_actions"], rng=rng,
                   kind=arch["model"])

    def clone(self):
        twin = LocalAgentModel.from_architecture(self.architecture())
        twin.params.copy_from(self.params)
        return twin


class GAQModel:
    """Per-cell Q-network over the cell's ego-network: two 6-head graph
    attention layers, then a shared dense stack on the center embedding."""

    def __init__(self, obs_dim, n_actions, rng=0, hidden=32, heads=GAQ_HEADS):
        rng = np.random.default_rng(rng)
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hidden = hidden
        self.heads = heads
        self.params = ParameterSet()
        self.gat_layers = [
            GraphAttention(self.params, "gat0", obs_dim, hidden, heads, rng),
            GraphAttention(self.params, "gat1", hidden * heads, hidden, heads, rng),
        ]
        self.decoder = [
            Dense(self.params, "dec0", hidden * heads, hidden, rng),
            Dense(self.params, "dec1", hidden, hidden, rng),
            Dense(self.params, "head", hidden, n_actions, rng, activation="identity"),
        ]

    def forward(self, obs, graph, centers):
        """Q-vectors for the `centers` nodes of a (batched) ego-graph."""
        h = Tensor(np.asarray(obs, dtype=np.float64))
        for layer in self.gat_layers:
            h = layer(h, graph)
        h = gather_rows(h, np.asarray(centers, dtype=np.intp))
        for layer in self.decoder:
            h = layer(h)
        return h

    def q_values(self, obs, graph, centers):
        return self.forward(obs, graph, centers).data

    def architecture(self):
        return {"model": "gaq", "obs_dim": self.obs_dim,
                "n_actions": self.n_actions, "hidden": self.hidden,
                "heads": self.heads}

    @classmethod
    def from_architecture(cls, arch, rng=0):
        return cls(arch["obs_dim"], arch["n_actions"], rng=rng,
                   hidden=arch["hidden"], heads=arch["heads"])

    def clone(self):
        twin = GAQModel.from_architecture(self.architecture())
        twin.params.copy_from(self.params)
        return twin


def neighbor_order(graph, cell):
    """Graph neighbors of a cell by descending interference coupling."""
    neigh = list(graph.neighbors[cell])
    if graph.coupling_db is None:
        return neigh
    coup = graph.coupling_db[cell]
    return sorted(neigh, key=lambda j: (-coup[j], j))


def ndqn_observation(cell, obs, graph, max_neighbors=NDQN_MAX_NEIGHBORS):
    """Own features plus the strongest-coupled neighbor observations,
    zero padded to a fixed width."""
    d = obs.shape[1]
    out = np.zeros((1 + max_neighbors) * d)
    out[:d] = obs[cell]
    for slot, j in enumerate(neighbor_order(graph, cell)[:max_neighbors]):
        out[(1 + slot) * d:(2 + slot) * d] = obs[j]
    return out


def ndqn_observation_matrix(obs, graph, max_neighbors=NDQN_MAX_NEIGHBORS):
    return np.stack([ndqn_observation(c, obs, graph, max_neighbors)
                     for c in range(graph.n_nodes)])


def ego_network(graph, cell):
    """The cell, its neighbors, and the graph edges among them; the center
    is node 0 of the returned graph."""
    nodes = [cell] + list(graph.neighbors[cell])
    index = {n: k for k, n in enumerate(nodes)}
    edge_set = {(min(i, j), max(i, j)) for i, j in graph.edges}
    edges = []
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if (min(nodes[a], nodes[b]), max(nodes[a], nodes[b])) in edge_set:
                edges.append((a, b))
    return NetworkGraph(len(nodes), edges), nodes


def heuristic_tilt_deg(cell, deployment,
                       default_tilt=DEFAULT_HEURISTIC_TILT_DEG):
    """Tilt pointing the beam at half the distance to the nearest other
    site; falls back to a default tilt for single-site deployments."""
    sites = np.asarray(deployment.sites)
    own = np.asarray(cell.site_xy)
    dists = np.linalg.norm(sites - own, axis=1)
    dists = dists[dists > 1e-9]
    if dists.size == 0:
        return float(default_tilt)
    target = math.degrees(math.atan(cell.height_m / (dists.min() / 2.0)))
    lo, hi = radio.TILT_RANGE_DEG
    return float(min(max(round(target), lo), hi))


class HeuristicAlgorithm:
    """Non-learning policy moving every tilt one degree per step toward its
    geometric target; power is left untouched in the joint scenario."""

    def __init__(self, env):
        self.env = env

    def act(self, obs, graph, epsilon=0.0, rng=None):
        dep = self.env.state.deployment
        tilts = dep.tilts()
        actions = np.empty(dep.n_cells, dtype=np.intp)
        for c, cell in enumerate(dep.cells):
            target = heuristic_tilt_deg(cell, dep)
            delta = np.sign(target - tilts[c])
            actions[c] = int(delta) + 1      # index into TILT_DELTAS_DEG
        if self.env.config.scenario == "joint" and not self.env.config.split_agents:
            actions = actions * 3 + 1        # zero power delta
        return actions

    def observe(self, *args):
        pass

    def learn(self, rng, beta):
        return None

    def policy(self):
        def act(obs, graph):
            return self.act(obs, graph)
        return act


class PerCellAlgorithm:
    """DQN / N-DQN / GAQ trained per cell with shared weights and the local
    reward; one replay entry per cell per environment step."""

    def __init__(self, model, training_cfg, kind):
        if kind not in ("dqn", "ndqn", "gaq"):
            raise ValueError(f"unknown per-cell learner {kind!r}")
        self.kind = kind
        self.model = model
        self.target = model.clone()
        self.cfg = training_cfg
        self.optimizer = Adam(model.params, lr=training_cfg.learning_rate)
        self.replay = PrioritizedReplay(training_cfg.replay_capacity,
                                        alpha=training_cfg.per_alpha,
                                        epsilon=training_cfg.per_epsilon)
        self._train_steps = 0
        self._ego_cache = (None, None)

    # --- input construction ---

    def _egos(self, graph):
        cached_graph, cached = self._ego_cache
        if cached_graph is graph:
            return cached
        egos = [ego_network(graph, c) for c in range(graph.n_nodes)]
        self._ego_cache = (graph, egos)
        return egos

    def _inputs(self, obs, graph):
        if self.kind == "dqn":
            return obs
        if self.kind == "ndqn":
            return ndqn_observation_matrix(obs, graph)
        return obs  # gaq consumes raw features plus ego graphs

    def _all_q(self, obs, graph):
        if self.kind == "gaq":
            egos = self._egos(graph)
            union, offsets = disjoint_union([g for g, _ in egos])
            feats = np.vstack([obs[nodes] for _, nodes in egos])
            return self.model.q_values(feats, union, offsets[:-1])
        return self.model.q_values(self._inputs(obs, graph))

    # --- algorithm interface ---

    def act(self, obs, graph, epsilon, rng):
        if rng.uniform() < epsilon:
            return rng.integers(0, self.model.n_actions, size=graph.n_nodes)
        return np.argmax(self._all_q(obs, graph), axis=1)

    def observe(self, obs, graph, actions, reward, next_obs, next_graph):
        rewards = np.broadcast_to(np.asarray(reward, dtype=np.float64),
                                  (graph.n_nodes,))
        if self.kind == "gaq":
            egos = self._egos(graph)
            for c in range(graph.n_nodes):
                ego_graph, nodes = egos[c]
                self.replay.add((ego_graph, obs[nodes], int(actions[c]),
                                 float(rewards[c]), next_obs[nodes]))
            return
        inputs = self._inputs(obs, graph)
        next_inputs = self._inputs(next_obs, next_graph)
        for c in range(graph.n_nodes):
            self.replay.add((inputs[c], int(actions[c]), float(rewards[c]),
                             next_inputs[c]))

    def _targets(self, batch):
        if self.kind == "gaq":
            rewards = np.array([item[3] for item in batch])
        else:
            rewards = np.array([item[2] for item in batch])
        if self.cfg.gamma == 0.0:
            return rewards
        if self.kind == "gaq":
            union, offsets = disjoint_union([item[0] for item in batch])
            feats = np.vstack([item[4] for item in batch])
            greedy = np.argmax(self.model.q_values(feats, union, offsets[:-1]),
                               axis=1)
            q_t = self.target.q_values(feats, union, offsets[:-1])
        else:
            nxt = np.stack([item[3] for item in batch])
            greedy = np.argmax(self.model.q_values(nxt), axis=1)
            q_t = self.target.q_values(nxt)
        chosen = q_t[np.arange(len(batch)), greedy]
        return rewards + self.cfg.gamma * chosen

    def learn(self, rng, beta):
        if len(self.replay) < self.cfg.batch_size:
            return None
        idx, batch, weights = self.replay.sample(self.cfg.batch_size, beta, rng)
        targets = self._targets(batch)
        if self.kind == "gaq":
            union, offsets = disjoint_union([item[0] for item in batch])
            feats = np.vstack([item[1] for item in batch])
            actions = np.array([item[2] for item in batch])
            q = self.model.forward(feats, union, offsets[:-1])
        else:
            x = np.stack([item[0] for item in batch])
            actions = np.array([item[1] for item in batch])
            q = self.model.forward(x)
        chosen = take_per_row(q, actions)
        diff = chosen - Tensor(targets)
        loss = tsum(Tensor(weights) * diff * diff) * (1.0 / len(batch))
        if not np.isfinite(loss.data):
            raise NumericsError("non-finite TD loss")
        self.model.params.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.replay.update_priorities(idx, np.abs(diff.data) + self.cfg.per_epsilon)
        self._train_steps += 1
        if self._train_steps % self.cfg.target_update_period == 0:
            self.target.params.copy_from(self.model.params)
        return float(loss.data)

    def checkpoint_payload(self):
        return self.model.architecture(), self.model.params
