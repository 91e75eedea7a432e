"""Graph Q-network: shared per-node encoder, two graph layers, shared
decoder emitting one Q-vector per agent. The joint value is the plain sum
of the per-agent values, so the joint greedy action is the vector of
per-agent argmaxes."""

import numpy as np

from ..graphs import disjoint_union
from ..nn import (
    Adam,
    Dense,
    GraphAttention,
    GraphConv,
    NumericsError,
    ParameterSet,
    Tensor,
    segment_sum,
    take_per_row,
    tsum,
)
from .replay import Experience, PrioritizedReplay

HIDDEN_UNITS = 32
GAT_HEADS = 4


class GQNModel:
    """Per-node Q-network over a graph; parameter count is independent of
    the number of nodes."""

    def __init__(self, obs_dim, n_actions, gnn="gcn", hidden=HIDDEN_UNITS,
                 heads=GAT_HEADS, rng=0):
        if gnn not in ("gcn", "gat"):
            raise ValueError(f"gnn must be gcn or gat, got {gnn!r}")
        rng = np.random.default_rng(rng)
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.gnn = gnn
        self.hidden = hidden
        self.heads = heads
        self.params = ParameterSet()
        self.encoder = Dense(self.params, "encoder", obs_dim, hidden, rng)
        if gnn == "gcn":
            self.gnn_layers = [
                GraphConv(self.params, "gnn0", hidden, hidden, rng),
                GraphConv(self.params, "gnn1", hidden, hidden, rng),
            ]
            gnn_out = hidden
        else:
            self.gnn_layers = [
                GraphAttention(self.params, "gnn0", hidden, hidden, heads, rng),
                GraphAttention(self.params, "gnn1", hidden * heads, hidden, heads, rng),
            ]
            gnn_out = hidden * heads
        self.decoder = [
            Dense(self.params, "dec0", gnn_out, hidden, rng),
            Dense(self.params, "dec1", hidden, hidden, rng),
            Dense(self.params, "head", hidden, n_actions, rng, activation="identity"),
        ]

    def forward(self, obs, graph):
        """Differentiable forward pass; obs is (n_nodes, obs_dim)."""
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[1] != self.obs_dim:
            raise ValueError(f"expected (*, {self.obs_dim}) observations, "
                             f"got {obs.shape}")
        if obs.shape[0] != graph.n_nodes:
            raise ValueError("observation and graph node counts differ")
        h = self.encoder(Tensor(obs))
        for layer in self.gnn_layers:
            h = layer(h, graph)
        for layer in self.decoder:
            h = layer(h)
        return h

    def q_values(self, obs, graph):
        """Per-agent Q-vectors as a plain array."""
        return self.forward(obs, graph).data

    def architecture(self):
        return {
            "model": "gqn",
            "gnn": self.gnn,
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "hidden": self.hidden,
            "heads": self.heads,
        }

    @classmethod
    def from_architecture(cls, arch, rng=0):
        if arch.get("model") != "gqn":
            raise ValueError(f"not a gqn architecture: {arch}")
        return cls(arch["obs_dim"], arch["n_actions"], gnn=arch["gnn"],
                   hidden=arch["hidden"], heads=arch["heads"], rng=rng)

    def clone(self):
        twin = GQNModel.from_architecture(self.architecture())
        twin.params.copy_from(self.params)
        return twin


def select_actions(q_values, epsilon, rng):
    """Epsilon-greedy joint action: with probability epsilon every agent
    acts uniformly at random, otherwise each takes its own argmax (ties to
    the lowest index)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    n, a = q_values.shape
    if rng.uniform() < epsilon:
        return rng.integers(0, a, size=n)
    return np.argmax(q_values, axis=1)


def joint_value(q_values, actions):
    """Sum of the per-agent values of a joint action."""
    return float(q_values[np.arange(len(actions)), actions].sum())


def compute_targets(batch, online_model, target_model, gamma):
    """Per-sample regression targets.

    Double-Q form: greedy actions come from the online model on the next
    state, their values from the target model. With gamma == 0 the targets
    are exactly the stored rewards.
    """
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    if gamma == 0.0:
        return rewards
    union, offsets = disjoint_union([e.next_graph for e in batch])
    obs = np.vstack([e.next_obs for e in batch])
    greedy = np.argmax(online_model.q_values(obs, union), axis=1)
    q_target = target_model.q_values(obs, union)
    chosen = q_target[np.arange(len(greedy)), greedy]
    sums = np.add.reduceat(chosen, offsets[:-1])
    return rewards + gamma * sums


def train_step(replay, online_model, target_model, optimizer, batch_size,
               gamma, beta, rng, per_epsilon=1e-6):
    """One prioritized, importance-weighted TD regression step.

    Returns the scalar loss, or None when the buffer is still smaller than
    the batch (reported as a no-op)."""
    if len(replay) < batch_size:
        return None
    idx, batch, weights = replay.sample(batch_size, beta, rng)
    targets = compute_targets(batch, online_model, target_model, gamma)
    union, offsets = disjoint_union([e.graph for e in batch])
    obs = np.vstack([e.obs for e in batch])
    actions = np.concatenate([e.actions for e in batch])
    sample_of_node = np.repeat(np.arange(len(batch)),
                               [e.graph.n_nodes for e in batch])
    q = online_model.forward(obs, union)
    chosen = take_per_row(q, actions)
    q_sum = segment_sum(chosen, sample_of_node, len(batch))
    diff = q_sum - Tensor(targets)
    loss = tsum(Tensor(weights) * diff * diff) * (1.0 / len(batch))
    if not np.isfinite(loss.data):
        raise NumericsError("non-finite TD loss")
    online_model.params.zero_grad()
    loss.backward()
    optimizer.step()
    replay.update_priorities(idx, np.abs(diff.data) + per_epsilon)
    return float(loss.data)


def update_target(online_model, target_model):
    """Exact copy of the online parameters into the target network."""
    target_model.params.copy_from(online_model.params)


class GQNAlgorithm:
    """Joint-transition learner: one replay entry per environment step."""

    def __init__(self, model, training_cfg):
        self.model = model
        self.target = model.clone()
        self.cfg = training_cfg
        self.optimizer = Adam(model.params, lr=training_cfg.learning_rate)
        self.replay = PrioritizedReplay(training_cfg.replay_capacity,
                                        alpha=training_cfg.per_alpha,
                                        epsilon=training_cfg.per_epsilon)
        self._train_steps = 0

    def act(self, obs, graph, epsilon, rng):
        if rng.uniform() < epsilon:
            return rng.integers(0, self.model.n_actions, size=graph.n_nodes)
        return np.argmax(self.model.q_values(obs, graph), axis=1)

    def observe(self, obs, graph, actions, reward, next_obs, next_graph):
        self.replay.add(Experience(obs, graph, np.asarray(actions),
                                   float(np.mean(reward)), next_obs, next_graph))

    def learn(self, rng, beta):
        loss = train_step(self.replay, self.model, self.target, self.optimizer,
                          self.cfg.batch_size, self.cfg.gamma, beta, rng,
                          per_epsilon=self.cfg.per_epsilon)
        if loss is not None:
            self._train_steps += 1
            if self._train_steps % self.cfg.target_update_period == 0:
                update_target(self.model, self.target)
        return loss

    def checkpoint_payload(self):
        return self.model.architecture(), self.model.params
