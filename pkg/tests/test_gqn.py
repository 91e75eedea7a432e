"""Graph Q-network tests: decomposed action selection against exhaustive
enumeration, target computation, training-step mechanics, determinism."""

import itertools

import numpy as np
import pytest

from celltune.agents import (
    Experience,
    GQNAlgorithm,
    GQNModel,
    PrioritizedReplay,
    TrainingConfig,
    compute_targets,
    joint_value,
    run_training,
    select_actions,
    train_step,
    update_target,
)
from celltune.env import AntennaEnv, ScenarioConfig
from celltune.graphs import NetworkGraph
from celltune.nn import Adam, NumericsError, Tensor, tsum


def random_graph(n, rng, p=0.5):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.uniform() < p]
    return NetworkGraph(n, edges)


def make_batch(rng, n_samples, n_nodes, obs_dim=9, n_actions=3):
    batch = []
    for _ in range(n_samples):
        g = random_graph(n_nodes, rng)
        batch.append(Experience(
            obs=rng.normal(size=(n_nodes, obs_dim)),
            graph=g,
            actions=rng.integers(0, n_actions, size=n_nodes),
            reward=float(rng.normal()),
            next_obs=rng.normal(size=(n_nodes, obs_dim)),
            next_graph=g,
        ))
    return batch


def exhaustive_joint_argmax(q):
    """Brute-force argmax of the summed per-agent values over the full
    joint action space."""
    n, a = q.shape
    best, best_val = None, -np.inf
    for joint in itertools.product(range(a), repeat=n):
        val = sum(q[i, joint[i]] for i in range(n))
        if val > best_val:
            best, best_val = joint, val
    return np.array(best), best_val


def test_forward_single_node_matches_pipeline():
    model = GQNModel(obs_dim=9, n_actions=3, gnn="gcn", rng=5)
    obs = np.random.default_rng(0).normal(size=(1, 9))
    graph = NetworkGraph(1, [])
    q = model.q_values(obs, graph)
    h = model.encoder(Tensor(obs))
    for layer in model.gnn_layers:
        h = layer(h, graph)
    for layer in model.decoder:
        h = layer(h)
    np.testing.assert_array_equal(q, h.data)


@pytest.mark.parametrize("gnn", ["gcn", "gat"])
def test_full_forward_permutation_equivariance(gnn):
    rng = np.random.default_rng(3)
    model = GQNModel(obs_dim=9, n_actions=3, gnn=gnn, rng=11)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        graph = random_graph(n, rng)
        x = rng.normal(size=(n, 9))
        perm = rng.permutation(n)
        px = np.empty_like(x)
        px[perm] = x
        out = model.q_values(x, graph)
        out_p = model.q_values(px, graph.permuted(perm))
        np.testing.assert_allclose(out_p[perm], out, atol=1e-10)


def test_parameter_count_independent_of_agent_count():
    model = GQNModel(obs_dim=9, n_actions=3, rng=2)
    n_params = model.params.n_values()
    rng = np.random.default_rng(0)
    for n in (21, 57, 111):
        q = model.q_values(rng.normal(size=(n, 9)), random_graph(n, rng, p=0.1))
        assert q.shape == (n, 3)
        assert np.all(np.isfinite(q))
        assert model.params.n_values() == n_params


def test_forward_rejects_node_count_mismatch():
    model = GQNModel(obs_dim=9, n_actions=3, rng=2)
    with pytest.raises(ValueError):
        model.q_values(np.zeros((4, 9)), NetworkGraph(5, []))


def test_select_actions_tie_breaks_low_index():
    q = np.array([[1.0, 5.0, 2.0], [3.0, 3.0, 0.0]])
    actions = select_actions(q, epsilon=0.0, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(actions, [1, 0])


def test_per_agent_argmax_equals_exhaustive_joint_argmax():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        a = int(rng.choice([3, 9]))
        q = rng.normal(size=(n, a))
        greedy = select_actions(q, 0.0, rng)
        brute, brute_val = exhaustive_joint_argmax(q)
        np.testing.assert_array_equal(greedy, brute)
        assert joint_value(q, greedy) == pytest.approx(brute_val, abs=1e-12)


def test_epsilon_one_gives_uniform_marginals():
    rng = np.random.default_rng(29)
    q = rng.normal(size=(3, 3))
    counts = np.zeros((3, 3))
    draws = 10_000
    for _ in range(draws):
        a = select_actions(q, 1.0, rng)
        counts[np.arange(3), a] += 1
    # chi-square against uniform; 99.9th percentile of chi2(2) is 13.8
    expected = draws / 3.0
    chi2 = ((counts - expected) ** 2 / expected).sum(axis=1)
    assert np.all(chi2 < 13.8)


def test_epsilon_validated():
    with pytest.raises(ValueError):
        select_actions(np.zeros((1, 3)), 1.5, np.random.default_rng(0))


def test_targets_gamma_zero_equal_rewards_bitwise():
    rng = np.random.default_rng(4)
    online = GQNModel(9, 3, rng=1)
    target = online.clone()
    batch = make_batch(rng, 16, 3)
    y = compute_targets(batch, online, target, gamma=0.0)
    rewards = np.array([e.reward for e in batch])
    assert y.tobytes() == rewards.tobytes()


def test_targets_clone_case_reduces_to_max_decomposition():
    rng = np.random.default_rng(9)
    online = GQNModel(9, 3, rng=3)
    target = online.clone()
    batch = make_batch(rng, 6, 3)
    y = compute_targets(batch, online, target, gamma=0.9)
    for e, got in zip(batch, y):
        q = online.q_values(e.next_obs, e.next_graph)
        _, brute_val = exhaustive_joint_argmax(q)
        assert got == pytest.approx(e.reward + 0.9 * brute_val, rel=1e-12)


def test_targets_double_q_uses_online_argmax_target_value():
    rng = np.random.default_rng(10)
    online = GQNModel(9, 3, rng=5)
    target = GQNModel(9, 3, rng=6)   # deliberately different weights
    batch = make_batch(rng, 5, 2)
    y = compute_targets(batch, online, target, gamma=0.5)
    for e, got in zip(batch, y):
        q_on = online.q_values(e.next_obs, e.next_graph)
        q_tg = target.q_values(e.next_obs, e.next_graph)
        greedy = np.argmax(q_on, axis=1)
        val = q_tg[np.arange(len(greedy)), greedy].sum()
        assert got == pytest.approx(e.reward + 0.5 * val, rel=1e-12)


def _filled_replay(model, rng, n_entries=80, n_nodes=3):
    replay = PrioritizedReplay(200)
    for _ in range(n_entries):
        g = random_graph(n_nodes, rng)
        obs = rng.normal(size=(n_nodes, 9))
        actions = rng.integers(0, 3, size=n_nodes)
        replay.add(Experience(obs, g, actions, float(rng.normal()),
                              rng.normal(size=(n_nodes, 9)), g))
    return replay


def test_train_step_zero_td_leaves_parameters_unchanged():
    # zeroed head makes every prediction exactly 0; rewards of 0 then give
    # an exactly-zero TD error on every computation path
    rng = np.random.default_rng(8)
    model = GQNModel(9, 3, rng=7)
    model.params["head/W"].data[:] = 0.0
    model.params["head/b"].data[:] = 0.0
    target = model.clone()
    opt = Adam(model.params, lr=1e-2)
    replay = PrioritizedReplay(200)
    for _ in range(60):
        g = random_graph(3, rng)
        obs = rng.normal(size=(3, 9))
        replay.add(Experience(obs, g, rng.integers(0, 3, size=3), 0.0,
                              rng.normal(size=(3, 9)), g))
    before = model.params.state_dict()
    loss = train_step(replay, model, target, opt, batch_size=32, gamma=0.0,
                      beta=0.4, rng=rng)
    assert loss == 0.0
    for name, arr in model.params.state_dict().items():
        np.testing.assert_array_equal(arr, before[name])


def test_train_step_single_sample_loss_is_squared_td():
    rng = np.random.default_rng(12)
    model = GQNModel(9, 3, rng=9)
    target = model.clone()
    opt = Adam(model.params, lr=0.0)
    replay = PrioritizedReplay(10)
    g = random_graph(2, rng)
    obs = rng.normal(size=(2, 9))
    actions = np.array([1, 2])
    reward = 0.37
    replay.add(Experience(obs, g, actions, reward, obs, g))
    td = joint_value(model.q_values(obs, g), actions) - reward
    loss = train_step(replay, model, target, opt, batch_size=1, gamma=0.0,
                      beta=1.0, rng=rng)
    assert loss == pytest.approx(td ** 2, rel=1e-12)


def test_train_step_skips_when_buffer_small():
    rng = np.random.default_rng(1)
    model = GQNModel(9, 3, rng=0)
    replay = PrioritizedReplay(100)
    assert train_step(replay, model, model.clone(), Adam(model.params, 1e-3),
                      batch_size=64, gamma=0.0, beta=0.4, rng=rng) is None


def test_train_step_mixed_node_counts_in_one_batch():
    rng = np.random.default_rng(14)
    model = GQNModel(9, 3, rng=2)
    target = model.clone()
    opt = Adam(model.params, lr=1e-3)
    replay = PrioritizedReplay(100)
    for n in (2, 4, 2, 5, 3, 2, 4, 5):
        g = random_graph(n, rng)
        replay.add(Experience(rng.normal(size=(n, 9)), g,
                              rng.integers(0, 3, size=n), float(rng.normal()),
                              rng.normal(size=(n, 9)), g))
    loss = train_step(replay, model, target, opt, batch_size=8, gamma=0.0,
                      beta=0.4, rng=rng)
    assert np.isfinite(loss)


def test_train_step_priorities_track_td_error():
    rng = np.random.default_rng(15)
    model = GQNModel(9, 3, rng=4)
    replay = _filled_replay(model, rng, n_entries=40)
    idx_before = replay._priorities[:40].copy()
    train_step(replay, model, model.clone(), Adam(model.params, 0.0),
               batch_size=16, gamma=0.0, beta=0.4, rng=rng)
    assert not np.array_equal(replay._priorities[:40], idx_before)


def test_nan_reward_aborts_with_diagnostic():
    rng = np.random.default_rng(16)
    model = GQNModel(9, 3, rng=4)
    replay = PrioritizedReplay(10)
    g = random_graph(2, rng)
    replay.add(Experience(rng.normal(size=(2, 9)), g, np.array([0, 1]),
                          float("nan"), rng.normal(size=(2, 9)), g))
    with pytest.raises(NumericsError):
        train_step(replay, model, model.clone(), Adam(model.params, 1e-3),
                   batch_size=1, gamma=0.0, beta=0.4, rng=rng)


def test_update_target_copies_then_freezes():
    online = GQNModel(9, 3, rng=1)
    target = GQNModel(9, 3, rng=2)
    update_target(online, target)
    obs = np.random.default_rng(0).normal(size=(3, 9))
    g = NetworkGraph(3, [(0, 1)])
    np.testing.assert_array_equal(online.q_values(obs, g),
                                  target.q_values(obs, g))
    online.params["encoder/W"].data += 1.0
    assert not np.array_equal(online.q_values(obs, g), target.q_values(obs, g))


def test_gqn_loss_gradients_match_finite_differences():
    from test_nn import assert_grads_close, finite_difference_grads

    rng = np.random.default_rng(77)
    model = GQNModel(9, 3, gnn="gcn", rng=21)
    target = model.clone()
    replay = _filled_replay(model, rng, n_entries=8, n_nodes=3)
    idx, batch, weights = replay.sample(4, beta=0.5, rng=rng)
    targets = compute_targets(batch, model, target, gamma=0.0)

    def loss_value():
        from celltune.graphs import disjoint_union
        from celltune.nn import Tensor as T, segment_sum, take_per_row, tsum
        union, _ = disjoint_union([e.graph for e in batch])
        obs = np.vstack([e.obs for e in batch])
        actions = np.concatenate([e.actions for e in batch])
        seg = np.repeat(np.arange(len(batch)), [e.graph.n_nodes for e in batch])
        q = model.forward(obs, union)
        qs = segment_sum(take_per_row(q, actions), seg, len(batch))
        diff = qs - T(targets)
        return tsum(T(weights) * diff * diff) * (1.0 / len(batch))

    model.params.zero_grad()
    loss_value().backward()
    fd = finite_difference_grads(model.params, lambda: float(loss_value().data))
    assert_grads_close(model.params, fd)


def desk_env(seed, **overrides):
    cfg = dict(layout="hex", n_sites=1, n_users=60, scenario="tilt",
               isd_range=(400.0, 900.0))
    cfg.update(overrides)
    return AntennaEnv(ScenarioConfig(**cfg), seed=seed)


def test_run_training_zero_steps_returns_model_unchanged():
    env = desk_env(0)
    model = GQNModel(9, 3, rng=1)
    before = model.params.state_dict()
    algo = GQNAlgorithm(model, TrainingConfig(total_steps=0))
    rows = run_training(env, algo, TrainingConfig(total_steps=0), seed=0)
    assert rows == []
    for name, arr in model.params.state_dict().items():
        np.testing.assert_array_equal(arr, before[name])


def test_run_training_deterministic():
    def run():
        env = desk_env(5)
        model = GQNModel(9, 3, rng=3)
        cfg = TrainingConfig(total_steps=120, batch_size=16,
                             learning_rate=1e-2, replay_capacity=500)
        algo = GQNAlgorithm(model, cfg)
        rows = run_training(env, algo, cfg, seed=5)
        return rows, model.params.state_dict()

    rows_a, params_a = run()
    rows_b, params_b = run()
    assert rows_a == rows_b
    for name in params_a:
        assert params_a[name].tobytes() == params_b[name].tobytes()


def test_run_training_row_accounting():
    env = desk_env(2)
    model = GQNModel(9, 3, rng=3)
    cfg = TrainingConfig(total_steps=60, batch_size=8, replay_capacity=100)
    algo = GQNAlgorithm(model, cfg)
    rows = run_training(env, algo, cfg, seed=2)
    assert [r.episode for r in rows] == [1, 2, 3]
    assert [r.step for r in rows] == [20, 40, 60]
    assert rows[0].epsilon > rows[-1].epsilon
