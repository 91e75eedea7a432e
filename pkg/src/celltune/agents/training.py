"""Off-policy training loop shared by the joint learner and the per-cell
baselines, plus greedy evaluation rollouts."""

from dataclasses import dataclass

import numpy as np

from .replay import EpsilonSchedule


@dataclass
class TrainingConfig:
    total_steps: int = 20_000
    batch_size: int = 64
    gamma: float = 0.0
    learning_rate: float = 1e-3
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.01
    epsilon_decay_steps: int = None      # None: first half of the training
    replay_capacity: int = 10_000
    target_update_period: int = 500
    per_alpha: float = 0.6
    per_beta_initial: float = 0.4
    per_beta_final: float = 1.0
    per_epsilon: float = 1e-6

    def epsilon_schedule(self):
        decay = self.epsilon_decay_steps
        if decay is None:
            decay = self.total_steps // 2
        return EpsilonSchedule(self.epsilon_initial, self.epsilon_final, decay)

    def beta(self, step):
        if self.total_steps <= 0:
            return self.per_beta_final
        frac = min(1.0, step / self.total_steps)
        return self.per_beta_initial + (self.per_beta_final
                                        - self.per_beta_initial) * frac


@dataclass
class EpisodeRow:
    step: int
    episode: int
    epsilon: float
    loss: float              # None until the buffer can fill a batch
    reward_mean: float
    global_sinr_db: float
    mean_power_w: float


def run_training(env, algorithm, cfg, seed, on_episode=None):
    """Interact for cfg.total_steps, learning once per environment step and
    resetting the environment at each episode boundary. Returns one metrics
    row per completed episode."""
    schedule = cfg.epsilon_schedule()
    explore_rng = np.random.default_rng([seed, 101])
    replay_rng = np.random.default_rng([seed, 202])
    rows = []
    if cfg.total_steps <= 0:
        return rows
    obs, graph = env.reset()
    episode = 1
    rewards, sinrs, powers, losses = [], [], [], []
    for t in range(cfg.total_steps):
        eps = schedule.value(t)
        actions = algorithm.act(obs, graph, eps, explore_rng)
        next_obs, reward, done, info = env.step(actions)
        next_graph = env.agent_graph()
        algorithm.observe(obs, graph, actions, reward, next_obs, next_graph)
        loss = algorithm.learn(replay_rng, cfg.beta(t))
        rewards.append(float(np.mean(reward)))
        sinrs.append(info["global_sinr_db"])
        powers.append(info["mean_power_w"])
        if loss is not None:
            losses.append(loss)
        obs, graph = next_obs, next_graph
        if done:
            row = EpisodeRow(
                step=t + 1,
                episode=episode,
                epsilon=eps,
                loss=float(np.mean(losses)) if losses else None,
                reward_mean=float(np.mean(rewards)),
                global_sinr_db=float(np.mean(sinrs)),
                mean_power_w=float(np.mean(powers)),
            )
            rows.append(row)
            if on_episode is not None:
                on_episode(row)
            rewards, sinrs, powers, losses = [], [], [], []
            episode += 1
            if t + 1 < cfg.total_steps:
                obs, graph = env.reset()
    return rows


def run_evaluation(env, act_fn, n_episodes):
    """Greedy rollouts; returns one dict per episode with the final-step
    network metrics and the per-step means."""
    results = []
    for _ in range(n_episodes):
        obs, graph = env.reset()
        sinrs, powers = [], []
        reward = env.compute_reward()
        info = {"global_sinr_db": env.state.global_sinr_db,
                "mean_power_w": env.state.mean_power_w}
        for _ in range(env.config.episode_length):
            actions = act_fn(obs, graph)
            obs, reward, done, info = env.step(actions)
            graph = env.agent_graph()
            sinrs.append(info["global_sinr_db"])
            powers.append(info["mean_power_w"])
        results.append({
            "final_global_sinr_db": info["global_sinr_db"],
            "final_mean_power_w": info["mean_power_w"],
            "mean_global_sinr_db": float(np.mean(sinrs)),
            "mean_power_w": float(np.mean(powers)),
            "final_reward": float(np.mean(reward)),
        })
    return results


def greedy_policy(model):
    def act(obs, graph):
        return np.argmax(model.q_values(obs, graph), axis=1)
    return act
