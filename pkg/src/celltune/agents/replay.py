"""Prioritized experience replay and the linear exploration schedule."""

from dataclasses import dataclass

import numpy as np


@dataclass
class EpsilonSchedule:
    """Linear decay from `initial` to `final` over `decay_steps`, constant
    afterwards."""

    initial: float = 1.0
    final: float = 0.01
    decay_steps: int = 10_000

    def value(self, step):
        if self.decay_steps <= 0 or step >= self.decay_steps:
            return self.final
        frac = step / self.decay_steps
        return self.initial + (self.final - self.initial) * frac

    def state_dict(self):
        return {"initial": self.initial, "final": self.final,
                "decay_steps": self.decay_steps}


@dataclass
class Experience:
    """One stored joint transition; graphs may differ in node count across
    entries because episodes sample new deployments."""

    obs: np.ndarray
    graph: object
    actions: np.ndarray
    reward: object          # global scalar, or per-agent vector for local rewards
    next_obs: np.ndarray
    next_graph: object


class PrioritizedReplay:
    """Ring buffer sampled proportionally to priority**alpha.

    New entries get the maximum priority currently in the buffer so they
    are seen at least once; `update_priorities` installs |TD error| +
    epsilon after each training step.
    """

    def __init__(self, capacity, alpha=0.6, epsilon=1e-6):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.epsilon = epsilon
        self._items = []
        self._priorities = np.zeros(capacity)
        self._next = 0

    def __len__(self):
        return len(self._items)

    def add(self, item):
        prio = self._priorities[: len(self._items)].max() if self._items else 1.0
        if len(self._items) < self.capacity:
            self._items.append(item)
            self._priorities[len(self._items) - 1] = prio
        else:
            self._items[self._next] = item
            self._priorities[self._next] = prio
            self._next = (self._next + 1) % self.capacity

    def sampling_probabilities(self):
        scaled = self._priorities[: len(self._items)] ** self.alpha
        return scaled / scaled.sum()

    def sample(self, batch_size, beta, rng):
        """Return (indices, items, importance weights normalized to max 1)."""
        if len(self._items) < batch_size:
            raise ValueError("not enough experiences to sample a batch")
        probs = self.sampling_probabilities()
        idx = rng.choice(len(self._items), size=batch_size, replace=True, p=probs)
        n = len(self._items)
        weights = (n * probs[idx]) ** (-beta)
        weights /= (n * probs.min()) ** (-beta)
        return idx, [self._items[i] for i in idx], weights

    def update_priorities(self, indices, td_abs):
        self._priorities[indices] = np.abs(td_abs) + self.epsilon
