"""Prioritized experience replay with proportional sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BufferTooSmall


@dataclass
class Transition:
    observation: np.ndarray
    action: int  # 1..23
    reward: float
    next_observation: np.ndarray
    terminal: bool
    priority: float = 1.0


class PrioritizedReplay:
    """Ring buffer; sampling probability p_i^alpha / sum(p^alpha) with
    p_i = |td_i| + priority_epsilon, importance weights (N * P_i)^(-beta)
    normalized by the batch maximum."""

    def __init__(self, capacity: int, alpha: float = 0.6,
                 priority_epsilon: float = 1e-3):
        self.capacity = capacity
        self.alpha = alpha
        self.priority_epsilon = priority_epsilon
        self._storage: list[Transition] = []
        self._priorities = np.zeros(capacity, dtype=np.float64)
        self._next = 0

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, t: Transition) -> None:
        """New transitions enter at the current maximum priority."""
        if self._storage:
            priority = float(self._priorities[: len(self._storage)].max())
        else:
            priority = 1.0
        t.priority = priority
        if len(self._storage) < self.capacity:
            self._storage.append(t)
            self._priorities[len(self._storage) - 1] = priority
        else:
            self._storage[self._next] = t
            self._priorities[self._next] = priority
            self._next = (self._next + 1) % self.capacity

    def probabilities(self) -> np.ndarray:
        p = self._priorities[: len(self._storage)] ** self.alpha
        return p / p.sum()

    def sample(
        self, batch_size: int, beta: float, rng: np.random.Generator
    ) -> tuple[list[Transition], np.ndarray, np.ndarray]:
        n = len(self._storage)
        if n < batch_size:
            raise BufferTooSmall(f"buffer holds {n} < batch {batch_size}")
        probs = self.probabilities()
        indices = rng.choice(n, size=batch_size, replace=True, p=probs)
        weights = (n * probs[indices]) ** (-beta)
        weights = weights / weights.max()
        return [self._storage[i] for i in indices], indices, weights

    def update_priorities(self, indices: np.ndarray, td_abs: np.ndarray) -> None:
        for i, td in zip(indices, td_abs):
            p = float(abs(td)) + self.priority_epsilon
            self._priorities[i] = p
            self._storage[i].priority = p
