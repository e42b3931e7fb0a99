"""Uniform replay memory over environment transitions."""

from dataclasses import dataclass

import numpy as np

from ..data import PackedRequests


@dataclass
class Transition:
    request: object       # BidRequest
    budget_norm: float
    time_norm: float
    action: int
    reward: float
    next_request: object
    next_budget_norm: float
    next_time_norm: float
    done: bool


class ReplayBuffer:
    """Ring buffer; batches are drawn uniformly without replacement."""

    def __init__(self, capacity: int = 2_500_000):
        self.capacity = int(capacity)
        self._items = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng) -> list:
        n = len(self._items)
        ids = rng.choice(n, size=min(batch_size, n), replace=False)
        return [self._items[i] for i in ids]


def batch_arrays(batch: list) -> dict:
    """Column layout for a sampled batch, packed for the Q-network."""
    return {
        "packed": PackedRequests([t.request for t in batch]),
        "b": np.array([t.budget_norm for t in batch]),
        "t": np.array([t.time_norm for t in batch]),
        "action": np.array([t.action for t in batch], dtype=np.int64),
        "reward": np.array([t.reward for t in batch]),
        "next_packed": PackedRequests([t.next_request for t in batch]),
        "next_b": np.array([t.next_budget_norm for t in batch]),
        "next_t": np.array([t.next_time_norm for t in batch]),
        "done": np.array([t.done for t in batch], dtype=bool),
    }
