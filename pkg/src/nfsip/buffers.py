"""Experience stores: FIFO transition buffer, reservoir-sampled supervised
buffer, and the welfare-gated prioritized self-imitation buffer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class BestResponsePair:
    state: np.ndarray
    action: int


@dataclass
class ReturnTransition:
    """Transition annotated with its cumulative return and episode welfare."""

    state: np.ndarray
    action: int
    cumulative_return: float
    next_state: np.ndarray
    episode_welfare: float
    priority: float
    agent_id: int = 0


class RLBuffer:
    """FIFO transition store; uniform sampling with replacement.

    Implemented as a ring buffer so sampling stays O(batch) at any capacity.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("RLBuffer capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
        self._next = (self._next + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise BufferNotReady("RL buffer is empty")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]

    def items(self) -> list[Transition]:
        """Contents oldest-first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next :] + self._items[: self._next]


class BufferNotReady(Exception):
    """Raised when a sample is requested from an empty buffer; the caller
    skips the corresponding update."""


class ReservoirBuffer:
    """Uniform-over-stream reservoir for supervised (state, action) pairs.

    Item k > capacity replaces a uniformly chosen slot with probability
    capacity / k, so every stream element ends up resident with equal
    probability. Never discards by age.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("ReservoirBuffer capacity must be positive")
        self.capacity = capacity
        self._items: list[BestResponsePair] = []
        self._seen = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, p: BestResponsePair, rng: np.random.Generator) -> None:
        self._seen += 1
        if len(self._items) < self.capacity:
            self._items.append(p)
            return
        j = rng.integers(0, self._seen)
        if j < self.capacity:
            self._items[j] = p

    def sample(self, n: int, rng: np.random.Generator) -> list[BestResponsePair]:
        if not self._items:
            raise BufferNotReady("SL buffer is empty")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]


def compute_returns(rewards: list[float], gamma: float) -> list[float]:
    """Discounted suffix sums: R_t = r_t + gamma * R_{t+1}."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    out = [0.0] * len(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


PRIORITY_FLOOR = 1e-3


@dataclass
class SelfImitationBuffer:
    """Prioritized store of good-episode experience, gated on social welfare.

    A strictly better episode resets the buffer and raises the threshold;
    episodes matching the threshold are appended. Sampling is proportional
    to priority = max(return, priority_floor).
    """

    capacity: int = 50_000
    priority_floor: float = PRIORITY_FLOOR
    best_welfare: float = float("-inf")
    entries: list[ReturnTransition] = field(default_factory=list)
    reset_count: int = 0
    _probs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("SelfImitationBuffer capacity must be positive")

    def __len__(self) -> int:
        return len(self.entries)

    def consider_episode(
        self,
        per_step: list[tuple[np.ndarray, int, float, np.ndarray]],
        welfare: float,
        agent_ids: list[int] | None = None,
    ) -> bool:
        """Apply the reset-then-store protocol; returns True if stored.

        The reset branch (strict improvement) and the store branch (tie or
        better) execute sequentially, so an improving episode both resets
        the buffer and stores its own steps.
        """
        if welfare > self.best_welfare:
            self.entries.clear()
            self.best_welfare = welfare
            self.reset_count += 1
        if welfare >= self.best_welfare:
            ids = agent_ids if agent_ids is not None else [0] * len(per_step)
            for (s, a, ret, s2), aid in zip(per_step, ids):
                self.entries.append(
                    ReturnTransition(
                        state=s,
                        action=a,
                        cumulative_return=ret,
                        next_state=s2,
                        episode_welfare=welfare,
                        priority=max(ret, self.priority_floor),
                        agent_id=aid,
                    )
                )
            if len(self.entries) > self.capacity:
                del self.entries[: len(self.entries) - self.capacity]
            self._probs = None
            return True
        return False

    def sample(self, n: int, rng: np.random.Generator) -> list[ReturnTransition]:
        if not self.entries:
            raise BufferNotReady("self-imitation buffer is empty")
        if self._probs is None or len(self._probs) != len(self.entries):
            pri = np.array([e.priority for e in self.entries])
            self._probs = pri / pri.sum()
        probs = self._probs
        idx = rng.choice(len(self.entries), size=n, replace=True, p=probs)
        return [self.entries[i] for i in idx]

    def dump(self, path) -> None:
        """Debug dump, one tab-separated record per line."""
        with open(path, "w") as fh:
            fh.write("agent_id\taction\treturn\twelfare\tpriority\n")
            for e in self.entries:
                fh.write(
                    f"{e.agent_id}\t{e.action}\t{e.cumulative_return:.6g}"
                    f"\t{e.episode_welfare:.6g}\t{e.priority:.6g}\n"
                )
