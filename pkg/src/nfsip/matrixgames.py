"""Identical-interest normal-form games: an exact fictitious-play oracle and
a one-step episodic environment so the neural self-play agents can be
checked against it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MatrixGame:
    """Identical-interest game: one payoff tensor shared by all players,
    indexed by the joint action."""

    payoffs: np.ndarray

    def __post_init__(self):
        self.payoffs = np.asarray(self.payoffs, dtype=float)
        if not np.all(np.isfinite(self.payoffs)):
            raise ValueError("payoffs must be finite")

    @property
    def n_players(self) -> int:
        return self.payoffs.ndim

    @property
    def n_actions(self) -> tuple[int, ...]:
        return self.payoffs.shape


@dataclass
class EmpiricalProfile:
    """Per-player empirical action frequencies, one row per iteration."""

    frequencies: list[np.ndarray]  # player -> (iterations, n_actions)

    def final(self) -> list[np.ndarray]:
        return [f[-1] for f in self.frequencies]


def best_response(game: MatrixGame, player: int, opponent_mix: list[np.ndarray]) -> int:
    """Exact best response to a product distribution over opponents; ties
    break to the lowest action index."""
    expected = game.payoffs
    # Contract opponents in descending axis order so indices stay valid.
    for axis in sorted(range(game.n_players), reverse=True):
        if axis == player:
            continue
        expected = np.tensordot(expected, opponent_mix[axis], axes=([axis], [0]))
    return int(np.argmax(expected))


def exact_fictitious_play(
    game: MatrixGame, iterations: int, tie_rule: str = "lowest"
) -> EmpiricalProfile:
    """Simultaneous fictitious play from uniform initial counts."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if tie_rule != "lowest":
        raise ValueError(f"unsupported tie rule {tie_rule!r}")
    n = game.n_players
    counts = [np.ones(game.n_actions[p]) for p in range(n)]
    trace: list[list[np.ndarray]] = [[] for _ in range(n)]
    for _ in range(iterations):
        mixes = [c / c.sum() for c in counts]
        responses = [best_response(game, p, mixes) for p in range(n)]
        for p, a in enumerate(responses):
            counts[p][a] += 1.0
            trace[p].append(counts[p] / counts[p].sum())
    return EmpiricalProfile([np.stack(t) for t in trace])


class MatrixGameEnv:
    """A game wrapped as a one-step episodic environment.

    The state is a constant vector; each agent observes it plus its one-hot
    id. Every agent receives the identical payoff, so episode welfare is
    n_players times the payoff of the joint action.
    """

    def __init__(self, game: MatrixGame):
        if len(set(game.n_actions)) != 1:
            raise ValueError("all players must share an action count")
        self.game = game
        self._done = True

    @property
    def n_agents(self) -> int:
        return self.game.n_players

    @property
    def n_actions(self) -> int:
        return self.game.n_actions[0]

    @property
    def obs_size(self) -> int:
        return 1 + self.n_agents

    def reset(self, seed: int) -> None:
        self._done = False
        return None

    def observe(self, agent_id: int) -> np.ndarray:
        obs = np.zeros(self.obs_size)
        obs[0] = 1.0
        obs[1 + agent_id] = 1.0
        return obs

    def step(self, joint_action, rng: np.random.Generator):
        from .envs import StepResult  # shared result type

        if self._done:
            raise ValueError("step called on terminal state")
        payoff = float(self.game.payoffs[tuple(joint_action)])
        self._done = True
        return StepResult(None, np.full(self.n_agents, payoff), True)

    def tasks_remaining(self) -> int:
        return 0


def single_peak_game(n_actions: int, n_players: int = 2, peak=None) -> MatrixGame:
    """Payoff 1 at one joint action, 0 elsewhere (sparse-reward game)."""
    payoffs = np.zeros((n_actions,) * n_players)
    if peak is None:
        peak = (0,) * n_players
    payoffs[tuple(peak)] = 1.0
    return MatrixGame(payoffs)
