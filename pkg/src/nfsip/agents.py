"""Loss functions and update rules: the fictitious self-play pair (TD loss
for the best-response network, log-likelihood loss for the average policy),
the welfare-gated self-imitation additions, action selection with policy
mixing, and the actor-critic + self-imitation baseline.

Every loss returns (scalar, GradientSet) where the gradient is analytic and
checkable against `nets.finite_difference_gradient`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .buffers import BestResponsePair, ReturnTransition, Transition
from .nets import (
    GradientSet,
    OptimizerState,
    ParameterSet,
    backward,
    forward,
    log_softmax,
    softmax,
)

BEST_RESPONSE = "best-response"
AVERAGE_POLICY = "average-policy"

UNIFORM = "uniform"
POLICY_WEIGHTED = "policy-weighted"


@dataclass
class AgentNetworks:
    """Shared parameter bundle for one training run (all agents share it)."""

    q_params: ParameterSet
    target_q_params: ParameterSet
    policy_params: ParameterSet
    q_opt: OptimizerState = field(default_factory=OptimizerState)
    policy_opt: OptimizerState = field(default_factory=OptimizerState)

    @classmethod
    def create(
        cls,
        obs_size: int,
        n_actions: int,
        rng: np.random.Generator,
        hidden=nets.DEFAULT_HIDDEN,
        optimizer: str = "adam",
    ) -> "AgentNetworks":
        q = nets.init_params(obs_size, n_actions, hidden, rng)
        pi = nets.init_params(obs_size, n_actions, hidden, rng)
        return cls(
            q_params=q,
            target_q_params=q.copy(),
            policy_params=pi,
            q_opt=OptimizerState(mode=optimizer),
            policy_opt=OptimizerState(mode=optimizer),
        )

    def sync_target(self) -> None:
        self.target_q_params = self.q_params.copy()


@dataclass
class MixingSchedule:
    """Anticipatory mixing and exploration knobs with multiplicative decay."""

    eta: float = 0.2
    epsilon: float = 0.5
    decay_factor: float = 0.98
    decay_interval: int = 500
    eta_decay_mode: str = "fixed"  # "fixed" or "harmonic" (1/(t+1), GWFP mode)
    eta_min: float = 0.0

    def current_eta(self, episode: int) -> float:
        if self.eta_decay_mode == "harmonic":
            return max(self.eta_min, 1.0 / (episode + 1))
        return self.eta

    def maybe_decay_epsilon(self, global_step: int) -> None:
        if self.decay_interval > 0 and global_step % self.decay_interval == 0:
            self.epsilon *= self.decay_factor


def select_action(
    mode: str,
    obs: np.ndarray,
    networks: AgentNetworks,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Best-response mode: epsilon-greedy over Q. Average mode: sample the
    softmax policy."""
    if mode == BEST_RESPONSE:
        if rng.random() < epsilon:
            return int(rng.integers(0, networks.q_params.output_size))
        q, _ = forward(networks.q_params, obs)
        return int(np.argmax(q))
    if mode == AVERAGE_POLICY:
        logits, _ = forward(networks.policy_params, obs, head="policy-logits")
        probs = softmax(logits)
        return int(rng.choice(len(probs), p=probs))
    raise ValueError(f"unknown behavior mode {mode!r}")


def _stack_states(items, attr="state"):
    return np.stack([getattr(t, attr) for t in items])


def q_loss(
    networks: AgentNetworks, batch: list[Transition]
) -> tuple[float, GradientSet]:
    """Mean squared TD error against the frozen target network.

    target = r + max_a' Q'(s', a') (dropped on terminal transitions); no
    gradient flows through the target parameters.
    """
    if not batch:
        raise ValueError("q_loss requires a nonempty batch")
    states = _stack_states(batch)
    next_states = _stack_states(batch, "next_state")
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch])
    terminal = np.array([t.terminal for t in batch])

    q, trace = forward(networks.q_params, states)
    tq, _ = forward(networks.target_q_params, next_states)
    boot = tq.max(axis=1)
    boot[terminal] = 0.0
    target = rewards + boot
    rows = np.arange(len(batch))
    delta = target - q[rows, actions]
    loss = float(np.mean(delta**2))

    out_grad = np.zeros_like(q)
    out_grad[rows, actions] = -2.0 * delta / len(batch)
    return loss, backward(networks.q_params, trace, out_grad)


def pi_loss(
    networks: AgentNetworks, batch: list[BestResponsePair]
) -> tuple[float, GradientSet]:
    """Mean negative log-likelihood of stored best-response actions."""
    if not batch:
        raise ValueError("pi_loss requires a nonempty batch")
    states = _stack_states(batch)
    actions = np.array([p.action for p in batch])
    logits, trace = forward(networks.policy_params, states, head="policy-logits")
    logp = log_softmax(logits)
    rows = np.arange(len(batch))
    loss = float(-np.mean(logp[rows, actions]))

    probs = softmax(logits)
    out_grad = probs / len(batch)
    out_grad[rows, actions] -= 1.0 / len(batch)
    return loss, backward(networks.policy_params, trace, out_grad)


def state_value(
    q_row: np.ndarray, policy_row: np.ndarray | None, mode: str
) -> float:
    """Baseline V(s) from a row of action values."""
    q_row = np.asarray(q_row, dtype=float)
    if mode == UNIFORM:
        return float(q_row.mean())
    if mode == POLICY_WEIGHTED:
        policy_row = np.asarray(policy_row, dtype=float)
        if policy_row.shape != q_row.shape:
            raise ValueError("q_row and policy_row must have the same length")
        return float(policy_row @ q_row)
    raise ValueError(f"unknown baseline mode {mode!r}")


def clipped_advantage(ret: float, value: float, welfare: float, threshold: float) -> float:
    """The welfare-gated clipped advantage: max(0, R - V) when the episode's
    welfare meets the threshold, else 0."""
    if welfare >= threshold:
        return max(0.0, ret - value)
    return 0.0


def effective_mixing_coefficient(t: int, gamma_clip: float) -> float:
    """(1 + clipped advantage) / (t + 1); reduces to 1/(t+1) when the
    advantage is zero."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if gamma_clip < 0:
        raise ValueError("clipped advantage is nonnegative by construction")
    return (1.0 + gamma_clip) / (t + 1.0)


def _baselines(
    networks: AgentNetworks, states: np.ndarray, baseline: str
) -> tuple[np.ndarray, nets.ForwardTrace, np.ndarray]:
    """Q rows, the Q trace, and the (stop-gradient) baseline weights."""
    q, trace = forward(networks.q_params, states)
    if baseline == UNIFORM:
        weights = np.full_like(q, 1.0 / q.shape[1])
    elif baseline == POLICY_WEIGHTED:
        logits, _ = forward(networks.policy_params, states, head="policy-logits")
        weights = softmax(logits)
    else:
        raise ValueError(f"unknown baseline mode {baseline!r}")
    return q, trace, weights


def sil_q_loss(
    networks: AgentNetworks,
    batch: list[ReturnTransition],
    threshold: float,
    baseline: str = POLICY_WEIGHTED,
) -> tuple[float, GradientSet, np.ndarray]:
    """Self-imitation value loss: mean of gated [R - V]_+ squared.

    Returns (loss, gradient for the Q parameters, per-sample advantages).
    Samples failing the welfare gate or with R <= V contribute nothing, so a
    fully gated batch yields an exactly zero gradient.
    """
    if not batch:
        raise ValueError("sil_q_loss requires a nonempty batch")
    states = _stack_states(batch)
    q, trace, weights = _baselines(networks, states, baseline)
    values = (q * weights).sum(axis=1)
    returns = np.array([t.cumulative_return for t in batch])
    welfare = np.array([t.episode_welfare for t in batch])
    gamma = np.where(welfare >= threshold, np.maximum(0.0, returns - values), 0.0)
    loss = float(np.mean(gamma**2))

    # d(Gamma^2)/dQ_j = -2 Gamma w_j for active samples (V = sum_j w_j Q_j).
    out_grad = -2.0 * gamma[:, None] * weights / len(batch)
    return loss, backward(networks.q_params, trace, out_grad), gamma


def sil_pi_loss(
    networks: AgentNetworks,
    batch: list[ReturnTransition],
    threshold: float,
    baseline: str = POLICY_WEIGHTED,
    advantages: np.ndarray | None = None,
) -> tuple[float, GradientSet]:
    """Self-imitation policy loss: mean of Gamma * (-log pi(s,a)), with
    Gamma held constant with respect to the policy parameters."""
    if not batch:
        raise ValueError("sil_pi_loss requires a nonempty batch")
    states = _stack_states(batch)
    actions = np.array([t.action for t in batch])
    if advantages is None:
        q, _, weights = _baselines(networks, states, baseline)
        values = (q * weights).sum(axis=1)
        returns = np.array([t.cumulative_return for t in batch])
        welfare = np.array([t.episode_welfare for t in batch])
        advantages = np.where(
            welfare >= threshold, np.maximum(0.0, returns - values), 0.0
        )
    logits, trace = forward(networks.policy_params, states, head="policy-logits")
    logp = log_softmax(logits)
    rows = np.arange(len(batch))
    loss = float(np.mean(advantages * -logp[rows, actions]))

    probs = softmax(logits)
    out_grad = advantages[:, None] * probs / len(batch)
    out_grad[rows, actions] -= advantages / len(batch)
    return loss, backward(networks.policy_params, trace, out_grad)


def ac_losses(
    networks: AgentNetworks,
    states: np.ndarray,
    actions: np.ndarray,
    returns: np.ndarray,
    baseline: str = POLICY_WEIGHTED,
) -> tuple[float, GradientSet, float, GradientSet]:
    """Advantage actor-critic losses on an on-policy episode batch.

    Critic: mean (R - V(s))^2 with V read off the critic's action-value row.
    Actor: mean -log pi(s,a) * (R - V), advantage treated as constant.
    Returns (critic_loss, critic_grad, actor_loss, actor_grad).
    """
    q, q_trace, weights = _baselines(networks, states, baseline)
    values = (q * weights).sum(axis=1)
    delta = returns - values
    critic_loss = float(np.mean(delta**2))
    critic_out_grad = -2.0 * delta[:, None] * weights / len(states)
    critic_grad = backward(networks.q_params, q_trace, critic_out_grad)

    logits, p_trace = forward(networks.policy_params, states, head="policy-logits")
    logp = log_softmax(logits)
    rows = np.arange(len(states))
    actor_loss = float(np.mean(delta * -logp[rows, actions]))
    probs = softmax(logits)
    actor_out_grad = delta[:, None] * probs / len(states)
    actor_out_grad[rows, actions] -= delta / len(states)
    actor_grad = backward(networks.policy_params, p_trace, actor_out_grad)
    return critic_loss, critic_grad, actor_loss, actor_grad


def acsil_update(
    networks: AgentNetworks,
    on_policy_batch: list[ReturnTransition],
    si_batch: list[ReturnTransition],
    threshold: float,
    lr_actor: float,
    lr_critic: float,
    baseline: str = POLICY_WEIGHTED,
) -> dict[str, float]:
    """One actor-critic step on the episode batch plus, when the
    self-imitation batch is nonempty, the self-imitation pair of updates."""
    states = _stack_states(on_policy_batch)
    actions = np.array([t.action for t in on_policy_batch])
    returns = np.array([t.cumulative_return for t in on_policy_batch])
    c_loss, c_grad, a_loss, a_grad = ac_losses(
        networks, states, actions, returns, baseline
    )
    nets.optimizer_step(networks.q_params, c_grad, lr_critic, networks.q_opt)
    nets.optimizer_step(networks.policy_params, a_grad, lr_actor, networks.policy_opt)
    stats = {"critic_loss": c_loss, "actor_loss": a_loss}
    if si_batch:
        sq_loss, sq_grad, gamma = sil_q_loss(networks, si_batch, threshold, baseline)
        sp_loss, sp_grad = sil_pi_loss(
            networks, si_batch, threshold, baseline, advantages=gamma
        )
        nets.optimizer_step(networks.q_params, sq_grad, lr_critic, networks.q_opt)
        nets.optimizer_step(networks.policy_params, sp_grad, lr_actor, networks.policy_opt)
        stats["sil_q_loss"] = sq_loss
        stats["sil_pi_loss"] = sp_loss
        stats["mean_gamma"] = float(gamma.mean())
    return stats
