"""Finite-difference verification of every analytic loss gradient.

Uses deliberately tiny networks so the central-difference sweep stays fast;
the backprop code paths are identical at any size.
"""

from __future__ import annotations

import numpy as np

from . import agents as ag
from . import nets
from .buffers import BestResponsePair, ReturnTransition, Transition


def tiny_networks(rng: np.random.Generator, obs: int = 3, acts: int = 3):
    networks = ag.AgentNetworks.create(obs, acts, rng, hidden=(4,))
    # Perturb the target so TD errors are nonzero.
    for _, a in networks.target_q_params.tensors():
        a += rng.normal(scale=0.1, size=a.shape)
    return networks


def random_transitions(rng, n, obs, acts):
    return [
        Transition(
            rng.normal(size=obs), int(rng.integers(acts)), float(rng.normal()),
            rng.normal(size=obs), bool(rng.random() < 0.2),
        )
        for _ in range(n)
    ]


def random_pairs(rng, n, obs, acts):
    return [
        BestResponsePair(rng.normal(size=obs), int(rng.integers(acts)))
        for _ in range(n)
    ]


def random_return_transitions(rng, n, obs, acts, welfare_lo=-1.0, welfare_hi=3.0):
    return [
        ReturnTransition(
            rng.normal(size=obs), int(rng.integers(acts)), float(rng.normal(scale=2.0)),
            rng.normal(size=obs), float(rng.uniform(welfare_lo, welfare_hi)), 1.0,
        )
        for _ in range(n)
    ]


def run_gradcheck(seed: int = 0, draws: int = 20, h: float = 1e-5) -> dict[str, float]:
    """Max relative error per loss over `draws` random (params, batch) pairs."""
    rng = np.random.default_rng(seed)
    obs, acts, batch_n = 3, 3, 4
    report = {
        "q_loss": 0.0,
        "pi_loss": 0.0,
        "sil_q_loss_uniform": 0.0,
        "sil_q_loss_policy": 0.0,
        "sil_pi_loss": 0.0,
        "acsil_critic": 0.0,
        "acsil_actor": 0.0,
    }
    for _ in range(draws):
        networks = tiny_networks(rng, obs, acts)
        threshold = 0.5

        batch = random_transitions(rng, batch_n, obs, acts)
        _, grad = ag.q_loss(networks, batch)
        fd = nets.finite_difference_gradient(
            lambda p: ag.q_loss(_with_q(networks, p), batch)[0],
            networks.q_params, h,
        )
        report["q_loss"] = max(report["q_loss"], nets.max_relative_error(grad, fd))

        pairs = random_pairs(rng, batch_n, obs, acts)
        _, pgrad = ag.pi_loss(networks, pairs)
        fd = nets.finite_difference_gradient(
            lambda p: ag.pi_loss(_with_pi(networks, p), pairs)[0],
            networks.policy_params, h,
        )
        report["pi_loss"] = max(report["pi_loss"], nets.max_relative_error(pgrad, fd))

        si = random_return_transitions(rng, batch_n, obs, acts)
        for mode, key in ((ag.UNIFORM, "sil_q_loss_uniform"),
                          (ag.POLICY_WEIGHTED, "sil_q_loss_policy")):
            _, sgrad, _ = ag.sil_q_loss(networks, si, threshold, mode)
            fd = nets.finite_difference_gradient(
                lambda p: ag.sil_q_loss(_with_q(networks, p), si, threshold, mode)[0],
                networks.q_params, h,
            )
            report[key] = max(report[key], nets.max_relative_error(sgrad, fd))

        # Policy SIL: the advantage weights are constants w.r.t. the policy
        # parameters, and depend only on the Q network, so a plain sweep over
        # the policy parameters is the right oracle.
        _, _, gamma = ag.sil_q_loss(networks, si, threshold, ag.UNIFORM)
        _, spgrad = ag.sil_pi_loss(
            networks, si, threshold, ag.UNIFORM, advantages=gamma
        )
        fd = nets.finite_difference_gradient(
            lambda p: ag.sil_pi_loss(
                _with_pi(networks, p), si, threshold, ag.UNIFORM, advantages=gamma
            )[0],
            networks.policy_params, h,
        )
        report["sil_pi_loss"] = max(
            report["sil_pi_loss"], nets.max_relative_error(spgrad, fd)
        )

        # AC-SIL combined: advantages are stop-gradient for the actor, and the
        # critic differentiates through V only.
        states = np.stack([t.state for t in si])
        actions = np.array([t.action for t in si])
        returns = np.array([t.cumulative_return for t in si])
        c_l, c_grad, a_l, a_grad = ag.ac_losses(
            networks, states, actions, returns, ag.UNIFORM
        )
        fd = nets.finite_difference_gradient(
            lambda p: _critic_loss_detached(networks, p, states, actions, returns),
            networks.q_params, h,
        )
        report["acsil_critic"] = max(
            report["acsil_critic"], nets.max_relative_error(c_grad, fd)
        )
        fd = nets.finite_difference_gradient(
            lambda p: ag.ac_losses(
                _with_pi(networks, p), states, actions, returns, ag.UNIFORM
            )[2],
            networks.policy_params, h,
        )
        report["acsil_actor"] = max(
            report["acsil_actor"], nets.max_relative_error(a_grad, fd)
        )
    return report


def _with_q(networks: ag.AgentNetworks, q) -> ag.AgentNetworks:
    return ag.AgentNetworks(q, networks.target_q_params, networks.policy_params)


def _with_pi(networks: ag.AgentNetworks, pi) -> ag.AgentNetworks:
    return ag.AgentNetworks(networks.q_params, networks.target_q_params, pi)


def _critic_loss_detached(networks, q_params, states, actions, returns) -> float:
    return ag.ac_losses(
        _with_q(networks, q_params), states, actions, returns, ag.UNIFORM
    )[0]
