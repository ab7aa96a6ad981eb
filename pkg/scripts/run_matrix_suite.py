#!/usr/bin/env python3
"""Matrix-game convergence suite: exact fictitious-play oracle frequencies,
neural self-play convergence on the 2x2 coordination game, and the sparse
6x6 speed comparison between plain self-play and the self-imitation
variant."""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nfsip import trainer
from nfsip.config import ExperimentConfig
from nfsip.matrixgames import MatrixGame, exact_fictitious_play
from nfsip.nets import forward, softmax


def matrix_config(algo, n, episodes):
    payoffs = ",".join(["1"] + ["0"] * (n * n - 1))
    cfg = ExperimentConfig(
        algo=algo, domain="matrix", matrix_actions=n, payoffs=payoffs,
        episodes=episodes, runs=1, warmup=64, si_capacity=2000,
        decay_interval=50, epsilon_decay=0.95,
    )
    cfg.validate()
    return cfg


def peak_mass(state):
    return min(
        float(
            softmax(
                forward(state.networks.policy_params, state.env.observe(i),
                        head="policy-logits")[0]
            )[0]
        )
        for i in range(state.env.n_agents)
    )


def episodes_to_threshold(algo, seed, n, budget, check=50, threshold=0.9):
    cfg = matrix_config(algo, n, budget)
    state = trainer.init_train_state(cfg, seed)
    for ep in range(budget):
        rec = trainer.run_episode(state, seed * 1_000_003 + ep, algo)
        trainer.end_of_episode(state, rec, algo)
        state.episode += 1
        if (ep + 1) % check == 0 and peak_mass(state) >= threshold:
            return ep + 1
    return budget + 1


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--budget", type=int, default=5000)
    args = ap.parse_args()

    game = MatrixGame(np.array([[1.0, 0.0], [0.0, 0.0]]))
    oracle = exact_fictitious_play(game, 1000)
    print("oracle 2x2 final frequencies:",
          [np.round(f, 4).tolist() for f in oracle.final()])

    for algo in ("nfsp", "nfsip"):
        masses = []
        for seed in range(args.seeds):
            cfg = matrix_config(algo, 2, args.budget)
            state, _ = trainer.run_single(cfg, seed)
            masses.append(round(peak_mass(state), 3))
        print(f"2x2 {algo}: min policy mass on optimum per seed {masses}")

    for algo in ("nfsp", "nfsip"):
        eps = [
            episodes_to_threshold(algo, s, 6, args.budget)
            for s in range(args.seeds)
        ]
        print(f"sparse 6x6 {algo}: episodes to 0.9 mass {eps} "
              f"median {int(np.median(eps))}")


if __name__ == "__main__":
    main()
