"""Command-line entry point: train / matrix / gradcheck / replay.

Metrics come out as plain CSV (one file per run plus a cross-run aggregate)
so any plotting tool can draw the welfare curves.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

import numpy as np

from . import nets, trainer
from .config import ConfigError, ExperimentConfig, parse_config
from .matrixgames import MatrixGame, exact_fictitious_play
from .trainer import RunMetrics, aggregate

CSV_HEADER = "run,episode,social_welfare,running_avg,seconds"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def emit_metrics(metrics: list[RunMetrics], out_dir: str) -> list[str]:
    """One CSV per run plus aggregate.csv with per-episode mean/variance."""
    if not metrics:
        raise ValueError("emit_metrics requires at least one completed run")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for run_idx, m in enumerate(metrics):
        path = os.path.join(out_dir, f"run_{run_idx}.csv")
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for ep, (w, avg, sec) in enumerate(
                zip(m.welfare, m.running_avg, m.seconds)
            ):
                fh.write(f"{run_idx},{ep},{_fmt(w)},{_fmt(avg)},{_fmt(sec)}\n")
        paths.append(path)
    mean, var = aggregate(metrics)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w") as fh:
        fh.write("episode,mean_welfare,var_welfare\n")
        for ep, (mu, v) in enumerate(zip(mean, var)):
            fh.write(f"{ep},{_fmt(mu)},{_fmt(v)}\n")
    paths.append(agg_path)
    return paths


def _check_out_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write_probe")
    try:
        with open(probe, "w") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as e:
        raise ConfigError(f"out_dir: not writable ({e})") from None


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    for f in fields(ExperimentConfig):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name)


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    return {
        f.name: getattr(args, f.name)
        for f in fields(ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    return parse_config(args.config, _collect_overrides(args))


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = cfg.resolved_out_dir()
    _check_out_dir(out_dir)
    metrics = trainer.run_experiment(cfg, checkpoint_dir=out_dir)
    paths = emit_metrics(metrics, out_dir)
    final = [m.running_avg[-1] for m in metrics]
    print(f"algo={cfg.algo} domain={cfg.domain} {cfg.variant} runs={cfg.runs}")
    print(f"final running-average welfare per run: {[_fmt(x) for x in final]}")
    print(f"wrote {len(paths)} files to {out_dir}")
    return 0


def cmd_matrix(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if cfg.domain != "matrix":
        cfg.domain = "matrix"
    if not cfg.payoffs:
        cfg.matrix_actions = 2
        cfg.payoffs = "1,0,0,0"
    cfg.validate()
    from .config import payoff_matrix

    payoffs = payoff_matrix(cfg)
    game = MatrixGame(payoffs)
    profile = exact_fictitious_play(game, iterations=1000)
    print("exact fictitious-play final frequencies:")
    for p, freq in enumerate(profile.final()):
        print(f"  player {p}: {np.round(freq, 4).tolist()}")
    metrics = trainer.run_experiment(cfg)
    out_dir = cfg.resolved_out_dir()
    _check_out_dir(out_dir)
    emit_metrics(metrics, out_dir)
    # Report the learned average-policy profile of the last run.
    state, _ = trainer.run_single(cfg, cfg.base_seed + cfg.runs - 1)
    for i in range(state.env.n_agents):
        dist = trainer.policy_distribution(state, state.env.observe(i))
        print(f"  agent {i} average policy: {np.round(dist, 4).tolist()}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from .gradcheck import run_gradcheck

    report = run_gradcheck(seed=int(args.seed), draws=int(args.draws))
    worst = 0.0
    for name, err in report.items():
        print(f"{name}: max relative error {err:.3e}")
        worst = max(worst, err)
    ok = worst <= 1e-4
    print(f"gradcheck {'PASS' if ok else 'FAIL'} (worst {worst:.3e}, tol 1e-4)")
    return 0 if ok else 1


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if cfg.domain == "matrix":
        print("replay supports grid domains only", file=sys.stderr)
        return 2
    loaded = trainer.load_checkpoint(args.checkpoint)
    state = trainer.init_train_state(cfg, cfg.base_seed)
    state.networks.q_params = loaded["q"]
    state.networks.target_q_params = loaded["target_q"]
    state.networks.policy_params = loaded["policy"]
    env = state.env
    env.reset(cfg.base_seed)
    rng = np.random.default_rng(cfg.base_seed)
    print("step\tjoint_action\trewards\ttasks_remaining")
    done = False
    step = 0
    while not done:
        joint = []
        for i in range(env.n_agents):
            q, _ = nets.forward(state.networks.q_params, env.observe(i))
            joint.append(int(np.argmax(q)))
        res = env.step(joint, rng)
        done = res.done
        print(
            f"{step}\t{joint}\t{[round(float(r), 3) for r in res.rewards]}"
            f"\t{env.tasks_remaining()}"
        )
        step += 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nfsip",
        description="Fictitious self-play with self-imitation for cooperative MARL",
    )
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", help="run a training experiment")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_matrix = sub.add_parser("matrix", help="matrix-game convergence suite")
    _add_config_flags(p_matrix)
    p_matrix.set_defaults(func=cmd_matrix)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.add_argument("--seed", default="0")
    p_grad.add_argument("--draws", default="20")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_replay = sub.add_parser("replay", help="print a greedy trajectory from a checkpoint")
    p_replay.add_argument("checkpoint")
    _add_config_flags(p_replay)
    p_replay.set_defaults(func=cmd_replay)

    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
