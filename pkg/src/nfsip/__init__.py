"""Fictitious self-play with self-imitation for cooperative multi-agent RL,
with grid-world benchmarks and a matrix-game convergence suite."""

from .config import ExperimentConfig
from .trainer import run_experiment, run_single

__all__ = ["ExperimentConfig", "run_experiment", "run_single"]
