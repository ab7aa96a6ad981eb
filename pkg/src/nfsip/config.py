"""Experiment configuration: a flat dataclass, a line-oriented `key = value`
file format with `#` comments, and round-trip serialization.

Command-line flags mirror every key; flags override file values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

ALGOS = ("nfsp", "nfsip", "acsil")
DOMAINS = ("box-pushing", "firefighting", "search-rescue", "matrix")


class ConfigError(ValueError):
    """Raised with a field-level message for bad config input."""


@dataclass
class ExperimentConfig:
    algo: str = "nfsip"
    domain: str = "box-pushing"
    variant: str = "v1"
    grid: str = "4x4"
    agents: int = 5
    tasks: int = 4
    episodes: int = 2000
    runs: int = 5
    base_seed: int = 0
    eta: float = 0.2
    epsilon: float = 0.5
    epsilon_decay: float = 0.98
    decay_interval: int = 500
    decay_unit: str = "steps"  # or "episodes"
    eta_decay_mode: str = "fixed"  # or "harmonic"
    lr_policy: float = 1e-3
    lr_q: float = 1e-4
    batch_size: int = 32
    sil_iterations: int = 5
    gamma: float = 0.99
    sync_interval: int = 300
    warmup: int = 1000
    horizon: int = 0  # 0 -> domain default
    rl_capacity: int = 200_000
    sl_capacity: int = 1_000_000
    si_capacity: int = 50_000
    priority_floor: float = 1e-3
    baseline: str = "policy-weighted"
    optimizer: str = "adam"
    task_reward: float = 10.0
    layout: str = "fixed"  # or "episode": re-randomize placements per episode
    layout_seed: int = 0
    matrix_actions: int = 2
    payoffs: str = ""  # row-major list for domain=matrix, e.g. "1,0,0,0"
    out_dir: str = ""
    record_walltime: bool = False
    checkpoint_interval: int = 0  # episodes between checkpoints; 0 disables
    running_avg_window: int = 100
    trajectory_log: bool = False

    @property
    def grid_width(self) -> int:
        return _parse_grid(self.grid)[0]

    @property
    def grid_height(self) -> int:
        return _parse_grid(self.grid)[1]

    def resolved_out_dir(self) -> str:
        return self.out_dir or os.environ.get("NFSIP_OUT", "out")

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"algo: {self.algo!r} not in {ALGOS}")
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain: {self.domain!r} not in {DOMAINS}")
        if self.variant not in ("v1", "v2"):
            raise ConfigError(f"variant: {self.variant!r} must be v1 or v2")
        _parse_grid(self.grid)
        for name, lo in (
            ("agents", 1),
            ("tasks", 1),
            ("episodes", 1),
            ("runs", 1),
            ("batch_size", 1),
            ("rl_capacity", 1),
            ("sl_capacity", 1),
            ("si_capacity", 1),
            ("running_avg_window", 1),
            ("matrix_actions", 1),
        ):
            if getattr(self, name) < lo:
                raise ConfigError(f"{name}: must be >= {lo}")
        if self.layout not in ("fixed", "episode"):
            raise ConfigError("layout: must be 'fixed' or 'episode'")
        for name in ("sil_iterations", "warmup", "horizon", "checkpoint_interval",
                     "decay_interval", "sync_interval", "base_seed", "layout_seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0")
        for name in ("eta", "epsilon"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name}: must be in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ConfigError("epsilon_decay: must be in (0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma: must be in (0, 1]")
        for name in ("lr_policy", "lr_q", "priority_floor", "task_reward"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name}: must be > 0")
        if self.decay_unit not in ("steps", "episodes"):
            raise ConfigError("decay_unit: must be 'steps' or 'episodes'")
        if self.eta_decay_mode not in ("fixed", "harmonic"):
            raise ConfigError("eta_decay_mode: must be 'fixed' or 'harmonic'")
        if self.baseline not in ("uniform", "policy-weighted"):
            raise ConfigError("baseline: must be 'uniform' or 'policy-weighted'")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("optimizer: must be 'adam' or 'sgd'")
        if self.domain == "matrix":
            payoff_matrix(self)

    def to_text(self) -> str:
        lines = ["# nfsip experiment config"]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"grid: expected WxH, got {text!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"grid: expected integers in WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise ConfigError("grid: dimensions must be positive")
    return w, h


def payoff_matrix(config: ExperimentConfig):
    """Row-major payoff list -> (n, n) identical-interest payoff array."""
    import numpy as np

    n = config.matrix_actions
    if not config.payoffs.strip():
        raise ConfigError("payoffs: required when domain = matrix")
    try:
        vals = [float(x) for x in config.payoffs.split(",")]
    except ValueError:
        raise ConfigError(f"payoffs: malformed list {config.payoffs!r}") from None
    if len(vals) != n * n:
        raise ConfigError(
            f"payoffs: expected {n * n} entries for {n} actions, got {len(vals)}"
        )
    return np.array(vals).reshape(n, n)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: malformed value {raw!r}") from None
    return raw


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base if base is not None else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg


def parse_config(
    path: str | None = None, overrides: dict[str, str] | None = None
) -> ExperimentConfig:
    """File first (if given), then flag overrides; validated at the end."""
    cfg = ExperimentConfig()
    if path is not None:
        with open(path) as fh:
            cfg = parse_config_text(fh.read(), cfg)
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    cfg.validate()
    return cfg
