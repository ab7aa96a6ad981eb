"""Training orchestration: episode rollout, per-step updates, the
end-of-episode self-imitation phase, target sync, schedule decay, and
multi-run experiment execution.

Plain NFSP is exactly the NFSIP loop with the self-imitation phase disabled
(zero iterations), so both share one code path and a seed reproduces either
bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import agents as ag
from . import nets
from .buffers import (
    BestResponsePair,
    BufferNotReady,
    RLBuffer,
    ReservoirBuffer,
    SelfImitationBuffer,
    Transition,
    compute_returns,
)
from .config import ExperimentConfig, payoff_matrix
from .envs import GridEnv, make_spec, social_welfare
from .matrixgames import MatrixGame, MatrixGameEnv


@dataclass
class RunMetrics:
    seed: int
    welfare: list[float] = field(default_factory=list)
    running_avg: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)

    def record(self, w: float, window: int, elapsed: float) -> None:
        self.welfare.append(w)
        tail = self.welfare[-window:]
        self.running_avg.append(sum(tail) / len(tail))
        self.seconds.append(elapsed)


@dataclass
class EpisodeRecord:
    """Per-agent trajectories plus the episode's social welfare."""

    states: list[list[np.ndarray]]
    actions: list[list[int]]
    rewards: list[list[float]]
    next_states: list[list[np.ndarray]]
    modes: list[str]
    welfare: float = 0.0


@dataclass
class TrainState:
    config: ExperimentConfig
    env: object
    networks: ag.AgentNetworks
    m_rl: RLBuffer
    m_sl: ReservoirBuffer
    m_si: SelfImitationBuffer
    schedule: ag.MixingSchedule
    rng_env: np.random.Generator
    rng_behavior: np.random.Generator
    rng_train: np.random.Generator
    t: int = 0  # global environment steps
    episode: int = 0
    counters: dict[str, int] = field(default_factory=dict)
    mixing_log: list[tuple[int, float, float]] = field(default_factory=list)

    def bump(self, key: str, n: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + n


def build_env(config: ExperimentConfig):
    if config.domain == "matrix":
        return MatrixGameEnv(MatrixGame(payoff_matrix(config)))
    spec = make_spec(
        config.domain,
        config.variant,
        width=config.grid_width,
        height=config.grid_height,
        n_agents=config.agents,
        n_tasks=config.tasks,
        horizon=config.horizon or None,
        task_reward=config.task_reward,
    )
    return GridEnv(spec)


def init_train_state(config: ExperimentConfig, seed: int) -> TrainState:
    env = build_env(config)
    seeds = np.random.SeedSequence(seed).spawn(4)
    rng_init = np.random.default_rng(seeds[0])
    networks = ag.AgentNetworks.create(
        env.obs_size, env.n_actions, rng_init, optimizer=config.optimizer
    )
    return TrainState(
        config=config,
        env=env,
        networks=networks,
        m_rl=RLBuffer(config.rl_capacity),
        m_sl=ReservoirBuffer(config.sl_capacity),
        m_si=SelfImitationBuffer(config.si_capacity, config.priority_floor),
        schedule=ag.MixingSchedule(
            eta=config.eta,
            epsilon=config.epsilon,
            decay_factor=config.epsilon_decay,
            decay_interval=config.decay_interval,
            eta_decay_mode=config.eta_decay_mode,
        ),
        rng_env=np.random.default_rng(seeds[1]),
        rng_behavior=np.random.default_rng(seeds[2]),
        rng_train=np.random.default_rng(seeds[3]),
    )


def sync_target(state: TrainState) -> None:
    state.networks.sync_target()
    state.bump("target_syncs")


def decay_schedules(state: TrainState) -> None:
    """Multiplicative epsilon decay on the configured interval boundary."""
    unit = state.t if state.config.decay_unit == "steps" else state.episode
    if unit > 0 and state.schedule.decay_interval > 0:
        if unit % state.schedule.decay_interval == 0:
            state.schedule.epsilon *= state.schedule.decay_factor
            state.bump("epsilon_decays")


def _train_step(state: TrainState) -> None:
    """One minibatch update per network from the replay buffers."""
    cfg = state.config
    if len(state.m_rl) < max(1, cfg.warmup):
        return
    try:
        batch = state.m_rl.sample(cfg.batch_size, state.rng_train)
    except BufferNotReady:
        return
    _, grad = ag.q_loss(state.networks, batch)
    nets.optimizer_step(state.networks.q_params, grad, cfg.lr_q, state.networks.q_opt)
    state.bump("q_updates")
    if len(state.m_sl) > 0:
        sl_batch = state.m_sl.sample(cfg.batch_size, state.rng_train)
        _, pgrad = ag.pi_loss(state.networks, sl_batch)
        nets.optimizer_step(
            state.networks.policy_params, pgrad, cfg.lr_policy, state.networks.policy_opt
        )
        state.bump("pi_updates")


def run_episode(state: TrainState, episode_seed: int, algo: str) -> EpisodeRecord:
    """Roll out one episode, storing experience and training per step."""
    cfg = state.config
    env = state.env
    n = env.n_agents
    # The grid scenarios are fixed problem instances by default: the same
    # placements every episode, with stochasticity only inside the episode.
    env.reset(cfg.layout_seed if cfg.layout == "fixed" else episode_seed)
    eta = state.schedule.current_eta(state.episode)
    if algo == "acsil":
        modes = [ag.AVERAGE_POLICY] * n
    else:
        modes = [
            ag.BEST_RESPONSE if state.rng_behavior.random() < eta else ag.AVERAGE_POLICY
            for _ in range(n)
        ]
    rec = EpisodeRecord([[] for _ in range(n)], [[] for _ in range(n)],
                        [[] for _ in range(n)], [[] for _ in range(n)], modes)
    # AC-SIL explores with a flat 10% random-action rate; fictitious
    # self-play explores only inside best-response mode via epsilon-greedy.
    acsil_eps = (
        min(1.0, cfg.eta * state.schedule.epsilon) if algo == "acsil" else 0.0
    )
    done = False
    while not done:
        obs = [env.observe(i) for i in range(n)]
        joint = []
        for i in range(n):
            if algo == "acsil":
                if state.rng_behavior.random() < acsil_eps:
                    a = int(state.rng_behavior.integers(0, env.n_actions))
                else:
                    a = ag.select_action(
                        ag.AVERAGE_POLICY, obs[i], state.networks, 0.0,
                        state.rng_behavior,
                    )
            else:
                a = ag.select_action(
                    modes[i], obs[i], state.networks, state.schedule.epsilon,
                    state.rng_behavior,
                )
            joint.append(a)
        result = env.step(joint, state.rng_env)
        done = result.done
        next_obs = [env.observe(i) for i in range(n)]
        for i in range(n):
            rec.states[i].append(obs[i])
            rec.actions[i].append(joint[i])
            rec.rewards[i].append(float(result.rewards[i]))
            rec.next_states[i].append(next_obs[i])
            if algo != "acsil":
                state.m_rl.push(
                    Transition(obs[i], joint[i], float(result.rewards[i]),
                               next_obs[i], done)
                )
                state.bump("rl_pushes")
                if modes[i] == ag.BEST_RESPONSE:
                    state.m_sl.push(
                        BestResponsePair(obs[i], joint[i]), state.rng_train
                    )
                    state.bump("sl_pushes")
        state.t += 1
        if algo != "acsil":
            _train_step(state)
            if cfg.sync_interval > 0 and state.t % cfg.sync_interval == 0:
                sync_target(state)
        if cfg.decay_unit == "steps":
            decay_schedules(state)
    rec.welfare = social_welfare([sum(r) for r in rec.rewards])
    return rec


def sil_phase(state: TrainState, iterations: int) -> None:
    """Self-imitation rounds: prioritized sample, then the gated Q and
    policy updates. Silently skipped while the buffer is empty."""
    cfg = state.config
    if len(state.m_si) == 0:
        return
    for _ in range(iterations):
        batch = state.m_si.sample(cfg.batch_size, state.rng_train)
        threshold = state.m_si.best_welfare
        q_l, q_grad, gamma = ag.sil_q_loss(
            state.networks, batch, threshold, cfg.baseline
        )
        p_l, p_grad = ag.sil_pi_loss(
            state.networks, batch, threshold, cfg.baseline, advantages=gamma
        )
        nets.optimizer_step(
            state.networks.q_params, q_grad, cfg.lr_q, state.networks.q_opt
        )
        nets.optimizer_step(
            state.networks.policy_params, p_grad, cfg.lr_policy,
            state.networks.policy_opt,
        )
        mean_gamma = float(gamma.mean())
        coeff = ag.effective_mixing_coefficient(state.episode, mean_gamma)
        state.mixing_log.append((state.episode, mean_gamma, coeff))
        state.bump("sil_rounds")


def _acsil_episode_update(state: TrainState, rec: EpisodeRecord) -> None:
    cfg = state.config
    from .buffers import ReturnTransition

    batch = []
    for i in range(state.env.n_agents):
        rets = compute_returns(rec.rewards[i], cfg.gamma)
        for s, a, r, s2 in zip(rec.states[i], rec.actions[i], rets, rec.next_states[i]):
            batch.append(ReturnTransition(s, a, r, s2, rec.welfare, 1.0, i))
    try:
        si_batch = state.m_si.sample(cfg.batch_size, state.rng_train)
    except BufferNotReady:
        si_batch = []
    ag.acsil_update(
        state.networks,
        batch,
        si_batch,
        state.m_si.best_welfare,
        cfg.lr_policy,
        cfg.lr_q,
        cfg.baseline,
    )
    state.bump("acsil_updates")


def end_of_episode(state: TrainState, rec: EpisodeRecord, algo: str) -> None:
    """Returns, welfare gating into the self-imitation buffer, then the
    self-imitation phase for the algorithms that use it."""
    cfg = state.config
    if algo in ("nfsip", "acsil"):
        per_step, ids = [], []
        for i in range(state.env.n_agents):
            rets = compute_returns(rec.rewards[i], cfg.gamma)
            for s, a, r, s2 in zip(
                rec.states[i], rec.actions[i], rets, rec.next_states[i]
            ):
                per_step.append((s, a, r, s2))
                ids.append(i)
        stored = state.m_si.consider_episode(per_step, rec.welfare, ids)
        if stored:
            state.bump("si_stores")
    if algo == "acsil":
        _acsil_episode_update(state, rec)
        sil_phase(state, cfg.sil_iterations)
    elif algo == "nfsip" and cfg.sil_iterations > 0:
        sil_phase(state, cfg.sil_iterations)
    if cfg.decay_unit == "episodes":
        decay_schedules(state)


def run_single(
    config: ExperimentConfig, seed: int, checkpoint_dir: str | None = None
) -> tuple[TrainState, RunMetrics]:
    """One fully seeded training run."""
    state = init_train_state(config, seed)
    metrics = RunMetrics(seed=seed)
    start = time.monotonic()
    for ep in range(config.episodes):
        episode_seed = seed * 1_000_003 + ep
        rec = run_episode(state, episode_seed, config.algo)
        end_of_episode(state, rec, config.algo)
        elapsed = time.monotonic() - start if config.record_walltime else 0.0
        metrics.record(rec.welfare, config.running_avg_window, elapsed)
        state.episode += 1
        if (
            checkpoint_dir
            and config.checkpoint_interval > 0
            and state.episode % config.checkpoint_interval == 0
        ):
            save_checkpoint(state, f"{checkpoint_dir}/ckpt_seed{seed}_ep{state.episode}.txt")
    metrics.counters = dict(state.counters)
    return state, metrics


def save_checkpoint(state: TrainState, path: str) -> None:
    nets.save_params(
        path,
        {
            "q": state.networks.q_params,
            "target_q": state.networks.target_q_params,
            "policy": state.networks.policy_params,
        },
    )


def load_checkpoint(path: str) -> dict[str, nets.ParameterSet]:
    raw = nets.load_params(path)
    return {name: nets.params_from_tensors(t) for name, t in raw.items()}


def run_experiment(
    config: ExperimentConfig, checkpoint_dir: str | None = None
) -> list[RunMetrics]:
    """N independent seeded runs; run r uses base_seed + r."""
    config.validate()
    out = []
    for r in range(config.runs):
        _, metrics = run_single(config, config.base_seed + r, checkpoint_dir)
        out.append(metrics)
    return out


def aggregate(metrics: list[RunMetrics]) -> tuple[np.ndarray, np.ndarray]:
    """Cross-run mean and (population) variance of welfare per episode."""
    arr = np.array([m.welfare for m in metrics])
    return arr.mean(axis=0), arr.var(axis=0)


def policy_distribution(state: TrainState, obs: np.ndarray) -> np.ndarray:
    logits, _ = nets.forward(state.networks.policy_params, obs, head="policy-logits")
    return nets.softmax(logits)
