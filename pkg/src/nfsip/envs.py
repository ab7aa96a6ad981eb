"""Grid-world benchmark simulators: box pushing, fire fighting, search and
rescue, each in a v1 and a harder v2 variant.

All stochasticity flows through an explicit numpy Generator, so a (spec,
seed, action sequence) triple replays bit-identically. Movement is
deterministic with boundary clamping; the only randomness inside `step` is
task completion (per the scenario probability tables) and, in v2 variants,
low-to-high level escalation.

Actions per agent: 0 left, 1 right, 2 up, 3 down, 4 act, 5 stay.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

N_ACTIONS = 6
ACTION_NAMES = ("left", "right", "up", "down", "act", "stay")
MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}

GENERIC = "generic"
FIRETRUCK = "firetruck"
AMBULANCE = "ambulance"

LOW = "low"
HIGH = "high"

DOMAINS = ("box-pushing", "firefighting", "search-rescue")
VARIANTS = ("v1", "v2")

TASK_KIND = {"box-pushing": "box", "firefighting": "fire", "search-rescue": "victim"}


@dataclass
class DomainSpec:
    """One benchmark scenario: grid, team composition, and completion rules.

    completion_table maps level -> list of (min_acting_agents, probability),
    evaluated as "largest satisfied threshold wins". For search-rescue,
    rescue_requirements maps level -> (min firetrucks, min ambulances) and
    completion is certain once both minima are met.
    """

    domain: str
    variant: str
    width: int
    height: int
    agent_counts: dict[str, int]
    n_tasks: int
    completion_table: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    rescue_requirements: dict[str, tuple[int, int]] = field(default_factory=dict)
    escalation_prob: float = 0.0
    horizon: int = 50
    task_reward: float = 10.0

    @property
    def n_agents(self) -> int:
        return sum(self.agent_counts.values())

    @property
    def agent_types(self) -> list[str]:
        return [t for t, n in self.agent_counts.items() for _ in range(n)]

    def validate(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.n_tasks > self.width * self.height:
            raise ValueError("more tasks than grid cells")
        if self.n_agents < 1 or self.n_tasks < 1:
            raise ValueError("need at least one agent and one task")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


# Completion tables straight from the scenario definitions: v1 fires go out
# with probability 0.9 under 2 trucks and certainly under more; v2 high fires
# need more trucks; boxes move deterministically once enough agents push.
FIRE_LOW = [(2, 0.9), (3, 1.0)]
FIRE_HIGH = [(2, 0.75), (3, 0.9), (4, 1.0)]


def make_spec(
    domain: str,
    variant: str,
    width: int | None = None,
    height: int | None = None,
    n_agents: int | None = None,
    n_tasks: int | None = None,
    horizon: int | None = None,
    task_reward: float = 10.0,
) -> DomainSpec:
    """Build a scenario spec; defaults reproduce the full-size instances,
    and every knob can be overridden for scaled-down runs."""
    if domain == "box-pushing":
        w, h = width or 4, height or 4
        spec = DomainSpec(
            domain,
            variant,
            w,
            h,
            {GENERIC: n_agents if n_agents is not None else 5},
            n_tasks if n_tasks is not None else 4,
            completion_table={LOW: [(1, 1.0)] if variant == "v1" else [(2, 1.0)]},
        )
    elif domain == "firefighting":
        w, h = width or 4, height or 4
        spec = DomainSpec(
            domain,
            variant,
            w,
            h,
            {FIRETRUCK: n_agents if n_agents is not None else 10},
            n_tasks if n_tasks is not None else 4,
            completion_table={LOW: FIRE_LOW, HIGH: FIRE_HIGH},
            escalation_prob=0.2 if variant == "v2" else 0.0,
        )
    elif domain == "search-rescue":
        w, h = width or 4, height or 4
        n = n_agents if n_agents is not None else 10
        if n % 2:
            raise ValueError("search-rescue splits agents evenly; need an even count")
        spec = DomainSpec(
            domain,
            variant,
            w,
            h,
            {FIRETRUCK: n // 2, AMBULANCE: n // 2},
            n_tasks if n_tasks is not None else 4,
            rescue_requirements=(
                {LOW: (1, 1)} if variant == "v1" else {LOW: (1, 1), HIGH: (2, 2)}
            ),
            escalation_prob=0.2 if variant == "v2" else 0.0,
        )
    else:
        raise ValueError(f"unknown domain {domain!r}")
    if horizon is not None:
        spec.horizon = horizon
    else:
        spec.horizon = 50 if max(spec.width, spec.height) <= 4 else 80
    spec.task_reward = task_reward
    spec.validate()
    return spec


@dataclass
class Agent:
    id: int
    type: str
    x: int
    y: int


@dataclass
class Task:
    x: int
    y: int
    kind: str
    level: str
    done: bool = False


@dataclass
class EnvState:
    spec: DomainSpec
    agents: list[Agent]
    tasks: list[Task]
    step_count: int = 0

    @property
    def terminal(self) -> bool:
        return all(t.done for t in self.tasks) or self.step_count >= self.spec.horizon

    def copy(self) -> "EnvState":
        return EnvState(
            self.spec,
            [replace(a) for a in self.agents],
            [replace(t) for t in self.tasks],
            self.step_count,
        )


@dataclass
class StepResult:
    state: EnvState
    rewards: np.ndarray
    done: bool


def reset(spec: DomainSpec, seed: int) -> EnvState:
    """Place tasks at distinct cells and agents anywhere (overlap allowed)."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n_cells = spec.width * spec.height
    task_cells = rng.choice(n_cells, size=spec.n_tasks, replace=False)
    kind = TASK_KIND[spec.domain]
    tasks = [
        Task(int(c) % spec.width, int(c) // spec.width, kind, LOW) for c in task_cells
    ]
    agents = []
    for i, atype in enumerate(spec.agent_types):
        c = int(rng.integers(0, n_cells))
        agents.append(Agent(i, atype, c % spec.width, c // spec.width))
    return EnvState(spec, agents, tasks)


def step(state: EnvState, joint_action, rng: np.random.Generator) -> StepResult:
    """One synchronous step: move all agents, then resolve task completions,
    then (v2) escalate remaining low-level tasks."""
    spec = state.spec
    if state.terminal:
        raise ValueError("step called on terminal state")
    actions = list(joint_action)
    if len(actions) != len(state.agents):
        raise ValueError("joint action length does not match agent count")
    if any(not 0 <= a < N_ACTIONS for a in actions):
        raise ValueError("action index out of range")

    nxt = state.copy()
    for agent, a in zip(nxt.agents, actions):
        if a in MOVES:
            dx, dy = MOVES[a]
            agent.x = min(max(agent.x + dx, 0), spec.width - 1)
            agent.y = min(max(agent.y + dy, 0), spec.height - 1)

    rewards = np.zeros(len(nxt.agents))
    for task in nxt.tasks:
        if task.done:
            continue
        actors = [
            ag
            for ag, a in zip(nxt.agents, actions)
            if a == 4 and ag.x == task.x and ag.y == task.y
        ]
        if not actors:
            continue
        p = _completion_prob(spec, task, actors)
        if p > 0.0 and rng.random() < p:
            task.done = True
            share = spec.task_reward / len(actors)
            for ag in actors:
                rewards[ag.id] += share

    if spec.escalation_prob > 0.0:
        for task in nxt.tasks:
            if not task.done and task.level == LOW:
                if rng.random() < spec.escalation_prob:
                    task.level = HIGH

    nxt.step_count += 1
    return StepResult(nxt, rewards, nxt.terminal)


def _completion_prob(spec: DomainSpec, task: Task, actors: list[Agent]) -> float:
    if spec.rescue_requirements:
        need_ft, need_amb = spec.rescue_requirements.get(task.level, (1, 1))
        n_ft = sum(1 for a in actors if a.type == FIRETRUCK)
        n_amb = sum(1 for a in actors if a.type == AMBULANCE)
        return 1.0 if n_ft >= need_ft and n_amb >= need_amb else 0.0
    table = spec.completion_table.get(task.level, [])
    p = 0.0
    for min_count, prob in table:
        if len(actors) >= min_count:
            p = prob
    return p


def obs_length(spec: DomainSpec) -> int:
    """Closed form for the observation vector length."""
    cells = spec.width * spec.height
    type_planes = len(spec.agent_counts)
    task_planes = 3  # low incomplete, high incomplete, done
    return (type_planes + task_planes) * cells + 2 + spec.n_agents


def encode_observation(state: EnvState, agent_id: int) -> np.ndarray:
    """Global occupancy planes plus own position and a one-hot agent id."""
    spec = state.spec
    if not 0 <= agent_id < spec.n_agents:
        raise ValueError(f"invalid agent id {agent_id}")
    w, h = spec.width, spec.height
    cells = w * h
    types = list(spec.agent_counts)
    planes = np.zeros((len(types) + 3, cells))
    for ag in state.agents:
        planes[types.index(ag.type), ag.y * w + ag.x] += 1.0
    for t in state.tasks:
        cell = t.y * w + t.x
        if t.done:
            planes[len(types) + 2, cell] = 1.0
        elif t.level == HIGH:
            planes[len(types) + 1, cell] = 1.0
        else:
            planes[len(types), cell] = 1.0
    me = state.agents[agent_id]
    own = np.array([me.x / max(w - 1, 1), me.y / max(h - 1, 1)])
    one_hot = np.zeros(spec.n_agents)
    one_hot[agent_id] = 1.0
    return np.concatenate([planes.reshape(-1), own, one_hot])


def social_welfare(per_agent_returns) -> float:
    """Sum of per-agent undiscounted episode returns."""
    return float(sum(per_agent_returns))


class GridEnv:
    """Thin stateful wrapper over the functional simulator, matching the
    interface the trainer expects (reset/step/observe)."""

    def __init__(self, spec: DomainSpec):
        spec.validate()
        self.spec = spec
        self.state: EnvState | None = None

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def obs_size(self) -> int:
        return obs_length(self.spec)

    def reset(self, seed: int) -> EnvState:
        self.state = reset(self.spec, seed)
        return self.state

    def step(self, joint_action, rng: np.random.Generator) -> StepResult:
        res = step(self.state, joint_action, rng)
        self.state = res.state
        return res

    def observe(self, agent_id: int) -> np.ndarray:
        return encode_observation(self.state, agent_id)

    def tasks_remaining(self) -> int:
        return sum(1 for t in self.state.tasks if not t.done)
