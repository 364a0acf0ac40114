"""Deterministic multi-agent simulation at a fixed control rate.

Every frame, each controlled agent plans against a snapshot of everyone else
taken at the start of the frame: the other agents are assumed to keep their
last executed control, their futures are sampled once per frame and shared by
all planners. Then all agents advance together over one update period.

Collisions are only recorded, never resolved: overlapping disks keep moving,
and a frame counts as colliding when any pair involving a controlled agent
overlaps at the frame boundary.
"""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostParams, CostReport, Problem
from .dynamics import ControlLimits, Model, ModelKind, _project_full
from .integrate import _trajectories, scratch, time_grid
from .optimizer import OptimizerConfig, optimize


@dataclass(frozen=True)
class GoalSpec:
    """Static goal ``point``, or follow agent ``target`` at a world-frame ``offset``."""

    point: tuple[float, float] | None = None
    target: int | None = None
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if (self.point is None) == (self.target is None):
            raise ValueError("a goal needs exactly one of point or target")
        if self.point is not None:
            object.__setattr__(self, "point", _pair(self.point, "goal point"))
        object.__setattr__(self, "offset", _pair(self.offset, "goal offset"))

    @property
    def is_dynamic(self) -> bool:
        return self.target is not None


@dataclass(frozen=True)
class AgentConfig:
    kind: ModelKind
    state: tuple[float, ...]
    radius: float = 0.1
    length: float | None = None
    limits: ControlLimits = field(default_factory=ControlLimits)
    goal: GoalSpec | None = None
    controlled: bool = True
    reciprocity: bool = False
    initial_control: tuple[float, float] = (0.0, 0.0)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        object.__setattr__(self, "state", tuple(float(v) for v in self.state))
        object.__setattr__(self, "initial_control",
                           _pair(self.initial_control, "initial control"))
        if len(self.state) != self.kind.state_dim:
            raise ValueError(f"{self.kind.name} state needs {self.kind.state_dim} values, "
                             f"got {len(self.state)}")
        if not all(math.isfinite(v) for v in self.state):
            raise ValueError("state values must be finite")
        if self.controlled and self.goal is None:
            raise ValueError("a controlled agent needs a goal")
        self.model  # validates radius / length

    @property
    def model(self) -> Model:
        return Model(self.kind, self.limits, self.radius, self.length)


@dataclass(frozen=True)
class Arena:
    """Axis-aligned box; passive agents bounce off it and new goals are drawn in it."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("arena bounds must satisfy min < max")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class Scenario:
    agents: tuple[AgentConfig, ...]
    cost: CostParams = field(default_factory=CostParams)
    budget_iters: int | None = 165
    budget_ms: float | None = None
    update_period: float = 0.1
    duration: int = 100
    seed: int = 0
    arena: Arena | None = None
    resample_goals: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise ValueError("a scenario needs at least one agent")
        if not self.update_period > 0:
            raise ValueError("update_period must be positive")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.resample_goals and self.arena is None:
            raise ValueError("goal resampling needs an arena")
        self.optimizer_config()
        for i, agent in enumerate(self.agents):
            goal = agent.goal
            if goal is not None and goal.target is not None:
                if not 0 <= goal.target < len(self.agents) or goal.target == i:
                    raise ValueError(f"agent {i}: goal target {goal.target} is not another agent")

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(budget_ms=self.budget_ms, max_iterations=self.budget_iters,
                               projection_dt=self.update_period)

    def with_budget(self, *, iters: int | None = None, ms: float | None = None) -> "Scenario":
        return replace(self, budget_iters=iters, budget_ms=ms)


@dataclass
class World:
    frame: int
    states: list[np.ndarray]
    controls: list[np.ndarray]
    goals: list[np.ndarray | None]
    rng: np.random.Generator
    arrivals: list[list[int]]
    precompute_count: int = 0

    @classmethod
    def initial(cls, scenario: Scenario) -> "World":
        states = [np.array(a.state) for a in scenario.agents]
        controls = [np.array(a.initial_control) for a in scenario.agents]
        goals = [np.array(a.goal.point) if a.goal is not None and a.goal.point is not None
                 else None for a in scenario.agents]
        return cls(0, states, controls, goals, np.random.default_rng(scenario.seed),
                   [[] for _ in scenario.agents])

    def copy(self) -> "World":
        return World(self.frame, [s.copy() for s in self.states],
                     [u.copy() for u in self.controls],
                     [None if g is None else g.copy() for g in self.goals],
                     copy.deepcopy(self.rng), [list(a) for a in self.arrivals],
                     self.precompute_count)


@dataclass(frozen=True)
class FrameRecord:
    """Agent states at the start of the frame and the controls executed during it."""

    frame: int
    states: tuple[np.ndarray, ...]
    controls: tuple[np.ndarray, ...]
    reports: tuple[CostReport | None, ...]
    iterations: tuple[int, ...]
    collisions: tuple[tuple[int, int], ...]
    goals: tuple[np.ndarray | None, ...]


@dataclass(frozen=True)
class RunMetrics:
    frames: int
    colliding_frames: int
    collision_free_fraction: float
    arrival_frames: tuple[int | None, ...]
    all_arrivals: tuple[tuple[int, ...], ...]
    mean_iterations: tuple[float | None, ...]
    mean_control_change: tuple[float | None, ...]
    cost_series: np.ndarray
    control_series: np.ndarray


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    records: tuple[FrameRecord, ...]
    metrics: RunMetrics


def apply_reciprocity(previous, optimized, enabled: bool) -> np.ndarray:
    """Midpoint of the previous and the fresh control when enabled."""
    prev = np.asarray(previous, dtype=np.float64)
    new = np.asarray(optimized, dtype=np.float64)
    if prev.shape != new.shape:
        raise ValueError(f"control shapes differ: {prev.shape} vs {new.shape}")
    return 0.5 * (prev + new) if enabled else new.copy()


class _Snapshot:
    """Futures of every agent under its current control, sampled once per frame."""

    def __init__(self, models, world: World, params: CostParams):
        n = len(models)
        self.times = time_grid(params.t_horiz, params.dt_max)
        n_t = self.times.shape[0]
        kinds = np.array([int(m.kind) for m in models], dtype=np.int64)
        x0 = np.zeros((n, 5))
        for i, s in enumerate(world.states):
            x0[i, :s.shape[0]] = s
        us = np.array(world.controls, dtype=np.float64).reshape(n, 2)
        prms = np.array([m.packed() for m in models])
        states = np.empty((n, n_t, 5))
        self.centers = np.empty((n, n_t, 2))
        vb, _ = scratch()
        _trajectories(kinds, x0, us, prms, self.times, states, self.centers, vb)
        self.oc = np.ascontiguousarray(self.centers.transpose(1, 0, 2))
        self.ov = np.diff(self.oc, axis=0) / np.diff(self.times)[:, None, None]
        self.radii = np.array([m.collision_radius for m in models])
        world.precompute_count += n

    def others(self, i: int):
        keep = np.arange(self.radii.shape[0]) != i
        return (np.ascontiguousarray(self.oc[:, keep]), np.ascontiguousarray(self.ov[:, keep]),
                self.radii[keep])

    def center_at(self, j: int, t: float) -> np.ndarray:
        c = self.centers[j]
        return np.array([np.interp(t, self.times, c[:, 0]), np.interp(t, self.times, c[:, 1])])


def _centers(models, states) -> np.ndarray:
    out = np.empty((len(models), 2))
    for i, (m, s) in enumerate(zip(models, states)):
        if m.kind.is_car:
            half = 0.5 * m.length
            out[i] = (s[0] + half * math.cos(s[2]), s[1] + half * math.sin(s[2]))
        else:
            out[i] = s[:2]
    return out


def overlapping_pairs(centers: np.ndarray, radii: np.ndarray) -> list[tuple[int, int]]:
    """Index pairs (i < j) whose disks overlap."""
    d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    hit = d < radii[:, None] + radii[None, :]
    i, j = np.nonzero(np.triu(hit, k=1))
    return list(zip(i.tolist(), j.tolist()))


def _goal_now(scenario: Scenario, world: World, centers: np.ndarray, i: int):
    goal = scenario.agents[i].goal
    if goal is None:
        return None
    if goal.target is not None:
        return centers[goal.target] + np.array(goal.offset)
    return world.goals[i]


def _advance(models, states, controls, period: float, dt_max: float) -> list[np.ndarray]:
    n = len(models)
    times = time_grid(period, dt_max)
    kinds = np.array([int(m.kind) for m in models], dtype=np.int64)
    x0 = np.zeros((n, 5))
    for i, s in enumerate(states):
        x0[i, :s.shape[0]] = s
    us = np.array(controls, dtype=np.float64).reshape(n, 2)
    prms = np.array([m.packed() for m in models])
    out = np.empty((n, times.shape[0], 5))
    centers = np.empty((n, times.shape[0], 2))
    vb, _ = scratch()
    _trajectories(kinds, x0, us, prms, times, out, centers, vb)
    return [out[i, -1, :m.state_dim].copy() for i, m in enumerate(models)]


def _reflect(scenario: Scenario, models, states, controls):
    box = scenario.arena
    for i, agent in enumerate(scenario.agents):
        if agent.controlled or models[i].kind != ModelKind.Velocity:
            continue
        x, y = states[i]
        u = controls[i]
        if (x < box.xmin and u[0] < 0) or (x > box.xmax and u[0] > 0):
            u[0] = -u[0]
        if (y < box.ymin and u[1] < 0) or (y > box.ymax and u[1] > 0):
            u[1] = -u[1]


def _planning_problem(scenario: Scenario, world: World, snap: _Snapshot, models, i: int) -> Problem:
    agent = scenario.agents[i]
    params = scenario.cost
    oc, ov, orad = snap.others(i)
    if agent.goal.target is not None:
        goal_times = np.array(sorted(params.dynamic_goal_times))
        offset = np.array(agent.goal.offset)
        goal_points = np.array([snap.center_at(agent.goal.target, t) + offset
                                for t in goal_times])
    else:
        goal_times = np.array([params.t_goal])
        goal_points = world.goals[i].reshape(1, 2)
    return Problem(models[i], world.states[i], params, goal_times, goal_points,
                   snap.times, oc, ov, orad)


def initial_problem(scenario: Scenario, agent: int) -> Problem:
    """Cost problem agent ``agent`` faces at frame 0."""
    if not 0 <= agent < len(scenario.agents) or not scenario.agents[agent].controlled:
        raise ValueError(f"agent {agent} is not a controlled agent of the scenario")
    models = [a.model for a in scenario.agents]
    world = World.initial(scenario)
    return _planning_problem(scenario, world, _Snapshot(models, world, scenario.cost), models,
                             agent)


def step_world(world: World, scenario: Scenario, models=None) -> tuple[World, FrameRecord]:
    """Plan for every controlled agent, then advance everyone by one update period."""
    if models is None:
        models = [a.model for a in scenario.agents]
    config = scenario.optimizer_config()
    nxt = world.copy()
    t_frame = time.perf_counter()
    controlled = [i for i, a in enumerate(scenario.agents) if a.controlled]
    snap = _Snapshot(models, nxt, scenario.cost) if controlled else None
    precompute_s = time.perf_counter() - t_frame
    centers = _centers(models, world.states)
    vb, mb = scratch()

    executed = [u.copy() for u in world.controls]
    reports: list[CostReport | None] = [None] * len(models)
    iterations = [0] * len(models)
    for i in controlled:
        t_agent = time.perf_counter()
        agent = scenario.agents[i]
        model = models[i]
        problem = _planning_problem(scenario, world, snap, models, i)
        best, trace = optimize(problem, world.controls[i], config,
                               start_time=t_agent - precompute_s)
        u = apply_reciprocity(world.controls[i], best, agent.reciprocity)
        _project_full(int(model.kind), problem.state, u.copy(), scenario.update_period,
                      problem.prm, u)
        executed[i] = u
        reports[i] = problem.evaluate(u, vb, mb)
        iterations[i] = trace.n_iterations

    collisions = tuple(overlapping_pairs(centers, np.array([m.collision_radius for m in models])))
    goals = tuple(_goal_now(scenario, world, centers, i) for i in range(len(models)))
    record = FrameRecord(world.frame, tuple(s.copy() for s in world.states),
                         tuple(u.copy() for u in executed), tuple(reports), tuple(iterations),
                         collisions, goals)

    for i in controlled:
        goal = goals[i]
        if goal is not None and np.linalg.norm(centers[i] - goal) <= models[i].collision_radius:
            nxt.arrivals[i].append(world.frame)
            if scenario.resample_goals and agent_goal_is_static(scenario, i):
                box = scenario.arena
                nxt.goals[i] = np.array([nxt.rng.uniform(box.xmin, box.xmax),
                                         nxt.rng.uniform(box.ymin, box.ymax)])

    nxt.states = _advance(models, world.states, executed, scenario.update_period,
                          scenario.cost.dt_max)
    nxt.controls = executed
    if scenario.arena is not None:
        _reflect(scenario, models, nxt.states, nxt.controls)
    nxt.frame = world.frame + 1
    return nxt, record


def agent_goal_is_static(scenario: Scenario, i: int) -> bool:
    goal = scenario.agents[i].goal
    return goal is not None and goal.point is not None


def run_scenario(scenario: Scenario, duration: int | None = None) -> RunResult:
    """Step the world ``duration`` frames (default: the scenario's) and summarize."""
    n_frames = scenario.duration if duration is None else int(duration)
    models = [a.model for a in scenario.agents]
    world = World.initial(scenario)
    records = []
    for _ in range(n_frames):
        world, rec = step_world(world, scenario, models)
        records.append(rec)
    return RunResult(scenario, tuple(records), summarize(scenario, records, world))


def summarize(scenario: Scenario, records, world: World | None = None) -> RunMetrics:
    n_agents = len(scenario.agents)
    controlled = {i for i, a in enumerate(scenario.agents) if a.controlled}
    colliding = sum(1 for r in records
                    if any(i in controlled or j in controlled for i, j in r.collisions))
    n = len(records)
    costs = np.full((n, n_agents), np.nan)
    controls = np.zeros((n, n_agents, 2))
    for k, r in enumerate(records):
        for i in range(n_agents):
            controls[k, i] = r.controls[i]
            if r.reports[i] is not None:
                costs[k, i] = r.reports[i].total
    arrivals = [[] for _ in range(n_agents)]
    if world is not None:
        arrivals = world.arrivals
    mean_iters = tuple(float(np.mean([r.iterations[i] for r in records]))
                       if i in controlled and records else None for i in range(n_agents))
    changes = []
    for i in range(n_agents):
        if i not in controlled or n == 0:
            changes.append(None)
            continue
        prev = np.vstack([np.array(scenario.agents[i].initial_control), controls[:-1, i]])
        changes.append(float(np.mean(np.linalg.norm(controls[:, i] - prev, axis=1))))
    return RunMetrics(
        frames=n,
        colliding_frames=colliding,
        collision_free_fraction=1.0 - colliding / n if n else 1.0,
        arrival_frames=tuple(a[0] if a else None for a in arrivals),
        all_arrivals=tuple(tuple(a) for a in arrivals),
        mean_iterations=mean_iters,
        mean_control_change=tuple(changes),
        cost_series=costs,
        control_series=controls,
    )


def generate_random_scenario(seed: int, n_obstacles: int = 40,
                             arena: Arena = Arena(-3.0, 3.0, -3.0, 3.0),
                             speed_range: tuple[float, float] = (0.1, 0.3),
                             kind: ModelKind | str = ModelKind.Velocity,
                             obstacle_radius: float = 0.1, agent_radius: float = 0.1,
                             car_length: float = 0.2, clearance: float = 0.5,
                             duration: int = 1000, budget_iters: int | None = 165,
                             budget_ms: float | None = None) -> Scenario:
    """One controlled agent among linear-velocity obstacles, all placed uniformly.

    Obstacles start at least ``clearance`` from the agent and from each other
    (beyond touching); goals are redrawn uniformly in the arena on arrival.
    """
    if n_obstacles < 0:
        raise ValueError("n_obstacles must be non-negative")
    lo, hi = speed_range
    if not 0 <= lo <= hi:
        raise ValueError("speed range must satisfy 0 <= low <= high")
    kind = ModelKind.parse(kind)
    rng = np.random.default_rng(seed)
    start = rng.uniform([arena.xmin, arena.ymin], [arena.xmax, arena.ymax])
    goal = rng.uniform([arena.xmin, arena.ymin], [arena.xmax, arena.ymax])
    heading = float(rng.uniform(-math.pi, math.pi))
    if kind in (ModelKind.Velocity,):
        state = (start[0], start[1])
    elif kind == ModelKind.Acceleration:
        state = (start[0], start[1], 0.0, 0.0)
    elif kind.state_dim == 3:
        state = (start[0], start[1], heading)
    else:
        state = (start[0], start[1], heading, 0.0, 0.0)
    robot = AgentConfig(kind, state, radius=agent_radius,
                        length=car_length if kind.is_car else None,
                        goal=GoalSpec(point=tuple(goal)), name="robot")
    robot_center = _centers([robot.model], [np.array(state)])[0]
    robot_r = robot.model.collision_radius
    placed: list[np.ndarray] = []
    agents = [robot]
    attempts = 0
    while len(placed) < n_obstacles:
        attempts += 1
        if attempts > 100000:
            raise ValueError("arena too crowded to place obstacles with the requested clearance")
        p = rng.uniform([arena.xmin, arena.ymin], [arena.xmax, arena.ymax])
        if np.linalg.norm(p - robot_center) < robot_r + obstacle_radius + clearance:
            continue
        if any(np.linalg.norm(p - q) < 2 * obstacle_radius + clearance for q in placed):
            continue
        placed.append(p)
        speed = rng.uniform(lo, hi)
        angle = rng.uniform(-math.pi, math.pi)
        vel = (speed * math.cos(angle), speed * math.sin(angle))
        agents.append(AgentConfig(ModelKind.Velocity, (p[0], p[1]), radius=obstacle_radius,
                                  controlled=False, initial_control=vel,
                                  limits=ControlLimits(v_max=max(hi, 1e-9))))
    return Scenario(tuple(agents), duration=duration, seed=seed, arena=arena,
                    resample_goals=True, budget_iters=budget_iters, budget_ms=budget_ms,
                    name=f"random-{kind.name}-{seed}")


def collision_free_fractions(kind, budget_iters: int, seeds, frames: int = 1000,
                             **generator_kw) -> np.ndarray:
    """Collision-free frame fraction of the random obstacle scene, one entry per seed."""
    out = []
    for seed in seeds:
        scenario = generate_random_scenario(int(seed), kind=kind, duration=frames,
                                            budget_iters=budget_iters, **generator_kw)
        out.append(run_scenario(scenario).metrics.collision_free_fraction)
    return np.array(out)


def _pair(value, what: str) -> tuple[float, float]:
    v = tuple(float(x) for x in value)
    if len(v) != 2 or not all(math.isfinite(x) for x in v):
        raise ValueError(f"{what} must be two finite numbers, got {value!r}")
    return v
