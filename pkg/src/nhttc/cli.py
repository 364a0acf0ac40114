"""Command-line entry point and the scenario file format.

Scenario files (``.scn``) are YAML documents::

    format_version: 1
    name: three_obstacle
    duration: 150            # frames
    seed: 0
    update_period: 0.1       # s
    budget: {iterations: 165}            # or {milliseconds: 5.0}
    cost: {kappa_goal: 1.0, kappa_col: 1.0, t_goal: 1.0, t_horiz: 5.0, dt_max: 0.1}
    arena: {xmin: -3, xmax: 3, ymin: -3, ymax: 3}   # optional
    resample_goals: false
    agents:
      - name: robot
        kind: Velocity                   # or v / a / dd / sdd / car / scar
        state: [-4.0, 0.0]
        radius: 0.1                      # m, disk kinds
        length: null                     # m, car kinds
        limits: {v_max: 0.3}             # any subset of the control limits
        goal: {point: [4.0, 0.0]}        # or {target: 1, offset: [-0.5, 0.0]}
        controlled: true
        reciprocity: false
        initial_control: [0.0, 0.0]

Unknown keys are rejected. Omitted optional keys take the defaults shown in
``docs``-free form above. Every failure exits nonzero and prints one line
starting with an error code: ``E_USAGE``, ``E_PARSE``, ``E_VALIDATION``,
``E_IO`` or ``E_GRADCHECK``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .cost import CostParams, Problem
from .dynamics import ControlLimits, Model, ModelKind
from .integrate import build_trajectory, softening_signature
from .sim import (
    AgentConfig,
    Arena,
    GoalSpec,
    Scenario,
    generate_random_scenario,
    initial_problem,
    run_scenario,
)

FORMAT_VERSION = 1

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_GRADCHECK = 0, 2, 3, 4

# per-kind gradient tolerances of the acceptance gate
DEFAULT_TOLERANCE = {
    ModelKind.Velocity: 1e-4,
    ModelKind.Acceleration: 1e-4,
    ModelKind.DiffDrive: 1e-4,
    ModelKind.SmoothDiffDrive: 1e-3,
    ModelKind.SimpleCar: 1e-3,
    ModelKind.SmoothCar: 1e-3,
}


class ScenarioError(ValueError):
    """Malformed or invalid scenario file; ``code`` is E_PARSE or E_VALIDATION."""

    def __init__(self, message: str, code: str = "E_VALIDATION"):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

_COST_KEYS = tuple(f.name for f in dataclasses.fields(CostParams))
_LIMIT_KEYS = tuple(f.name for f in dataclasses.fields(ControlLimits))
_ARENA_KEYS = ("xmin", "xmax", "ymin", "ymax")
_AGENT_KEYS = ("name", "kind", "state", "radius", "length", "limits", "goal", "controlled",
               "reciprocity", "initial_control")
_TOP_KEYS = ("format_version", "name", "duration", "seed", "update_period", "budget", "cost",
             "arena", "resample_goals", "agents")


class _Reader:
    """Typed access to a parsed document with field paths and line numbers in errors."""

    def __init__(self, lines: dict):
        self.lines = lines
        self.labels: dict[tuple, str] = {}

    def fail(self, path: tuple, message: str):
        where = _format_path(path, self.labels)
        line = None
        for k in range(len(path), -1, -1):
            line = self.lines.get(path[:k])
            if line is not None:
                break
        suffix = f" (line {line})" if line is not None else ""
        raise ScenarioError(f"{where}: {message}{suffix}")

    def mapping(self, value, path, allowed) -> dict:
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for key in value:
            if key not in allowed:
                self.fail(path + (key,), f"unknown key (allowed: {', '.join(allowed)})")
        return value

    def number(self, value, path, positive=False, allow_none=False):
        if value is None and allow_none:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            self.fail(path, "must be finite")
        if positive and not value > 0:
            self.fail(path, "must be positive")
        return value

    def integer(self, value, path, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(path, f"must be at least {minimum}")
        return value

    def boolean(self, value, path):
        if not isinstance(value, bool):
            self.fail(path, f"expected true or false, got {value!r}")
        return value

    def vector(self, value, path, length=None):
        if not isinstance(value, list):
            self.fail(path, "expected a list of numbers")
        if length is not None and len(value) != length:
            self.fail(path, f"expected {length} values, got {len(value)}")
        return tuple(self.number(v, path + (i,)) for i, v in enumerate(value))


def _format_path(path: tuple, labels: dict | None = None) -> str:
    out = ""
    for k, p in enumerate(path):
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
        if labels and path[:k + 1] in labels:
            out += f" ({labels[path[:k + 1]]})"
    return out or "document"


def _line_map(node, path=(), out=None) -> dict:
    if out is None:
        out = {(): node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            p = path + (key.value,)
            out[p] = key.start_mark.line + 1
            _line_map(value, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            p = path + (i,)
            out[p] = value.start_mark.line + 1
            _line_map(value, p, out)
    return out


def loads_scenario(text: str) -> Scenario:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ScenarioError(f"malformed scenario{where}: {problem}", "E_PARSE") from None
    if node is None:
        raise ScenarioError("empty scenario document", "E_PARSE")
    return scenario_from_dict(data, _Reader(_line_map(node)))


def load_scenario(path) -> Scenario:
    return loads_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_from_dict(data, reader: _Reader | None = None) -> Scenario:
    r = reader or _Reader({})
    top = r.mapping(data, (), _TOP_KEYS)
    if "format_version" not in top:
        r.fail(("format_version",), "missing")
    if top["format_version"] != FORMAT_VERSION:
        r.fail(("format_version",), f"unsupported version {top['format_version']!r} "
                                    f"(expected {FORMAT_VERSION})")
    if "agents" not in top:
        r.fail(("agents",), "missing")
    if not isinstance(top["agents"], list) or not top["agents"]:
        r.fail(("agents",), "expected a non-empty list of agents")

    cost_raw = r.mapping(top.get("cost", {}), ("cost",), _COST_KEYS)
    cost_kw = {}
    for key, value in cost_raw.items():
        p = ("cost", key)
        if key == "dynamic_goal_times":
            cost_kw[key] = r.vector(value, p)
        elif key == "gradient_scheme":
            cost_kw[key] = value
        else:
            cost_kw[key] = r.number(value, p, positive=True)
    try:
        cost = CostParams(**cost_kw)
    except ValueError as exc:
        r.fail(("cost",), str(exc))

    budget = r.mapping(top.get("budget", {"iterations": 165}), ("budget",),
                       ("iterations", "milliseconds"))
    if len(budget) != 1:
        r.fail(("budget",), "give exactly one of iterations or milliseconds")
    iters = ms = None
    if "iterations" in budget:
        iters = r.integer(budget["iterations"], ("budget", "iterations"), minimum=0)
    else:
        ms = r.number(budget["milliseconds"], ("budget", "milliseconds"))
        if ms < 0:
            r.fail(("budget", "milliseconds"), "must be non-negative")

    arena = None
    if top.get("arena") is not None:
        a = r.mapping(top["arena"], ("arena",), _ARENA_KEYS)
        for key in _ARENA_KEYS:
            if key not in a:
                r.fail(("arena", key), "missing")
        try:
            arena = Arena(*(r.number(a[k], ("arena", k)) for k in _ARENA_KEYS))
        except ValueError as exc:
            r.fail(("arena",), str(exc))

    agents = [_agent_from_dict(raw, ("agents", i), r) for i, raw in enumerate(top["agents"])]
    kw = dict(
        agents=tuple(agents), cost=cost, budget_iters=iters, budget_ms=ms,
        update_period=r.number(top.get("update_period", 0.1), ("update_period",), positive=True),
        duration=r.integer(top.get("duration", 100), ("duration",), minimum=0),
        seed=r.integer(top.get("seed", 0), ("seed",)),
        arena=arena,
        resample_goals=r.boolean(top.get("resample_goals", False), ("resample_goals",)),
        name=str(top.get("name", "")),
    )
    try:
        return Scenario(**kw)
    except ValueError as exc:
        r.fail((), str(exc))


def _agent_from_dict(raw, path, r: _Reader) -> AgentConfig:
    a = r.mapping(raw, path, _AGENT_KEYS)
    if a.get("name"):
        r.labels[path] = str(a["name"])
    label = _format_path(path, r.labels)
    if "kind" not in a:
        r.fail(path + ("kind",), "missing")
    try:
        kind = ModelKind.parse(a["kind"])
    except ValueError as exc:
        r.fail(path + ("kind",), str(exc))
    if "state" not in a:
        r.fail(path + ("state",), "missing")
    state = r.vector(a["state"], path + ("state",), kind.state_dim)
    limits_raw = r.mapping(a.get("limits", {}), path + ("limits",), _LIMIT_KEYS)
    try:
        limits = ControlLimits(**{k: r.number(v, path + ("limits", k), positive=True)
                                  for k, v in limits_raw.items()})
    except ValueError as exc:
        r.fail(path + ("limits",), str(exc))
    goal = None
    if a.get("goal") is not None:
        g = r.mapping(a["goal"], path + ("goal",), ("point", "target", "offset"))
        try:
            goal = GoalSpec(
                point=r.vector(g["point"], path + ("goal", "point"), 2) if "point" in g else None,
                target=r.integer(g["target"], path + ("goal", "target"), 0) if "target" in g
                else None,
                offset=r.vector(g.get("offset", [0.0, 0.0]), path + ("goal", "offset"), 2))
        except ValueError as exc:
            r.fail(path + ("goal",), str(exc))
    try:
        return AgentConfig(
            kind=kind, state=state,
            radius=r.number(a.get("radius", 0.1), path + ("radius",), positive=True),
            length=r.number(a.get("length"), path + ("length",), positive=True, allow_none=True),
            limits=limits, goal=goal,
            controlled=r.boolean(a.get("controlled", True), path + ("controlled",)),
            reciprocity=r.boolean(a.get("reciprocity", False), path + ("reciprocity",)),
            initial_control=r.vector(a.get("initial_control", [0.0, 0.0]),
                                     path + ("initial_control",), 2),
            name=str(a.get("name", "")))
    except ValueError as exc:
        raise ScenarioError(f"{label}: {exc}") from None


def scenario_to_dict(scenario: Scenario) -> dict:
    budget = ({"iterations": scenario.budget_iters} if scenario.budget_iters is not None
              else {"milliseconds": scenario.budget_ms})
    cost = dataclasses.asdict(scenario.cost)
    cost["dynamic_goal_times"] = list(cost["dynamic_goal_times"])
    out = {
        "format_version": FORMAT_VERSION,
        "name": scenario.name,
        "duration": scenario.duration,
        "seed": scenario.seed,
        "update_period": scenario.update_period,
        "budget": budget,
        "cost": cost,
        "arena": dataclasses.asdict(scenario.arena) if scenario.arena is not None else None,
        "resample_goals": scenario.resample_goals,
        "agents": [],
    }
    for a in scenario.agents:
        goal = None
        if a.goal is not None:
            goal = ({"point": list(a.goal.point)} if a.goal.point is not None
                    else {"target": a.goal.target})
            goal["offset"] = list(a.goal.offset)
        out["agents"].append({
            "name": a.name,
            "kind": a.kind.name,
            "state": list(a.state),
            "radius": a.radius,
            "length": a.length,
            "limits": dataclasses.asdict(a.limits),
            "goal": goal,
            "controlled": a.controlled,
            "reciprocity": a.reciprocity,
            "initial_control": list(a.initial_control),
        })
    return out


def dumps_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False,
                          default_flow_style=None, width=100)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(scenario), encoding="utf-8")


def bundled_scenarios() -> list[str]:
    root = resources.files("nhttc") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def resolve_scenario_path(arg: str) -> Path:
    """A file path, or the name of a bundled scenario (with or without ``.scn``)."""
    path = Path(arg)
    if path.exists():
        return path
    name = arg[:-4] if arg.endswith(".scn") else arg
    if "/" not in arg and name in bundled_scenarios():
        return Path(str(resources.files("nhttc") / "scenarios" / f"{name}.scn"))
    raise FileNotFoundError(f"scenario file not found: {arg}")


# ---------------------------------------------------------------------------
# run output
# ---------------------------------------------------------------------------

TRAJECTORY_COLUMNS = ("frame", "agent", "kind", "s0", "s1", "s2", "s3", "s4", "u0", "u1",
                      "tau", "cost", "iterations")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_table(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    kinds = [a.kind.name for a in result.scenario.agents]
    for rec in result.records:
        for i, state in enumerate(rec.states):
            s = [_fmt(v) for v in state] + [""] * (5 - state.shape[0])
            rep = rec.reports[i]
            tail = ([_fmt(rep.tau), _fmt(rep.total), str(rec.iterations[i])] if rep is not None
                    else ["", "", ""])
            w.writerow([rec.frame, i, kinds[i], *s, _fmt(rec.controls[i][0]),
                        _fmt(rec.controls[i][1]), *tail])
    return buf.getvalue()


def metrics_summary(result) -> dict:
    m = result.metrics
    period = result.scenario.update_period
    return {
        "scenario": result.scenario.name,
        "frames": m.frames,
        "colliding_frames": m.colliding_frames,
        "collision_free_fraction": m.collision_free_fraction,
        "arrival_frames": list(m.arrival_frames),
        "arrival_times_s": [None if f is None else round(f * period, 12)
                            for f in m.arrival_frames],
        "all_arrivals": [list(a) for a in m.all_arrivals],
        "mean_iterations": list(m.mean_iterations),
        "mean_control_change": list(m.mean_control_change),
    }


# ---------------------------------------------------------------------------
# cost field and gradient check
# ---------------------------------------------------------------------------

def cost_field(problem: Problem, n: int):
    """Total cost on an n x n grid spanning the control box, endpoints included.

    Returns (axis0, axis1, costs) with ``costs[i, j]`` at (axis0[i], axis1[j]).
    """
    if n < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    b = problem.model.control_bounds()
    a0 = np.linspace(-b[0], b[0], n)
    a1 = np.linspace(-b[1], b[1], n)
    out = np.empty((n, n))
    from .integrate import scratch
    vb, mb = scratch()
    u = np.empty(2)
    for i, x in enumerate(a0):
        for j, y in enumerate(a1):
            u[0] = x
            u[1] = y
            out[i, j] = problem.evaluate(u, vb, mb).total
    return a0, a1, out


@dataclass(frozen=True)
class GradcheckReport:
    kind: ModelKind
    samples: int
    skipped: int
    max_error: float
    median_error: float
    tolerance: float
    errors: np.ndarray

    @property
    def passed(self) -> bool:
        return self.samples > 0 and self.max_error <= self.tolerance


def _random_state(kind: ModelKind, rng, lim: ControlLimits) -> np.ndarray:
    xy = rng.uniform(-1.0, 1.0, 2)
    th = rng.uniform(-math.pi, math.pi)
    if kind == ModelKind.Velocity:
        return xy
    if kind == ModelKind.Acceleration:
        speed = rng.uniform(0.0, lim.v_max)
        ang = rng.uniform(-math.pi, math.pi)
        return np.r_[xy, speed * math.cos(ang), speed * math.sin(ang)]
    if kind in (ModelKind.DiffDrive, ModelKind.SimpleCar):
        return np.r_[xy, th]
    if kind == ModelKind.SmoothDiffDrive:
        return np.r_[xy, th, rng.uniform(-lim.v_max, lim.v_max), rng.uniform(-lim.w_max, lim.w_max)]
    return np.r_[xy, th, rng.uniform(-lim.v_max, lim.v_max),
                 rng.uniform(-lim.phi_max, lim.phi_max)]


def gradient_check(kind, seed: int = 0, n_samples: int = 500, tolerance: float | None = None,
                   h: float = 1e-5, params: CostParams | None = None,
                   max_draws_factor: int = 50) -> GradcheckReport:
    """Analytic total-cost gradient vs central differences on random worlds.

    Samples whose stencil crosses a kink or jump of the cost are skipped:
    infinite cost, a change of the first-hit obstacle or contact segment,
    a grazing contact, a change in where constraint softening is active, or a
    robot sitting on its goal.
    """
    kind = ModelKind.parse(kind)
    tol = DEFAULT_TOLERANCE[kind] if tolerance is None else float(tolerance)
    params = params or CostParams()
    rng = np.random.default_rng(seed)
    lim = ControlLimits()
    model = Model(kind, lim, radius=0.1, length=0.4 if kind.is_car else None)
    obstacle_model = Model(ModelKind.Velocity, radius=0.1)
    bounds = model.control_bounds()
    errors = []
    skipped = 0
    draws = 0
    while len(errors) < n_samples and draws < max_draws_factor * max(n_samples, 1):
        draws += 1
        state = _random_state(kind, rng, lim)
        u = rng.uniform(-bounds, bounds)
        center = state[:2]
        obstacles = []
        for _ in range(rng.integers(0, 4)):
            dist = rng.uniform(0.5, 2.5)
            ang = rng.uniform(-math.pi, math.pi)
            p = center + dist * np.array([math.cos(ang), math.sin(ang)])
            head = ang + math.pi + rng.uniform(-0.6, 0.6)
            v = rng.uniform(0.05, 0.3) * np.array([math.cos(head), math.sin(head)])
            om = dataclasses.replace(obstacle_model, radius=float(rng.uniform(0.1, 0.3)))
            obstacles.append(build_trajectory(om, p, v, params.t_horiz, params.dt_max))
        goal = center + rng.uniform(-2.0, 2.0, 2)
        if rng.random() < 0.3:
            gv = rng.uniform(-0.3, 0.3, 2)
            problem = Problem.create(model, state, params, goal_trajectory=lambda t: goal + gv * t,
                                     obstacles=obstacles)
        else:
            problem = Problem.create(model, state, params, goal=goal, obstacles=obstacles)
        reports = [problem.evaluate(u)]
        for j in range(2):
            for sgn in (1.0, -1.0):
                du = np.zeros(2)
                du[j] = sgn * h
                reports.append(problem.evaluate(u + du))
        if not _smooth_stencil(problem, model, state, u, h, reports, params):
            skipped += 1
            continue
        fd = np.array([(reports[1].total - reports[2].total) / (2 * h),
                       (reports[3].total - reports[4].total) / (2 * h)])
        g = reports[0].gradient
        errors.append(float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8)))
    errs = np.array(errors)
    return GradcheckReport(kind, len(errors), skipped,
                           float(errs.max()) if errs.size else math.inf,
                           float(np.median(errs)) if errs.size else math.inf, tol, errs)


def _smooth_stencil(problem, model, state, u, h, reports, params) -> bool:
    first = reports[0]
    if not all(math.isfinite(r.total) for r in reports):
        return False
    if any(r.grazing for r in reports):
        return False
    key = (math.isinf(first.tau), first.critical_obstacle, first.segment)
    if any((math.isinf(r.tau), r.critical_obstacle, r.segment) != key for r in reports):
        return False
    if first.goal_term / params.kappa_goal < 1e-3:
        return False
    horizon = problem.goal_times[-1] if problem.goal_times.size else 0.0
    if first.segment is not None:
        horizon = max(horizon, problem.times[first.segment + 1])
    sig = softening_signature(model, state, u, horizon, params.dt_max)
    for j in range(2):
        for sgn in (1.0, -1.0):
            du = np.zeros(2)
            du[j] = sgn * h
            if softening_signature(model, state, u + du, horizon, params.dt_max) != sig:
                return False
    return True


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"E_USAGE: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _load(args) -> Scenario:
    scenario = load_scenario(resolve_scenario_path(args.scenario))
    if getattr(args, "budget_iters", None) is not None:
        scenario = scenario.with_budget(iters=args.budget_iters)
    elif getattr(args, "budget_ms", None) is not None:
        scenario = scenario.with_budget(ms=args.budget_ms)
    if getattr(args, "seed", None) is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    if getattr(args, "duration", None) is not None:
        scenario = dataclasses.replace(scenario, duration=args.duration)
    return scenario


def cmd_run(args) -> int:
    scenario = _load(args)
    result = run_scenario(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(trajectory_table(result), encoding="utf-8")
    summary = metrics_summary(result)
    (out / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"{scenario.name or args.scenario}: {summary['frames']} frames, "
          f"collision-free {summary['collision_free_fraction']:.4f}, "
          f"arrivals {summary['arrival_frames']}")
    return EXIT_OK


def cmd_costfield(args) -> int:
    scenario = _load(args)
    agent = args.agent
    if agent is None:
        agent = next(i for i, a in enumerate(scenario.agents) if a.controlled)
    if args.grid < 2:
        raise ScenarioError(f"--grid must be at least 2, got {args.grid}")
    problem = initial_problem(scenario, agent)
    a0, a1, costs = cost_field(problem, args.grid)
    logc = np.log(costs + 1.0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("u0", "u1", "log_cost"))
    for i, x in enumerate(a0):
        for j, y in enumerate(a1):
            w.writerow((_fmt(x), _fmt(y), "inf" if math.isinf(logc[i, j]) else _fmt(logc[i, j])))
    out = Path(args.out)
    if out.is_dir():
        out = out / "costfield.csv"
    out.write_text(buf.getvalue(), encoding="utf-8")
    if np.isfinite(costs).any():
        i, j = np.unravel_index(np.argmin(costs), costs.shape)
        print(f"argmin u = ({a0[i]:.6g}, {a1[j]:.6g}), cost {costs[i, j]:.6g}")
    else:
        print("all sampled controls collide immediately (cost inf)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kinds = list(ModelKind) if args.kind == "all" else [ModelKind.parse(args.kind)]
    ok = True
    for kind in kinds:
        rep = gradient_check(kind, seed=args.seed, n_samples=args.samples,
                             tolerance=args.tolerance)
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {kind.name}: {rep.samples} samples ({rep.skipped} skipped), "
              f"max rel err {rep.max_error:.3e}, median {rep.median_error:.3e}, "
              f"tolerance {rep.tolerance:.1e}")
        ok &= rep.passed
    if not ok:
        print("E_GRADCHECK: analytic gradient disagrees with finite differences",
              file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_generate(args) -> int:
    scenario = generate_random_scenario(
        args.seed if args.seed is not None else 0, n_obstacles=args.obstacles,
        kind=args.kind or "v", duration=args.duration if args.duration is not None else 1000)
    out = Path(args.out)
    if out.is_dir():
        out = out / f"{scenario.name}.scn"
    save_scenario(scenario, out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nhttc", description="Time-to-collision control optimization tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def budget(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--budget-ms", type=float, help="wall-clock planning budget per step")
        g.add_argument("--budget-iters", type=int, help="iteration budget per step")

    run = sub.add_parser("run", help="simulate a scenario and write its trajectory table")
    run.add_argument("--scenario", required=True)
    budget(run)
    run.add_argument("--seed", type=int)
    run.add_argument("--duration", type=int, help="frames to simulate")
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=cmd_run)

    cf = sub.add_parser("costfield", help="sample log(C+1) over the control box")
    cf.add_argument("--scenario", required=True)
    cf.add_argument("--agent", type=int)
    cf.add_argument("--grid", type=int, default=101)
    cf.add_argument("--out", required=True, help="output CSV path or directory")
    cf.set_defaults(func=cmd_costfield)

    gc = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    gc.add_argument("--kind", default="all", help="model kind or 'all'")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--samples", type=int, default=500)
    gc.add_argument("--tolerance", type=float)
    gc.set_defaults(func=cmd_gradcheck)

    gen = sub.add_parser("generate", help="write a random obstacle scenario")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--kind")
    gen.add_argument("--obstacles", type=int, default=40)
    gen.add_argument("--duration", type=int)
    gen.add_argument("--out", required=True, help="output .scn path or directory")
    gen.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"E_IO: {exc.strerror + ': ' + str(exc.filename) if exc.filename else exc}",
              file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"E_VALIDATION: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
