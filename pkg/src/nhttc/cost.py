"""Goal and time-to-collision costs with their control gradients.

The total cost of a constant control ``u`` is

    C(u) = kappa_goal * |center(x(t_goal, u)) - goal|  +  kappa_col / tau(u)

where ``tau`` is the time to the first contact with any obstacle inside the
horizon (the collision term is 0 when there is none and +inf when the robot
already overlaps an obstacle). With a moving goal the first term is averaged
over several look-ahead times.

The collision gradient comes from implicitly differentiating the contact
condition |p_robot(tau, u) - p_obs(tau)|^2 = R^2. The trajectories entering
the contact search are piecewise linear between samples, so the condition is
differentiated on those same segments: this gives the exact derivative of
the tau that the search actually returns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import literally, njit

from .dynamics import (
    ACCELERATION,
    DIFF_DRIVE,
    SIMPLE_CAR,
    SMOOTH_CAR,
    SMOOTH_DIFF_DRIVE,
    VELOCITY,
    Model,
    _as_control,
    _as_state,
    _center,
    _center_jac,
    state_dim,
)
from .integrate import (
    SCHEMES,
    Trajectory,
    TtcResult,
    _tangent_step,
    _grad_propagate,
    _ttc_k,
    pack_obstacles,
    propagate,
    scratch,
    time_grid,
)

# |d . w| below this (m^2/s) is treated as a grazing contact: zero tau gradient
GRAZING_EPS = 1e-12
FLAG_GRAZING = 1


@dataclass(frozen=True)
class CostParams:
    kappa_goal: float = 1.0
    kappa_col: float = 1.0
    t_goal: float = 1.0
    t_horiz: float = 5.0
    dt_max: float = 0.1
    dynamic_goal_times: tuple[float, ...] = (0.5, 1.0, 1.5)
    gradient_scheme: str = "rk4"

    def __post_init__(self):
        object.__setattr__(self, "dynamic_goal_times",
                           tuple(float(t) for t in self.dynamic_goal_times))
        for name in ("kappa_goal", "kappa_col", "t_goal", "t_horiz", "dt_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.dt_max > self.t_horiz:
            raise ValueError("dt_max must not exceed t_horiz")
        if any(not t > 0 for t in self.dynamic_goal_times):
            raise ValueError("dynamic goal times must be positive")
        if self.gradient_scheme not in SCHEMES:
            raise ValueError(f"gradient_scheme must be one of {sorted(SCHEMES)}")

    @property
    def scheme_code(self) -> int:
        return SCHEMES[self.gradient_scheme]


@dataclass(frozen=True)
class CostReport:
    total: float
    goal_term: float
    collision_term: float
    gradient: np.ndarray
    tau: float
    critical_obstacle: int | None
    grazing: bool = False
    segment: int | None = None


# ---------------------------------------------------------------------------
# compiled kernel
# ---------------------------------------------------------------------------

@njit(cache=True, error_model="numpy", _nrt=False)
def _goal_part(kind, scheme, x0, u, prm, goal_t, goal_p, dt_max, vb, mb, g):
    """Mean distance to the goal over the look-ahead times; adds its gradient to g."""
    ng = goal_t.shape[0]
    if ng == 0:
        return 0.0
    n = state_dim(kind)
    x = vb[12]
    J = mb[13]
    P = mb[14]
    for i in range(n):
        x[i] = x0[i]
        J[i, 0] = 0.0
        J[i, 1] = 0.0
    t = 0.0
    total = 0.0
    g0 = 0.0
    g1 = 0.0
    for m in range(ng):
        _grad_propagate(kind, scheme, x, J, u, goal_t[m] - t, dt_max, prm, vb, mb)
        t = goal_t[m]
        cx, cy = _center(kind, x, prm)
        dx = cx - goal_p[m, 0]
        dy = cy - goal_p[m, 1]
        d = math.sqrt(dx * dx + dy * dy)
        total += d
        if d > 0.0:
            _center_jac(kind, x, prm, P)
            for j in range(n):
                w = (dx * P[0, j] + dy * P[1, j]) / d
                g0 += w * J[j, 0]
                g1 += w * J[j, 1]
    g[0] += g0 / ng
    g[1] += g1 / ng
    return total / ng


@njit(cache=True, error_model="numpy", _nrt=False)
def _collision_gradient(kind, scheme, x0, u, prm, times, oc, ov, tau, idx, seg, vb, mb):
    """d tau / du on the contact segment; returns (dtau0, dtau1, grazing)."""
    n = state_dim(kind)
    x = vb[12]
    J = mb[13]
    P = mb[14]
    G = mb[15]
    for i in range(n):
        x[i] = x0[i]
        J[i, 0] = 0.0
        J[i, 1] = 0.0
    for k in range(seg):
        _tangent_step(kind, scheme, x, J, u, times[k + 1] - times[k], prm, x, J, vb, mb)
    # G rows 0-1: workspace sensitivity at segment start
    rx, ry = _center(kind, x, prm)
    _center_jac(kind, x, prm, P)
    for r in range(2):
        for c in range(2):
            acc = 0.0
            for j in range(n):
                acc += P[r, j] * J[j, c]
            G[r, c] = acc
    h = times[seg + 1] - times[seg]
    _tangent_step(kind, scheme, x, J, u, h, prm, x, J, vb, mb)
    nx, ny = _center(kind, x, prm)
    _center_jac(kind, x, prm, P)
    for r in range(2):
        for c in range(2):
            acc = 0.0
            for j in range(n):
                acc += P[r, j] * J[j, c]
            G[2 + r, c] = acc
    ds = tau - times[seg]
    s = ds / h
    vx = (nx - rx) / h
    vy = (ny - ry) / h
    px = rx + ds * vx - (oc[seg, idx, 0] + ds * ov[seg, idx, 0])
    py = ry + ds * vy - (oc[seg, idx, 1] + ds * ov[seg, idx, 1])
    wx = vx - ov[seg, idx, 0]
    wy = vy - ov[seg, idx, 1]
    den = px * wx + py * wy
    if abs(den) < GRAZING_EPS:
        return 0.0, 0.0, True
    out0 = 0.0
    out1 = 0.0
    for c in range(2):
        dpx = (1.0 - s) * G[0, c] + s * G[2, c]
        dpy = (1.0 - s) * G[1, c] + s * G[3, c]
        val = -(px * dpx + py * dpy) / den
        if c == 0:
            out0 = val
        else:
            out1 = val
    return out0, out1, False


@njit(cache=True, error_model="numpy", _nrt=False)
def _evaluate_k(kind, scheme, x0, u, prm, goal_t, goal_p, kg, kc, dt_max,
              times, oc, ov, orad, vb, mb, grad):
    """Total cost at u; writes the gradient into ``grad``.

    Returns (total, goal_term, collision_term, tau, obstacle, segment, flags).
    """
    literally(kind)
    grad[0] = 0.0
    grad[1] = 0.0
    goal = kg * _goal_part(kind, scheme, x0, u, prm, goal_t, goal_p, dt_max, vb, mb, grad)
    grad[0] *= kg
    grad[1] *= kg
    tau, idx, seg = _ttc_k(kind, x0, u, prm, times, oc, ov, orad, vb)
    if idx < 0:
        return goal, goal, 0.0, tau, idx, seg, 0
    if tau <= 0.0:
        grad[0] = 0.0
        grad[1] = 0.0
        return np.inf, goal, np.inf, 0.0, idx, seg, 0
    d0, d1, grazing = _collision_gradient(kind, scheme, x0, u, prm, times, oc, ov,
                                          tau, idx, seg, vb, mb)
    col = kc / tau
    scale = -kc / (tau * tau)
    grad[0] += scale * d0
    grad[1] += scale * d1
    return goal + col, goal, col, tau, idx, seg, FLAG_GRAZING if grazing else 0


@njit(cache=True, error_model="numpy", _nrt=False)
def _evaluate(kind, scheme, x0, u, prm, goal_t, goal_p, kg, kc, dt_max,
              times, oc, ov, orad, vb, mb, grad):
    """Runtime-kind entry point; each branch compiles a kind-specialized kernel."""
    if kind == VELOCITY:
        return _evaluate_k(VELOCITY, scheme, x0, u, prm, goal_t, goal_p, kg, kc,
                           dt_max, times, oc, ov, orad, vb, mb, grad)
    if kind == ACCELERATION:
        return _evaluate_k(ACCELERATION, scheme, x0, u, prm, goal_t, goal_p, kg, kc,
                           dt_max, times, oc, ov, orad, vb, mb, grad)
    if kind == DIFF_DRIVE:
        return _evaluate_k(DIFF_DRIVE, scheme, x0, u, prm, goal_t, goal_p, kg, kc,
                           dt_max, times, oc, ov, orad, vb, mb, grad)
    if kind == SMOOTH_DIFF_DRIVE:
        return _evaluate_k(SMOOTH_DIFF_DRIVE, scheme, x0, u, prm, goal_t, goal_p, kg, kc,
                           dt_max, times, oc, ov, orad, vb, mb, grad)
    if kind == SIMPLE_CAR:
        return _evaluate_k(SIMPLE_CAR, scheme, x0, u, prm, goal_t, goal_p, kg, kc,
                           dt_max, times, oc, ov, orad, vb, mb, grad)
    return _evaluate_k(SMOOTH_CAR, scheme, x0, u, prm, goal_t, goal_p, kg, kc,
                       dt_max, times, oc, ov, orad, vb, mb, grad)


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    """Everything the kernel needs to score controls for one agent at one instant."""

    model: Model
    state: np.ndarray
    params: CostParams
    goal_times: np.ndarray
    goal_points: np.ndarray
    times: np.ndarray
    obstacle_centers: np.ndarray
    obstacle_velocities: np.ndarray
    obstacle_radii: np.ndarray
    prm: np.ndarray = field(init=False)

    def __post_init__(self):
        self.state = _as_state(self.model, self.state)
        self.prm = self.model.packed()

    @classmethod
    def create(cls, model: Model, state, params: CostParams, goal=None,
               goal_trajectory: Callable[[float], np.ndarray] | None = None,
               obstacles: list[Trajectory] = ()) -> "Problem":
        """Static ``goal`` point, or a ``goal_trajectory`` sampled at the dynamic goal times."""
        if goal is not None and goal_trajectory is not None:
            raise ValueError("give either a static goal or a goal trajectory, not both")
        if goal_trajectory is not None:
            goal_times = np.array(sorted(params.dynamic_goal_times))
            goal_points = np.array([goal_trajectory(t) for t in goal_times], dtype=np.float64)
        elif goal is not None:
            goal_times = np.array([params.t_goal])
            goal_points = np.asarray(goal, dtype=np.float64).reshape(1, 2)
        else:
            goal_times = np.zeros(0)
            goal_points = np.zeros((0, 2))
        times = time_grid(params.t_horiz, params.dt_max)
        oc, ov, orad = pack_obstacles(list(obstacles), times)
        return cls(model, state, params, goal_times, goal_points, times, oc, ov, orad)

    def evaluate(self, control, vb=None, mb=None) -> CostReport:
        u = _as_control(self.model, control)
        if vb is None:
            vb, mb = scratch()
        grad = np.zeros(2)
        p = self.params
        total, goal, col, tau, idx, seg, flags = _evaluate(
            int(self.model.kind), p.scheme_code, self.state, u, self.prm,
            self.goal_times, self.goal_points, p.kappa_goal, p.kappa_col, p.dt_max,
            self.times, self.obstacle_centers, self.obstacle_velocities,
            self.obstacle_radii, vb, mb, grad)
        hit = idx >= 0
        return CostReport(total, goal, col, grad, tau, int(idx) if hit else None,
                          bool(flags & FLAG_GRAZING), int(seg) if hit else None)


def total_cost_and_gradient(problem: Problem, control) -> CostReport:
    return problem.evaluate(control)


def goal_cost_and_gradient(model: Model, state, control, goal, params: CostParams):
    report = Problem.create(model, state, params, goal=goal).evaluate(control)
    return report.goal_term, report.gradient


def dynamic_goal_cost_and_gradient(model: Model, state, control,
                                   goal_trajectory: Callable[[float], np.ndarray],
                                   params: CostParams):
    if not params.dynamic_goal_times:
        raise ValueError("dynamic goal cost needs at least one look-ahead time")
    report = Problem.create(model, state, params,
                            goal_trajectory=goal_trajectory).evaluate(control)
    return report.goal_term, report.gradient


def collision_cost_and_gradient(model: Model, state, control, obstacles: list[Trajectory],
                                params: CostParams):
    report = Problem.create(model, state, params, obstacles=obstacles).evaluate(control)
    if report.critical_obstacle is None:
        ttc = TtcResult(math.inf, None, None, None)
    else:
        ttc = TtcResult(report.tau, report.critical_obstacle,
                        propagate(model, state, control, report.tau, params.dt_max))
    return report.collision_term, report.gradient, ttc
