"""Anytime projected subgradient descent over a single constant control.

Each iteration blends the new subgradient into a momentum direction, takes a
Polyak step toward an optimistic target cost (best seen so far minus a
shrinking offset), projects onto the control box and the one-step state
constraints, and scores the result. The best control ever scored is returned,
so the answer is valid whenever the budget runs out.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numba import literally, njit

from .cost import Problem, _evaluate_k
from .dynamics import (
    ACCELERATION,
    DIFF_DRIVE,
    SIMPLE_CAR,
    SMOOTH_CAR,
    SMOOTH_DIFF_DRIVE,
    VELOCITY,
    _project_full,
)
from .integrate import scratch

# Stand-in for an infinite cost inside the Polyak numerator.
COST_CEILING = 1e6

_TRACE_COLS = 6  # k, u0, u1, cost, best, alpha
# optimizer state vector layout
_K, _U, _G, _S, _C, _BEST, _BEST_U = 0, 1, 3, 5, 7, 8, 9


@dataclass(frozen=True)
class OptimizerConfig:
    """Budget (exactly one of wall-clock ms or iteration count) and step rules."""

    budget_ms: float | None = None
    max_iterations: int | None = None
    polyak_offset_num: float = 10.0
    polyak_offset_den_base: float = 10.0
    momentum_mix: float = 0.5
    projection_dt: float = 0.1
    chunk: int = 2

    def __post_init__(self):
        if (self.budget_ms is None) == (self.max_iterations is None):
            raise ValueError("set exactly one of budget_ms or max_iterations")
        if self.budget_ms is not None and not self.budget_ms >= 0:
            raise ValueError("budget_ms must be non-negative")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not 0.0 < self.momentum_mix <= 1.0:
            raise ValueError("momentum_mix must lie in (0, 1]")
        if not self.projection_dt > 0:
            raise ValueError("projection_dt must be positive")

    @classmethod
    def iterations(cls, n: int, **kw) -> "OptimizerConfig":
        return cls(max_iterations=int(n), **kw)

    @classmethod
    def milliseconds(cls, ms: float, **kw) -> "OptimizerConfig":
        return cls(budget_ms=float(ms), **kw)


@dataclass(frozen=True)
class OptimizerTrace:
    """Row 0 is the initial control; row k the candidate produced by iteration k."""

    iterations: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    best_costs: np.ndarray
    step_sizes: np.ndarray
    precompute_ms: float
    elapsed_ms: float

    @property
    def n_iterations(self) -> int:
        return int(self.iterations.shape[0] - 1)


def evaluate_budget(config: OptimizerConfig, elapsed_ms: float, k: int) -> bool:
    """True while the optimizer may run another iteration."""
    if config.max_iterations is not None:
        return k < config.max_iterations
    return elapsed_ms < config.budget_ms


@njit(cache=True, error_model="numpy", _nrt=False)
def _iterate_k(kind, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov, orad,
               proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb, grad, cand):
    literally(kind)
    for _ in range(n_iter):
        k = int(st[_K])
        s0 = (1.0 - mix) * st[_S] + mix * st[_G]
        s1 = (1.0 - mix) * st[_S + 1] + mix * st[_G + 1]
        st[_S] = s0
        st[_S + 1] = s1
        ns = s0 * s0 + s1 * s1
        alpha = 0.0
        if ns > 0.0:
            best = st[_BEST] if math.isfinite(st[_BEST]) else COST_CEILING
            ck = st[_C] if math.isfinite(st[_C]) else max(COST_CEILING, best)
            target = best - off_num / (off_den + k)
            alpha = (ck - target) / ns
            cand[0] = st[_U] - alpha * s0
            cand[1] = st[_U + 1] - alpha * s1
            _project_full(kind, x0, cand, proj_dt, prm, cand)
            c = _evaluate_k(kind, scheme, x0, cand, prm, goal_t, goal_p, kg, kc, dt_max,
                            times, oc, ov, orad, vb, mb, grad)[0]
            st[_U] = cand[0]
            st[_U + 1] = cand[1]
            st[_G] = grad[0]
            st[_G + 1] = grad[1]
            st[_C] = c
            if c < st[_BEST]:
                st[_BEST] = c
                st[_BEST_U] = cand[0]
                st[_BEST_U + 1] = cand[1]
        k += 1
        st[_K] = k
        trace[k, 0] = k
        trace[k, 1] = st[_U]
        trace[k, 2] = st[_U + 1]
        trace[k, 3] = st[_C]
        trace[k, 4] = st[_BEST]
        trace[k, 5] = alpha


@njit(cache=True, error_model="numpy", _nrt=False)
def _iterate(kind, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov, orad,
             proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb, grad, cand):
    if kind == VELOCITY:
        _iterate_k(VELOCITY, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov,
                   orad, proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb,
                   grad, cand)
    elif kind == ACCELERATION:
        _iterate_k(ACCELERATION, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov,
                   orad, proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb,
                   grad, cand)
    elif kind == DIFF_DRIVE:
        _iterate_k(DIFF_DRIVE, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov,
                   orad, proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb,
                   grad, cand)
    elif kind == SMOOTH_DIFF_DRIVE:
        _iterate_k(SMOOTH_DIFF_DRIVE, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov,
                   orad, proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb,
                   grad, cand)
    elif kind == SIMPLE_CAR:
        _iterate_k(SIMPLE_CAR, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov,
                   orad, proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb,
                   grad, cand)
    else:
        _iterate_k(SMOOTH_CAR, scheme, x0, prm, goal_t, goal_p, kg, kc, dt_max, times, oc, ov,
                   orad, proj_dt, off_num, off_den, mix, st, n_iter, trace, vb, mb,
                   grad, cand)


def optimize(problem: Problem, initial_control, config: OptimizerConfig,
             start_time: float | None = None) -> tuple[np.ndarray, OptimizerTrace]:
    """Run the subgradient search; returns (best control, trace).

    ``start_time`` (a ``time.perf_counter`` reading) lets a caller charge work
    done before this call, such as obstacle precompute, to a wall-clock budget.
    """
    t_call = time.perf_counter()
    t0 = t_call if start_time is None else start_time
    u0 = np.asarray(initial_control, dtype=np.float64)
    if u0.shape != (2,):
        raise ValueError(f"initial control must have shape (2,), got {u0.shape}")
    p = problem.params
    kind = int(problem.model.kind)
    u = np.empty(2)
    _project_full(kind, problem.state, u0, config.projection_dt, problem.prm, u)
    vb, mb = scratch()
    report = problem.evaluate(u, vb, mb)

    st = np.zeros(11)
    st[_U:_U + 2] = u
    st[_G:_G + 2] = report.gradient
    st[_C] = report.total
    st[_BEST] = report.total
    st[_BEST_U:_BEST_U + 2] = u
    cap = (config.max_iterations if config.max_iterations is not None else 256) + 1
    trace = np.zeros((cap, _TRACE_COLS))
    trace[0] = (0, u[0], u[1], report.total, report.total, 0.0)

    args = (kind, p.scheme_code, problem.state, problem.prm, problem.goal_times,
            problem.goal_points, p.kappa_goal, p.kappa_col, p.dt_max, problem.times,
            problem.obstacle_centers, problem.obstacle_velocities, problem.obstacle_radii,
            config.projection_dt, config.polyak_offset_num, config.polyak_offset_den_base,
            config.momentum_mix, st)
    grad = np.zeros(2)
    cand = np.zeros(2)
    if config.max_iterations is not None:
        if config.max_iterations > 0:
            _iterate(*args, config.max_iterations, trace, vb, mb, grad, cand)
    else:
        while evaluate_budget(config, (time.perf_counter() - t0) * 1e3, int(st[_K])):
            k = int(st[_K])
            if k + config.chunk + 1 > trace.shape[0]:
                trace = np.concatenate([trace, np.zeros_like(trace)])
            _iterate(*args, config.chunk, trace, vb, mb, grad, cand)
    elapsed = (time.perf_counter() - t0) * 1e3
    n = int(st[_K]) + 1
    trace = trace[:n]
    out = OptimizerTrace(
        iterations=trace[:, 0].astype(np.int64),
        controls=trace[:, 1:3].copy(),
        costs=trace[:, 3].copy(),
        best_costs=trace[:, 4].copy(),
        step_sizes=trace[:, 5].copy(),
        precompute_ms=(t_call - t0) * 1e3,
        elapsed_ms=elapsed,
    )
    return st[_BEST_U:_BEST_U + 2].copy(), out
