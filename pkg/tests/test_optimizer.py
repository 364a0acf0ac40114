import math

import numpy as np
import pytest
from hypothesis import given

from conftest import model_for, random_control, random_state, kinds, seeds
from nhttc.cost import CostParams, Problem
from nhttc.dynamics import Model, project_control
from nhttc.integrate import build_trajectory
from nhttc.optimizer import OptimizerConfig, evaluate_budget, optimize

P = CostParams()


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig()
    with pytest.raises(ValueError):
        OptimizerConfig(budget_ms=5.0, max_iterations=10)
    with pytest.raises(ValueError):
        OptimizerConfig(max_iterations=10, momentum_mix=0.0)


def test_budget_decisions():
    assert evaluate_budget(OptimizerConfig.milliseconds(10), 9.9, 0)
    assert not evaluate_budget(OptimizerConfig.milliseconds(10), 10.0, 0)
    assert not evaluate_budget(OptimizerConfig.iterations(5), 0.0, 5)
    assert evaluate_budget(OptimizerConfig.iterations(5), 1e9, 4)


@pytest.mark.parametrize("config", [OptimizerConfig.iterations(0),
                                    OptimizerConfig.milliseconds(0)])
def test_zero_budget_returns_initial(config):
    prob = Problem.create(Model("v"), [0, 0], P, goal=[3, 0])
    u, trace = optimize(prob, [0.1, 0.05], config)
    np.testing.assert_array_equal(u, [0.1, 0.05])
    assert trace.n_iterations == 0


def test_empty_world_straight_to_goal():
    prob = Problem.create(Model("v"), [0, 0], P, goal=[3, 0])
    u, trace = optimize(prob, [0, 0], OptimizerConfig.iterations(200))
    np.testing.assert_allclose(u, [0.3, 0.0], atol=1e-3)


def test_optimal_start_never_worsens():
    prob = Problem.create(Model("v"), [0, 0], P, goal=[3, 0])
    u, trace = optimize(prob, [0.3, 0.0], OptimizerConfig.iterations(50))
    assert trace.best_costs[-1] <= trace.costs[0]
    np.testing.assert_array_equal(u, [0.3, 0.0])


def _random_problem(kind, rng, n_obs=6):
    model = model_for(kind)
    x = random_state(kind, rng)
    obs = [build_trajectory(Model("v", radius=0.15), x[:2] + rng.uniform(-2, 2, 2),
                            rng.uniform(-0.3, 0.3, 2), P.t_horiz, P.dt_max)
           for _ in range(n_obs)]
    return Problem.create(model, x, P, goal=x[:2] + rng.uniform(-3, 3, 2), obstacles=obs), model


@given(kinds, seeds)
def test_trace_invariants(kind, seed):
    rng = np.random.default_rng(seed)
    prob, model = _random_problem(kind, rng)
    u0 = random_control(model, rng)
    best, trace = optimize(prob, u0, OptimizerConfig.iterations(40))
    assert trace.n_iterations == 40
    assert np.all(trace.best_costs[1:] <= trace.best_costs[:-1])
    bounds = model.control_bounds()
    assert np.all(np.abs(trace.controls) <= bounds + 1e-12)
    # best is the earliest argmin of the recorded costs
    k = int(np.argmin(trace.costs))
    if math.isfinite(trace.costs[k]):
        np.testing.assert_array_equal(best, trace.controls[k])
        assert trace.best_costs[-1] == trace.costs[k]


@given(kinds, seeds)
def test_deterministic_and_prefix(kind, seed):
    rng = np.random.default_rng(seed)
    prob, model = _random_problem(kind, rng)
    u0 = random_control(model, rng)
    b1, t1 = optimize(prob, u0, OptimizerConfig.iterations(30))
    b2, t2 = optimize(prob, u0, OptimizerConfig.iterations(30))
    np.testing.assert_array_equal(b1, b2)
    np.testing.assert_array_equal(t1.controls, t2.controls)
    b3, t3 = optimize(prob, u0, OptimizerConfig.iterations(60))
    np.testing.assert_array_equal(t3.controls[:31], t1.controls)
    assert t3.best_costs[-1] <= t1.best_costs[-1]


def test_initial_control_is_projected():
    prob = Problem.create(Model("dd"), [0, 0, 0], P, goal=[3, 0])
    _, trace = optimize(prob, [2.0, -5.0], OptimizerConfig.iterations(1))
    np.testing.assert_array_equal(trace.controls[0], project_control(Model("dd"), [2.0, -5.0]))


def test_escapes_colliding_start():
    obs = [build_trajectory(Model("v", radius=0.3), [0.8, 0], [-0.3, 0], 5.0, 0.1)]
    prob = Problem.create(Model("v"), [0, 0], P, goal=[3, 0], obstacles=obs)
    _, trace = optimize(prob, [0.3, 0.0], OptimizerConfig.iterations(100))
    assert trace.costs[0] > 1.0
    assert trace.best_costs[-1] < trace.costs[0]


def test_wall_clock_budget_records_precompute():
    import time
    prob = Problem.create(Model("v"), [0, 0], P, goal=[3, 0])
    t0 = time.perf_counter() - 0.002
    _, trace = optimize(prob, [0, 0], OptimizerConfig.milliseconds(3.0), start_time=t0)
    assert trace.precompute_ms >= 2.0
    assert trace.elapsed_ms >= 3.0
