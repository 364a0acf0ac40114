import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import seeds
from nhttc.dynamics import ModelKind, workspace_projection
from nhttc.sim import (
    AgentConfig,
    Arena,
    GoalSpec,
    Scenario,
    World,
    apply_reciprocity,
    generate_random_scenario,
    initial_problem,
    overlapping_pairs,
    run_scenario,
    step_world,
)


def test_reciprocity_examples():
    u = np.array([0.3, 0.2])
    np.testing.assert_array_equal(apply_reciprocity(u, u, True), u)
    np.testing.assert_allclose(apply_reciprocity([0, 0], u, True), [0.15, 0.1])
    np.testing.assert_array_equal(apply_reciprocity([0, 0], u, False), u)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_reciprocity_fixed_point(u):
    np.testing.assert_allclose(apply_reciprocity(u, u, True), u)


def test_goal_spec_needs_exactly_one_target():
    with pytest.raises(ValueError):
        GoalSpec()
    with pytest.raises(ValueError):
        GoalSpec(point=(0, 0), target=1)


def test_scenario_needs_agents():
    with pytest.raises(ValueError):
        Scenario(())


def _passive(state, vel, radius=0.1):
    return AgentConfig("v", state, radius=radius, controlled=False, initial_control=vel)


def test_passive_world_is_ballistic():
    sc = Scenario((_passive((0, 0), (0.2, 0.1)), _passive((5, 5), (-0.1, 0))), duration=10)
    res = run_scenario(sc)
    np.testing.assert_allclose(res.records[-1].states[0], [0.18, 0.09], atol=1e-12)
    np.testing.assert_allclose(res.records[-1].states[1], [4.91, 5.0], atol=1e-12)


def test_single_agent_straight_line_arrival():
    agent = AgentConfig("v", (0, 0), radius=0.1, goal=GoalSpec(point=(3, 0)))
    res = run_scenario(Scenario((agent,), duration=120))
    expected = (3 - 0.1) / 0.3 / 0.1
    # within v_max * t_goal of the goal the best speed drops below v_max
    assert res.metrics.arrival_frames[0] == pytest.approx(expected, rel=0.1)
    assert res.metrics.arrival_frames[0] >= expected - 1


def test_distant_agents_never_collide():
    a = AgentConfig("dd", (0, 0, 0), goal=GoalSpec(point=(2, 0)))
    b = AgentConfig("v", (0, 10), goal=GoalSpec(point=(2, 10)))
    res = run_scenario(Scenario((a, b), duration=40))
    assert res.metrics.collision_free_fraction == 1.0


def test_determinism_and_precompute_counter():
    sc = generate_random_scenario(4, n_obstacles=10, duration=15, budget_iters=20)
    r1, r2 = run_scenario(sc), run_scenario(sc)
    for a, b in zip(r1.records, r2.records):
        for sa, sb in zip(a.states, b.states):
            np.testing.assert_array_equal(sa, sb)
        for ua, ub in zip(a.controls, b.controls):
            np.testing.assert_array_equal(ua, ub)
    world = World.initial(sc)
    for _ in range(5):
        world, _ = step_world(world, sc)
    assert world.precompute_count == 5 * len(sc.agents)


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 0.5)),
                min_size=2, max_size=6))
def test_overlap_pairs_match_disks(disks):
    centers = np.array([[x, y] for x, y, _ in disks])
    radii = np.array([r for _, _, r in disks])
    pairs = overlapping_pairs(centers, radii)
    for i in range(len(disks)):
        for j in range(i + 1, len(disks)):
            overlap = np.linalg.norm(centers[i] - centers[j]) < radii[i] + radii[j]
            assert ((i, j) in pairs) == overlap
    assert all(i < j for i, j in pairs)


def test_collisions_use_car_disks():
    car = AgentConfig("car", (0, 0, 0), length=0.4, controlled=False)
    disk = workspace_projection(car.model, np.array([0.0, 0.0, 0.0]))[0]
    other = _passive((disk.center[0] + disk.radius + 0.05, 0), (0, 0), radius=0.1)
    rec = run_scenario(Scenario((car, other), duration=1)).records[0]
    assert rec.collisions == ((0, 1),)


def test_generator_reproducible_and_bounded():
    a = generate_random_scenario(11)
    b = generate_random_scenario(11)
    assert a == b
    assert len(a.agents) == 41
    for o in a.agents[1:]:
        assert 0.1 <= np.hypot(*o.initial_control) <= 0.3
        assert a.arena.contains(o.state[0], o.state[1])
    assert len(generate_random_scenario(3, n_obstacles=0).agents) == 1


def test_generator_rejects_bad_input():
    with pytest.raises(ValueError):
        generate_random_scenario(0, n_obstacles=-1)
    with pytest.raises(ValueError):
        generate_random_scenario(0, speed_range=(0.3, 0.1))


@given(seeds)
def test_obstacles_reflect_at_bounds(seed):
    sc = generate_random_scenario(seed % 1000, n_obstacles=8, duration=60, budget_iters=1)
    res = run_scenario(sc)
    box = sc.arena
    for rec in res.records:
        for s in rec.states[1:]:
            assert box.xmin - 0.05 <= s[0] <= box.xmax + 0.05
            assert box.ymin - 0.05 <= s[1] <= box.ymax + 0.05


def test_goal_resampled_on_arrival():
    sc = generate_random_scenario(2, n_obstacles=0, duration=400, budget_iters=30)
    res = run_scenario(sc)
    assert len(res.metrics.all_arrivals[0]) >= 2
    goals = {tuple(r.goals[0]) for r in res.records}
    assert len(goals) >= 2


def test_dynamic_goal_tracks_target_prediction():
    lead = AgentConfig("v", (1, 0), controlled=False, initial_control=(0.1, 0.05))
    robot = AgentConfig("v", (0, 0), goal=GoalSpec(target=1, offset=(-0.4, 0)))
    sc = Scenario((robot, lead), duration=5)
    prob = initial_problem(sc, 0)
    np.testing.assert_allclose(prob.goal_times, sc.cost.dynamic_goal_times)
    expected = [[1 + 0.1 * t - 0.4, 0.05 * t] for t in sc.cost.dynamic_goal_times]
    np.testing.assert_allclose(prob.goal_points, expected, atol=1e-12)
    # the lead is also an obstacle for the follower
    assert prob.obstacle_radii.shape == (1,)


def test_goal_target_must_exist():
    robot = AgentConfig("v", (0, 0), goal=GoalSpec(target=3))
    with pytest.raises(ValueError):
        Scenario((robot,))


def test_arena_validation():
    with pytest.raises(ValueError):
        Arena(1, 0, 0, 1)


def test_budget_override():
    sc = generate_random_scenario(0, n_obstacles=0, duration=3)
    ms = sc.with_budget(ms=2.0)
    assert ms.budget_ms == 2.0 and ms.budget_iters is None
    assert dataclasses.replace(ms, name="x").optimizer_config().budget_ms == 2.0
