import math

import numpy as np
import pytest
from hypothesis import given

from conftest import KINDS, model_for, random_control, random_state, kinds, seeds
from nhttc.dynamics import (
    ControlLimits,
    Model,
    ModelKind,
    continuous_derivative,
    continuous_partials,
    project_control,
    project_state_constraint,
    workspace_projection,
)
from nhttc.integrate import softening_signature


def test_state_and_control_dimensions():
    assert [k.state_dim for k in ModelKind] == [2, 4, 3, 5, 3, 5]
    assert all(k.control_dim == 2 for k in ModelKind)


@pytest.mark.parametrize("name,kind", [("v", ModelKind.Velocity), ("scar", ModelKind.SmoothCar),
                                       ("DiffDrive", ModelKind.DiffDrive), (3, ModelKind(3))])
def test_kind_parsing(name, kind):
    assert ModelKind.parse(name) is kind


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        ModelKind.parse("hovercraft")


def test_limits_must_be_positive():
    with pytest.raises(ValueError):
        ControlLimits(v_max=0.0)


def test_car_needs_length():
    with pytest.raises(ValueError):
        Model(ModelKind.SimpleCar)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        continuous_derivative(Model("dd"), [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        continuous_derivative(Model("v"), [0.0, 0.0], [1.0, 0.0, 0.0])


def test_diffdrive_straight():
    f = continuous_derivative(Model("dd"), [0, 0, 0], [1, 0])
    np.testing.assert_allclose(f, [1, 0, 0], atol=1e-15)


def test_acceleration_softened_when_over_speed():
    f = continuous_derivative(Model("a"), [0, 0, 0.31, 0], [1, 0])
    np.testing.assert_allclose(f, [0.31, 0, 0.01, 0], atol=1e-15)


def test_acceleration_not_softened_when_braking():
    f = continuous_derivative(Model("a"), [0, 0, 0.31, 0], [-1, 0])
    np.testing.assert_allclose(f, [0.31, 0, -1, 0], atol=1e-15)


def test_smooth_car_coasting():
    f = continuous_derivative(Model("scar", length=1.0), [0, 0, 0, 1, 0], [0, 0])
    np.testing.assert_allclose(f, [1, 0, 0, 0, 0], atol=1e-15)


def test_velocity_partials():
    p = continuous_partials(Model("v"), [1, 2], [0.1, 0.2])
    np.testing.assert_array_equal(p.d_state, np.zeros((2, 2)))
    np.testing.assert_array_equal(p.d_control, np.eye(2))


def test_diffdrive_heading_partials():
    p = continuous_partials(Model("dd"), [0, 0, math.pi / 2], [1, 0])
    assert p.d_state[0, 2] == pytest.approx(-1.0)
    assert p.d_state[1, 2] == pytest.approx(0.0, abs=1e-15)


def _fd_partials(model, x, u, h=1e-6):
    n = x.shape[0]
    A = np.empty((n, n))
    B = np.empty((n, 2))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        A[:, j] = (continuous_derivative(model, x + e, u)
                   - continuous_derivative(model, x - e, u)) / (2 * h)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        B[:, j] = (continuous_derivative(model, x, u + e)
                   - continuous_derivative(model, x, u - e)) / (2 * h)
    return A, B


def _same_softening(model, x, u, h=1e-4):
    """True when no softening switch lies within h of (x, u)."""
    sig = softening_signature(model, x, u, 1e-9, 1.0)
    for j in range(x.shape[0] + 2):
        for s in (h, -h):
            dx, du = np.zeros_like(x), np.zeros(2)
            if j < x.shape[0]:
                dx[j] = s
            else:
                du[j - x.shape[0]] = s
            if softening_signature(model, x + dx, u + du, 1e-9, 1.0) != sig:
                return False
    return True


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.name)
def test_partials_match_finite_differences(kind):
    rng = np.random.default_rng(int(kind))
    model = model_for(kind)
    worst = 0.0
    checked = 0
    for _ in range(1000):
        x = random_state(kind, rng)
        if kind in (ModelKind.Acceleration, ModelKind.SmoothDiffDrive, ModelKind.SmoothCar):
            # exercise the softened branch too
            x[-2 if kind != ModelKind.Acceleration else 2] *= rng.choice([1.0, 1.2])
        u = random_control(model, rng)
        if not _same_softening(model, x, u):
            continue
        p = continuous_partials(model, x, u)
        A, B = _fd_partials(model, x, u)
        scale = max(np.abs(np.hstack([A, B])).max(), 1e-12)
        worst = max(worst, np.abs(np.hstack([p.d_state, p.d_control]) - np.hstack([A, B])).max()
                    / scale)
        checked += 1
    assert checked > 900
    assert worst <= 1e-5


def test_softened_control_block_never_vanishes():
    p = continuous_partials(Model("a"), [0, 0, 0.31, 0], [1, 0])
    assert p.d_control[2, 0] == pytest.approx(0.01)
    p = continuous_partials(Model("scar", length=1.0), [0, 0, 0, 0.31, 0], [1, 0])
    assert p.d_control[3, 0] == pytest.approx(0.01)


def test_smooth_car_projection():
    disk, P = workspace_projection(Model("scar", length=1.0), [0, 0, 0, 0, 0])
    np.testing.assert_allclose(disk.center, [0.5, 0.0])
    assert disk.radius == pytest.approx(math.sqrt(5) / 4)
    disk, P = workspace_projection(Model("scar", length=2.0), [0, 0, math.pi / 2, 0, 0])
    np.testing.assert_allclose(disk.center, [0.0, 1.0], atol=1e-15)
    assert P[0, 2] == pytest.approx(-1.0)


def test_velocity_projection_identity():
    disk, P = workspace_projection(Model("v", radius=0.1), [2, 3])
    np.testing.assert_array_equal(disk.center, [2, 3])
    assert disk.radius == 0.1
    np.testing.assert_array_equal(P, np.eye(2))


def test_disk_projection_jacobian_shape():
    _, P = workspace_projection(Model("sdd"), [1, 2, 0.3, 0.1, 0.2])
    np.testing.assert_array_equal(P, np.hstack([np.eye(2), np.zeros((2, 3))]))


@given(kinds, seeds)
def test_projection_jacobian_matches_fd(kind, seed):
    rng = np.random.default_rng(seed)
    model = model_for(kind)
    x = random_state(kind, rng)
    _, P = workspace_projection(model, x)
    h = 1e-6
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        fd = (workspace_projection(model, x + e)[0].center
              - workspace_projection(model, x - e)[0].center) / (2 * h)
        np.testing.assert_allclose(P[:, j], fd, rtol=1e-6, atol=1e-9)


def test_project_control_examples():
    np.testing.assert_allclose(project_control(Model("dd"), [0.5, 0.2]), [0.3, 0.2])
    np.testing.assert_allclose(project_control(Model("scar", length=1.0), [2, -3]),
                               [1, -math.pi / 4])
    np.testing.assert_array_equal(project_control(Model("v"), [0.1, -0.2]), [0.1, -0.2])


@given(kinds, seeds)
def test_project_control_idempotent_and_nonexpansive(kind, seed):
    rng = np.random.default_rng(seed)
    model = model_for(kind)
    a, b = rng.normal(0, 2, 2), rng.normal(0, 2, 2)
    pa, pb = project_control(model, a), project_control(model, b)
    np.testing.assert_array_equal(project_control(model, pa), pa)
    assert np.all(np.abs(pa - pb) <= np.abs(a - b) + 1e-15)
    assert np.all(np.abs(pa) <= model.control_bounds())


def test_state_constraint_examples():
    m = Model("a")
    np.testing.assert_allclose(project_state_constraint(m, [0, 0, 0.29, 0], [1, 0], 0.1),
                               [0.1, 0.0], atol=1e-12)
    np.testing.assert_array_equal(project_state_constraint(m, [0, 0, 0, 0], [1, 0], 0.1), [1, 0])
    np.testing.assert_array_equal(project_state_constraint(Model("v"), [0, 0], [5, 5], 0.1),
                                  [5, 5])


@given(seeds)
def test_acceleration_state_projection_respects_bound(seed):
    rng = np.random.default_rng(seed)
    m = Model("a")
    ang = rng.uniform(-math.pi, math.pi)
    v = rng.uniform(0, 0.3) * np.array([math.cos(ang), math.sin(ang)])
    a = rng.uniform(-1, 1, 2)
    dt = rng.uniform(0.01, 0.5)
    ap = project_state_constraint(m, np.r_[0, 0, v], a, dt)
    assert np.linalg.norm(v + dt * ap) <= 0.3 + 1e-9
