"""Forward propagation, control-gradient propagation and time-to-collision.

States ride classical RK4. The sensitivity dx/du is carried alongside with
one of two tangent schemes:

``TRAPEZOID``
    partials of the explicit trapezoid (Heun) step built from the
    continuous-time Jacobians at x(t) and at the Euler predictor x+.
``RK4_TANGENT``
    the exact derivative of the RK4 step, using Jacobians at the four stage
    states.

Time to collision is found by walking the sampled trajectories segment by
segment and solving a linear continuous collision check inside each one; the
walk stops at the first segment that contains a contact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import literally, njit

from .dynamics import (
    ACCELERATION,
    DIFF_DRIVE,
    MAX_STATE_DIM,
    SIMPLE_CAR,
    SMOOTH_CAR,
    SMOOTH_DIFF_DRIVE,
    VELOCITY,
    Model,
    _as_control,
    _as_state,
    _center,
    _deriv,
    _soft_factors,
    _partials,
    state_dim,
)

TRAPEZOID = 0
RK4_TANGENT = 1
SCHEMES = {"trapezoid": TRAPEZOID, "rk4": RK4_TANGENT}

# tolerance when splitting a horizon into dt_max steps (absorbs 0.3/0.1 = 2.9999...)
_GRID_EPS = 1e-9


def scratch():
    """Scratch buffers for the compiled kernels (vectors, matrices)."""
    return np.zeros((16, MAX_STATE_DIM)), np.zeros((16, MAX_STATE_DIM, MAX_STATE_DIM))


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True, error_model="numpy", _nrt=False)
def _rk4(kind, x, u, h, prm, out, vb):
    n = state_dim(kind)
    k1 = vb[0]
    k2 = vb[1]
    k3 = vb[2]
    k4 = vb[3]
    tmp = vb[4]
    _deriv(kind, x, u, prm, k1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _deriv(kind, tmp, u, prm, k2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _deriv(kind, tmp, u, prm, k3)
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    _deriv(kind, tmp, u, prm, k4)
    for i in range(n):
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, error_model="numpy", _nrt=False)
def _affine(n, A, J, B, out):
    # out = A @ J + B over the leading n x n / n x 2 blocks
    for i in range(n):
        s0 = B[i, 0]
        s1 = B[i, 1]
        for j in range(n):
            a = A[i, j]
            if a != 0.0:
                s0 += a * J[j, 0]
                s1 += a * J[j, 1]
        out[i, 0] = s0
        out[i, 1] = s1


@njit(cache=True, error_model="numpy", _nrt=False)
def _shifted(n, J, c, D, out):
    # out = J + c * D
    for i in range(n):
        out[i, 0] = J[i, 0] + c * D[i, 0]
        out[i, 1] = J[i, 1] + c * D[i, 1]


@njit(cache=True, error_model="numpy", _nrt=False)
def _tangent_step(kind, scheme, x, J, u, h, prm, xout, Jout, vb, mb):
    """Advance (x, dx/du) by one step of length h. xout/Jout may alias x/J."""
    n = state_dim(kind)
    A1 = mb[0]
    A2 = mb[1]
    A3 = mb[2]
    A4 = mb[3]
    B1 = mb[4]
    B2 = mb[5]
    B3 = mb[6]
    B4 = mb[7]
    D1 = mb[8]
    D2 = mb[9]
    D3 = mb[10]
    D4 = mb[11]
    E = mb[12]
    k1 = vb[5]
    k2 = vb[6]
    k3 = vb[7]
    k4 = vb[8]
    tmp = vb[9]
    if scheme == TRAPEZOID:
        _deriv(kind, x, u, prm, k1)
        _partials(kind, x, u, prm, A1, B1)
        for i in range(n):
            tmp[i] = x[i] + h * k1[i]
        _partials(kind, tmp, u, prm, A2, B2)
        _affine(n, A1, J, B1, D1)
        _shifted(n, J, h, D1, E)
        _affine(n, A2, E, B2, D2)
        for i in range(n):
            Jout[i, 0] = J[i, 0] + 0.5 * h * (D1[i, 0] + D2[i, 0])
            Jout[i, 1] = J[i, 1] + 0.5 * h * (D1[i, 1] + D2[i, 1])
        _rk4(kind, x, u, h, prm, xout, vb)
        return
    # exact tangent of the RK4 map; same arithmetic as _rk4 for the state
    _deriv(kind, x, u, prm, k1)
    _partials(kind, x, u, prm, A1, B1)
    _affine(n, A1, J, B1, D1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _deriv(kind, tmp, u, prm, k2)
    _partials(kind, tmp, u, prm, A2, B2)
    _shifted(n, J, 0.5 * h, D1, E)
    _affine(n, A2, E, B2, D2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _deriv(kind, tmp, u, prm, k3)
    _partials(kind, tmp, u, prm, A3, B3)
    _shifted(n, J, 0.5 * h, D2, E)
    _affine(n, A3, E, B3, D3)
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    _deriv(kind, tmp, u, prm, k4)
    _partials(kind, tmp, u, prm, A4, B4)
    _shifted(n, J, h, D3, E)
    _affine(n, A4, E, B4, D4)
    for i in range(n):
        xout[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for j in range(2):
            Jout[i, j] = J[i, j] + h / 6.0 * (
                D1[i, j] + 2.0 * D2[i, j] + 2.0 * D3[i, j] + D4[i, j])


@njit(cache=True, error_model="numpy", _nrt=False)
def _n_steps(T, dt_max):
    if T <= 0.0:
        return 0
    return max(1, int(math.ceil(T / dt_max - _GRID_EPS)))


@njit(cache=True, error_model="numpy", _nrt=False)
def _propagate(kind, x0, u, T, dt_max, prm, out, vb):
    n = state_dim(kind)
    for i in range(n):
        out[i] = x0[i]
    steps = _n_steps(T, dt_max)
    for s in range(steps):
        h = T - s * dt_max if s == steps - 1 else dt_max
        _rk4(kind, out, u, h, prm, out, vb)


@njit(cache=True, error_model="numpy", _nrt=False)
def _soft_signature(kind, x0, u, T, dt_max, prm, out, vb):
    """Hash of which RK4 stages run with softened rates over [0, T]."""
    n = state_dim(kind)
    for i in range(n):
        out[i] = x0[i]
    tmp = vb[4]
    k = vb[0]
    sig = 0
    steps = _n_steps(T, dt_max)
    for s in range(steps):
        h = T - s * dt_max if s == steps - 1 else dt_max
        for stage in range(4):
            c = 0.0 if stage == 0 else (h if stage == 3 else 0.5 * h)
            if stage == 0:
                for i in range(n):
                    tmp[i] = out[i]
            else:
                _deriv(kind, tmp, u, prm, k)
                for i in range(n):
                    tmp[i] = out[i] + c * k[i]
            ka, kp = _soft_factors(kind, tmp, u, prm)
            code = (1 if ka != 1.0 else 0) + (2 if kp != 1.0 else 0)
            sig = sig * 5 + code + 1
        _rk4(kind, out, u, h, prm, out, vb)
    return sig


@njit(cache=True, error_model="numpy", _nrt=False)
def _grad_propagate(kind, scheme, x, J, u, T, dt_max, prm, vb, mb):
    """Advance (x, J) in place over a duration T in steps of at most dt_max."""
    steps = _n_steps(T, dt_max)
    for s in range(steps):
        h = T - s * dt_max if s == steps - 1 else dt_max
        _tangent_step(kind, scheme, x, J, u, h, prm, x, J, vb, mb)


@njit(cache=True, error_model="numpy", _nrt=False)
def _trajectory_k(kind, x0, u, prm, times, states, centers, vb):
    literally(kind)
    n = state_dim(kind)
    for i in range(n):
        states[0, i] = x0[i]
    cx, cy = _center(kind, states[0], prm)
    centers[0, 0] = cx
    centers[0, 1] = cy
    for k in range(times.shape[0] - 1):
        _rk4(kind, states[k], u, times[k + 1] - times[k], prm, states[k + 1], vb)
        cx, cy = _center(kind, states[k + 1], prm)
        centers[k + 1, 0] = cx
        centers[k + 1, 1] = cy


@njit(cache=True, error_model="numpy", _nrt=False)
def _trajectory(kind, x0, u, prm, times, states, centers, vb):
    if kind == VELOCITY:
        _trajectory_k(VELOCITY, x0, u, prm, times, states, centers, vb)
    elif kind == ACCELERATION:
        _trajectory_k(ACCELERATION, x0, u, prm, times, states, centers, vb)
    elif kind == DIFF_DRIVE:
        _trajectory_k(DIFF_DRIVE, x0, u, prm, times, states, centers, vb)
    elif kind == SMOOTH_DIFF_DRIVE:
        _trajectory_k(SMOOTH_DIFF_DRIVE, x0, u, prm, times, states, centers, vb)
    elif kind == SIMPLE_CAR:
        _trajectory_k(SIMPLE_CAR, x0, u, prm, times, states, centers, vb)
    else:
        _trajectory_k(SMOOTH_CAR, x0, u, prm, times, states, centers, vb)


@njit(cache=True, error_model="numpy", _nrt=False)
def _trajectories(kinds, x0s, us, prms, times, states, centers, vb):
    """Batch of agents; states (n_agents, n_times, 5), centers (n_agents, n_times, 2)."""
    for a in range(kinds.shape[0]):
        _trajectory(kinds[a], x0s[a], us[a], prms[a], times, states[a], centers[a], vb)


@njit(cache=True, error_model="numpy", _nrt=False)
def _ccd(px, py, wx, wy, R, h):
    """Earliest t in [0, h] with |p + t w| = R, or inf."""
    c = px * px + py * py - R * R
    if c <= 0.0:
        return 0.0
    b = px * wx + py * wy
    if b >= 0.0:
        return np.inf
    a = wx * wx + wy * wy
    disc = b * b - a * c
    if disc < 0.0:
        return np.inf
    # c / (-b + sqrt) is the smaller root without cancellation
    t = c / (-b + math.sqrt(disc))
    if t <= h:
        return t
    return np.inf


@njit(cache=True, error_model="numpy", _nrt=False)
def _ttc_k(kind, x0, u, prm, times, oc, ov, orad, vb):
    """Walk segments in time order; return (tau, obstacle, segment).

    ``oc`` has shape (n_times, n_obs, 2), ``ov`` the per-segment obstacle
    velocities (n_times - 1, n_obs, 2).
    """
    literally(kind)
    n_obs = orad.shape[0]
    if n_obs == 0:
        return np.inf, -1, -1
    n = state_dim(kind)
    rr = prm[7]
    xa = vb[10]
    xb = vb[11]
    for i in range(n):
        xa[i] = x0[i]
    rx, ry = _center(kind, xa, prm)
    for k in range(times.shape[0] - 1):
        h = times[k + 1] - times[k]
        _rk4(kind, xa, u, h, prm, xb, vb)
        nx, ny = _center(kind, xb, prm)
        vx = (nx - rx) / h
        vy = (ny - ry) / h
        best = np.inf
        hit = -1
        for j in range(n_obs):
            t = _ccd(rx - oc[k, j, 0], ry - oc[k, j, 1],
                     vx - ov[k, j, 0], vy - ov[k, j, 1], rr + orad[j], h)
            if t < best:
                best = t
                hit = j
        if hit >= 0:
            return times[k] + best, hit, k
        for i in range(n):
            xa[i] = xb[i]
        rx = nx
        ry = ny
    return np.inf, -1, -1


@njit(cache=True, error_model="numpy", _nrt=False)
def _ttc(kind, x0, u, prm, times, oc, ov, orad, vb):
    if kind == VELOCITY:
        return _ttc_k(VELOCITY, x0, u, prm, times, oc, ov, orad, vb)
    if kind == ACCELERATION:
        return _ttc_k(ACCELERATION, x0, u, prm, times, oc, ov, orad, vb)
    if kind == DIFF_DRIVE:
        return _ttc_k(DIFF_DRIVE, x0, u, prm, times, oc, ov, orad, vb)
    if kind == SMOOTH_DIFF_DRIVE:
        return _ttc_k(SMOOTH_DIFF_DRIVE, x0, u, prm, times, oc, ov, orad, vb)
    if kind == SIMPLE_CAR:
        return _ttc_k(SIMPLE_CAR, x0, u, prm, times, oc, ov, orad, vb)
    return _ttc_k(SMOOTH_CAR, x0, u, prm, times, oc, ov, orad, vb)


# ---------------------------------------------------------------------------
# Python API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Sampled future of one agent under a constant control."""

    times: np.ndarray
    states: np.ndarray
    centers: np.ndarray
    radius: float

    def __len__(self):
        return self.times.shape[0]


@dataclass(frozen=True)
class GradientState:
    state: np.ndarray
    dx_du: np.ndarray


@dataclass(frozen=True)
class TtcResult:
    tau: float
    obstacle_index: int | None
    robot_state_at_tau: np.ndarray | None
    segment: int | None = None


def time_grid(t_horiz: float, dt_max: float) -> np.ndarray:
    """Sample times 0, dt, 2 dt, ... up to t_horiz, with a remainder step if needed."""
    if not t_horiz > 0 or not dt_max > 0:
        raise ValueError("t_horiz and dt_max must be positive")
    n = int(math.floor(t_horiz / dt_max + _GRID_EPS))
    times = np.arange(n + 1) * dt_max
    if t_horiz - times[-1] > _GRID_EPS * dt_max:
        times = np.append(times, t_horiz)
    else:
        times[-1] = t_horiz
    return times


def rk4_step(model: Model, state, control, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    x = _as_state(model, state)
    u = _as_control(model, control)
    out = np.empty_like(x)
    vb, _ = scratch()
    _rk4(int(model.kind), x, u, float(dt), model.packed(), out, vb)
    return out


def propagate(model: Model, state, control, T: float, dt_max: float) -> np.ndarray:
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T!r}")
    x = _as_state(model, state)
    u = _as_control(model, control)
    out = np.empty_like(x)
    vb, _ = scratch()
    _propagate(int(model.kind), x, u, float(T), float(dt_max), model.packed(), out, vb)
    return out


def gradient_propagate(model: Model, state, control, T: float, dt_max: float,
                       scheme: str = "trapezoid") -> GradientState:
    """State and dx/du at time T, starting from dx/du = 0."""
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T!r}")
    x = _as_state(model, state).copy()
    u = _as_control(model, control)
    J = np.zeros((MAX_STATE_DIM, 2))
    vb, mb = scratch()
    _grad_propagate(int(model.kind), SCHEMES[scheme], x, J, u, float(T), float(dt_max),
                    model.packed(), vb, mb)
    return GradientState(x, J[: model.state_dim].copy())


def build_trajectory(model: Model, state, control, t_horiz: float, dt_max: float,
                     times: np.ndarray | None = None) -> Trajectory:
    """Propagate an agent holding ``control`` over the sampling grid."""
    x = _as_state(model, state)
    u = _as_control(model, control)
    if times is None:
        times = time_grid(t_horiz, dt_max)
    states = np.empty((times.shape[0], model.state_dim))
    centers = np.empty((times.shape[0], 2))
    vb, _ = scratch()
    _trajectory(int(model.kind), x, u, model.packed(), times, states, centers, vb)
    return Trajectory(times, states, centers, model.collision_radius)


def linear_ccd(c1, v1, c2, v2, combined_radius: float, dt: float) -> float | None:
    """Earliest contact time in [0, dt] of two linearly moving disks, else None."""
    if not dt > 0 or not combined_radius > 0:
        raise ValueError("dt and combined_radius must be positive")
    t = _ccd(c1[0] - c2[0], c1[1] - c2[1], v1[0] - v2[0], v1[1] - v2[1],
             float(combined_radius), float(dt))
    return None if math.isinf(t) else t


def pack_obstacles(obstacles: list[Trajectory], times: np.ndarray):
    """Stack obstacle trajectories into the (time, obstacle, xy) layout of the kernels."""
    n_t = times.shape[0]
    for o in obstacles:
        if o.times.shape != times.shape or not np.allclose(o.times, times, rtol=0, atol=1e-12):
            raise ValueError("obstacle trajectories must share the robot's sampling grid")
    oc = np.empty((n_t, len(obstacles), 2))
    for j, o in enumerate(obstacles):
        oc[:, j, :] = o.centers
    ov = np.diff(oc, axis=0) / np.diff(times)[:, None, None]
    orad = np.array([o.radius for o in obstacles], dtype=np.float64)
    return np.ascontiguousarray(oc), np.ascontiguousarray(ov), orad


def time_to_collision(model: Model, state, control, obstacles: list[Trajectory],
                      t_horiz: float, dt_max: float) -> TtcResult:
    x = _as_state(model, state)
    u = _as_control(model, control)
    times = time_grid(t_horiz, dt_max)
    oc, ov, orad = pack_obstacles(obstacles, times)
    vb, _ = scratch()
    tau, idx, seg = _ttc(int(model.kind), x, u, model.packed(), times, oc, ov, orad, vb)
    if idx < 0:
        return TtcResult(math.inf, None, None, None)
    return TtcResult(tau, int(idx), propagate(model, x, u, tau, dt_max), int(seg))


def softening_signature(model: Model, state, control, T: float, dt_max: float) -> int:
    """Identifies where constraint softening is active along the first T seconds.

    Two controls with equal signatures integrate through the same branches of
    the softened dynamics, so the cost is smooth between them.
    """
    x = _as_state(model, state)
    u = _as_control(model, control)
    out = np.empty_like(x)
    vb, _ = scratch()
    return int(_soft_signature(int(model.kind), x, u, float(T), float(dt_max), model.packed(),
                               out, vb))
