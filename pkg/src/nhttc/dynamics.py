"""Robot motion models: continuous dynamics, analytic partials, collision disks.

Six models are supported, identified by :class:`ModelKind`. The numerical
kernels are numba functions over an integer kind code and a packed parameter
vector so that the optimizer's inner loop never leaves compiled code. The
public functions at the bottom of the module wrap them with validation.

State layouts::

    Velocity         (x, y)                  control (vx, vy)
    Acceleration     (x, y, vx, vy)          control (ax, ay)
    DiffDrive        (x, y, theta)           control (v, omega)
    SmoothDiffDrive  (x, y, theta, v, omega) control (a, alpha)
    SimpleCar        (x, y, theta)           control (v, phi)
    SmoothCar        (x, y, theta, v, phi)   control (a, psi)

Car models use the rear-axle center as reference point; their collision disk
sits at the body center with radius ``L*sqrt(5)/4``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

# Multiplier applied to a constrained rate when the state is already past its
# bound and the control pushes it further. Never zero, so gradients survive.
SOFT = 0.01

VELOCITY, ACCELERATION, DIFF_DRIVE, SMOOTH_DIFF_DRIVE, SIMPLE_CAR, SMOOTH_CAR = range(6)

# packed parameter vector layout
P_VMAX, P_WMAX, P_AMAX, P_ALPHAMAX, P_PHIMAX, P_PSIMAX, P_LENGTH, P_RADIUS = range(8)
N_PARAMS = 8

_STATE_DIMS = (2, 4, 3, 5, 3, 5)
MAX_STATE_DIM = 5
CONTROL_DIM = 2


class ModelKind(enum.IntEnum):
    Velocity = VELOCITY
    Acceleration = ACCELERATION
    DiffDrive = DIFF_DRIVE
    SmoothDiffDrive = SMOOTH_DIFF_DRIVE
    SimpleCar = SIMPLE_CAR
    SmoothCar = SMOOTH_CAR

    @property
    def state_dim(self) -> int:
        return _STATE_DIMS[self]

    @property
    def control_dim(self) -> int:
        return CONTROL_DIM

    @property
    def is_car(self) -> bool:
        return self in (ModelKind.SimpleCar, ModelKind.SmoothCar)

    @classmethod
    def parse(cls, name: "str | int | ModelKind") -> "ModelKind":
        if isinstance(name, ModelKind):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).replace("_", "").replace("-", "").lower()
        for kind in cls:
            if kind.name.lower() == key or _ABBREV[kind] == key:
                return kind
        raise ValueError(f"unknown model kind {name!r}")


_ABBREV = {
    ModelKind.Velocity: "v",
    ModelKind.Acceleration: "a",
    ModelKind.DiffDrive: "dd",
    ModelKind.SmoothDiffDrive: "sdd",
    ModelKind.SimpleCar: "car",
    ModelKind.SmoothCar: "scar",
}


@dataclass(frozen=True)
class ControlLimits:
    """Symmetric control bounds and state-constraint bounds.

    Defaults are the values used throughout the experiments: linear velocity
    0.3 m/s, angular velocity 1 rad/s, linear acceleration 1 m/s^2, angular
    acceleration pi rad/s^2, steering angle pi/4 rad, steering rate pi/4 rad/s.
    """

    v_max: float = 0.3
    w_max: float = 1.0
    a_max: float = 1.0
    alpha_max: float = math.pi
    phi_max: float = math.pi / 4
    psi_max: float = math.pi / 4

    def __post_init__(self):
        for name in ("v_max", "w_max", "a_max", "alpha_max", "phi_max", "psi_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class Model:
    """A robot type plus the geometry needed to place its collision disk.

    ``radius`` is used by the disk-like kinds; car kinds derive their radius
    from ``length`` instead.
    """

    kind: ModelKind
    limits: ControlLimits = field(default_factory=ControlLimits)
    radius: float = 0.1
    length: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.kind.is_car:
            if self.length is None:
                raise ValueError(f"{self.kind.name} requires a body length")
            if not self.length > 0:
                raise ValueError(f"body length must be positive, got {self.length!r}")
        elif not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius!r}")

    @property
    def state_dim(self) -> int:
        return self.kind.state_dim

    @property
    def collision_radius(self) -> float:
        if self.kind.is_car:
            return self.length * math.sqrt(5.0) / 4.0
        return self.radius

    def packed(self) -> np.ndarray:
        lim = self.limits
        return np.array(
            [lim.v_max, lim.w_max, lim.a_max, lim.alpha_max, lim.phi_max, lim.psi_max,
             self.length if self.length is not None else 0.0, self.collision_radius],
            dtype=np.float64,
        )

    def control_bounds(self) -> np.ndarray:
        return np.array(_control_bounds(int(self.kind), self.packed()))


@dataclass(frozen=True)
class WorkspaceDisk:
    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class Partials:
    d_state: np.ndarray
    d_control: np.ndarray


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True, error_model="numpy", _nrt=False)
def state_dim(kind):
    if kind == VELOCITY:
        return 2
    if kind == ACCELERATION:
        return 4
    if kind == DIFF_DRIVE or kind == SIMPLE_CAR:
        return 3
    return 5


@njit(cache=True, error_model="numpy", _nrt=False)
def _control_bounds(kind, prm):
    if kind == VELOCITY:
        return prm[P_VMAX], prm[P_VMAX]
    if kind == ACCELERATION:
        return prm[P_AMAX], prm[P_AMAX]
    if kind == DIFF_DRIVE:
        return prm[P_VMAX], prm[P_WMAX]
    if kind == SMOOTH_DIFF_DRIVE:
        return prm[P_AMAX], prm[P_ALPHAMAX]
    if kind == SIMPLE_CAR:
        return prm[P_VMAX], prm[P_PHIMAX]
    return prm[P_AMAX], prm[P_PSIMAX]


@njit(cache=True, error_model="numpy", _nrt=False)
def _scalar_soft(value, rate, bound):
    if abs(value) > bound and rate * value > 0.0:
        return SOFT
    return 1.0


@njit(cache=True, error_model="numpy", _nrt=False)
def _soft_factors(kind, x, u, prm):
    """Softening multipliers (velocity channel, steering channel)."""
    if kind == ACCELERATION:
        vx = x[2]
        vy = x[3]
        vmax = prm[P_VMAX]
        if vx * vx + vy * vy > vmax * vmax and u[0] * vx + u[1] * vy > 0.0:
            return SOFT, 1.0
        return 1.0, 1.0
    if kind == SMOOTH_DIFF_DRIVE:
        return _scalar_soft(x[3], u[0], prm[P_VMAX]), 1.0
    if kind == SMOOTH_CAR:
        return (_scalar_soft(x[3], u[0], prm[P_VMAX]),
                _scalar_soft(x[4], u[1], prm[P_PHIMAX]))
    return 1.0, 1.0


@njit(cache=True, error_model="numpy", _nrt=False)
def _deriv(kind, x, u, prm, out):
    if kind == VELOCITY:
        out[0] = u[0]
        out[1] = u[1]
    elif kind == ACCELERATION:
        ka, _ = _soft_factors(kind, x, u, prm)
        out[0] = x[2]
        out[1] = x[3]
        out[2] = ka * u[0]
        out[3] = ka * u[1]
    elif kind == DIFF_DRIVE:
        out[0] = u[0] * math.cos(x[2])
        out[1] = u[0] * math.sin(x[2])
        out[2] = u[1]
    elif kind == SMOOTH_DIFF_DRIVE:
        ka, _ = _soft_factors(kind, x, u, prm)
        out[0] = x[3] * math.cos(x[2])
        out[1] = x[3] * math.sin(x[2])
        out[2] = x[4]
        out[3] = ka * u[0]
        out[4] = u[1]
    elif kind == SIMPLE_CAR:
        out[0] = u[0] * math.cos(x[2])
        out[1] = u[0] * math.sin(x[2])
        out[2] = u[0] * math.tan(u[1]) / prm[P_LENGTH]
    else:
        ka, kp = _soft_factors(kind, x, u, prm)
        out[0] = x[3] * math.cos(x[2])
        out[1] = x[3] * math.sin(x[2])
        out[2] = x[3] * math.tan(x[4]) / prm[P_LENGTH]
        out[3] = ka * u[0]
        out[4] = kp * u[1]


@njit(cache=True, error_model="numpy", _nrt=False)
def _partials(kind, x, u, prm, A, B):
    """Fill A = d(xdot)/dx (n x n) and B = d(xdot)/du (n x 2).

    Only the leading n x n / n x 2 blocks are written; callers may pass
    larger scratch buffers.
    """
    n = state_dim(kind)
    for i in range(n):
        for j in range(n):
            A[i, j] = 0.0
        B[i, 0] = 0.0
        B[i, 1] = 0.0
    if kind == VELOCITY:
        B[0, 0] = 1.0
        B[1, 1] = 1.0
    elif kind == ACCELERATION:
        ka, _ = _soft_factors(kind, x, u, prm)
        A[0, 2] = 1.0
        A[1, 3] = 1.0
        B[2, 0] = ka
        B[3, 1] = ka
    elif kind == DIFF_DRIVE:
        c = math.cos(x[2])
        s = math.sin(x[2])
        A[0, 2] = -u[0] * s
        A[1, 2] = u[0] * c
        B[0, 0] = c
        B[1, 0] = s
        B[2, 1] = 1.0
    elif kind == SMOOTH_DIFF_DRIVE:
        ka, _ = _soft_factors(kind, x, u, prm)
        c = math.cos(x[2])
        s = math.sin(x[2])
        A[0, 2] = -x[3] * s
        A[0, 3] = c
        A[1, 2] = x[3] * c
        A[1, 3] = s
        A[2, 4] = 1.0
        B[3, 0] = ka
        B[4, 1] = 1.0
    elif kind == SIMPLE_CAR:
        L = prm[P_LENGTH]
        c = math.cos(x[2])
        s = math.sin(x[2])
        cphi = math.cos(u[1])
        A[0, 2] = -u[0] * s
        A[1, 2] = u[0] * c
        B[0, 0] = c
        B[1, 0] = s
        B[2, 0] = math.tan(u[1]) / L
        B[2, 1] = u[0] / (L * cphi * cphi)
    else:
        ka, kp = _soft_factors(kind, x, u, prm)
        L = prm[P_LENGTH]
        c = math.cos(x[2])
        s = math.sin(x[2])
        cphi = math.cos(x[4])
        A[0, 2] = -x[3] * s
        A[0, 3] = c
        A[1, 2] = x[3] * c
        A[1, 3] = s
        A[2, 3] = math.tan(x[4]) / L
        A[2, 4] = x[3] / (L * cphi * cphi)
        B[3, 0] = ka
        B[4, 1] = kp


@njit(cache=True, error_model="numpy", _nrt=False)
def _center(kind, x, prm):
    if kind == SIMPLE_CAR or kind == SMOOTH_CAR:
        half = 0.5 * prm[P_LENGTH]
        return x[0] + half * math.cos(x[2]), x[1] + half * math.sin(x[2])
    return x[0], x[1]


@njit(cache=True, error_model="numpy", _nrt=False)
def _center_jac(kind, x, prm, P):
    """Fill P = d(center)/d(state), shape 2 x n."""
    n = state_dim(kind)
    for j in range(n):
        P[0, j] = 0.0
        P[1, j] = 0.0
    P[0, 0] = 1.0
    P[1, 1] = 1.0
    if kind == SIMPLE_CAR or kind == SMOOTH_CAR:
        half = 0.5 * prm[P_LENGTH]
        P[0, 2] = -half * math.sin(x[2])
        P[1, 2] = half * math.cos(x[2])


@njit(cache=True, error_model="numpy", _nrt=False)
def _project_control(kind, u, prm, out):
    b0, b1 = _control_bounds(kind, prm)
    out[0] = min(max(u[0], -b0), b0)
    out[1] = min(max(u[1], -b1), b1)


@njit(cache=True, error_model="numpy", _nrt=False)
def _clamp_rate(value, rate, dt, bound):
    nxt = value + dt * rate
    if abs(nxt) <= bound:
        return rate
    target = bound if nxt > 0 else -bound
    return (target - value) / dt


@njit(cache=True, error_model="numpy", _nrt=False)
def _project_state(kind, x, u, dt, prm, out):
    """One-step state-constraint projection of the control."""
    out[0] = u[0]
    out[1] = u[1]
    if kind == ACCELERATION:
        vmax = prm[P_VMAX]
        nx = x[2] + dt * u[0]
        ny = x[3] + dt * u[1]
        nrm = math.sqrt(nx * nx + ny * ny)
        if nrm > vmax:
            scale = vmax / nrm
            out[0] = (nx * scale - x[2]) / dt
            out[1] = (ny * scale - x[3]) / dt
    elif kind == SMOOTH_DIFF_DRIVE:
        out[0] = _clamp_rate(x[3], u[0], dt, prm[P_VMAX])
    elif kind == SMOOTH_CAR:
        out[0] = _clamp_rate(x[3], u[0], dt, prm[P_VMAX])
        out[1] = _clamp_rate(x[4], u[1], dt, prm[P_PHIMAX])


@njit(cache=True, error_model="numpy", _nrt=False)
def _project_full(kind, x, u, dt, prm, out):
    """Control-set projection, then state projection, then control-set again.

    The final clamp only matters when the current state is already far
    outside its bound; the state projection alone could then demand a rate
    beyond the control limit.
    """
    _project_control(kind, u, prm, out)
    _project_state(kind, x, out, dt, prm, out)
    _project_control(kind, out, prm, out)


# ---------------------------------------------------------------------------
# validated Python API
# ---------------------------------------------------------------------------

def _as_state(model: Model, state) -> np.ndarray:
    x = np.asarray(state, dtype=np.float64)
    if x.shape != (model.state_dim,):
        raise ValueError(
            f"{model.kind.name} state must have shape ({model.state_dim},), got {x.shape}")
    return x


def _as_control(model: Model, control) -> np.ndarray:
    u = np.asarray(control, dtype=np.float64)
    if u.shape != (CONTROL_DIM,):
        raise ValueError(f"control must have shape (2,), got {u.shape}")
    return u


def continuous_derivative(model: Model, state, control) -> np.ndarray:
    """xdot = f(x, u) with softened state constraints."""
    x = _as_state(model, state)
    u = _as_control(model, control)
    out = np.empty(model.state_dim)
    _deriv(int(model.kind), x, u, model.packed(), out)
    return out


def continuous_partials(model: Model, state, control) -> Partials:
    x = _as_state(model, state)
    u = _as_control(model, control)
    n = model.state_dim
    A = np.empty((n, n))
    B = np.empty((n, CONTROL_DIM))
    _partials(int(model.kind), x, u, model.packed(), A, B)
    return Partials(A, B)


def workspace_projection(model: Model, state) -> tuple[WorkspaceDisk, np.ndarray]:
    """Collision disk of ``state`` and the Jacobian of its center."""
    x = _as_state(model, state)
    prm = model.packed()
    cx, cy = _center(int(model.kind), x, prm)
    P = np.empty((2, model.state_dim))
    _center_jac(int(model.kind), x, prm, P)
    return WorkspaceDisk(np.array([cx, cy]), model.collision_radius), P


def project_control(model: Model, control) -> np.ndarray:
    u = _as_control(model, control)
    out = np.empty(2)
    _project_control(int(model.kind), u, model.packed(), out)
    return out


def project_state_constraint(model: Model, state, control, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    x = _as_state(model, state)
    u = _as_control(model, control)
    out = np.empty(2)
    _project_state(int(model.kind), x, u, float(dt), model.packed(), out)
    return out
