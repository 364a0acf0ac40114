import math

import numpy as np
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from nhttc.dynamics import ControlLimits, Model, ModelKind

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

LIMITS = ControlLimits()
KINDS = list(ModelKind)


def model_for(kind, **kw) -> Model:
    kind = ModelKind.parse(kind)
    if kind.is_car:
        kw.setdefault("length", 0.4)
    return Model(kind, **kw)


def random_state(kind, rng, lim=LIMITS) -> np.ndarray:
    """A state inside the constraint set, heading and rates included."""
    kind = ModelKind.parse(kind)
    xy = rng.uniform(-2.0, 2.0, 2)
    th = rng.uniform(-math.pi, math.pi)
    if kind == ModelKind.Velocity:
        return xy
    if kind == ModelKind.Acceleration:
        sp, a = rng.uniform(0, lim.v_max), rng.uniform(-math.pi, math.pi)
        return np.r_[xy, sp * math.cos(a), sp * math.sin(a)]
    if kind.state_dim == 3:
        return np.r_[xy, th]
    if kind == ModelKind.SmoothDiffDrive:
        return np.r_[xy, th, rng.uniform(-lim.v_max, lim.v_max), rng.uniform(-1, 1)]
    return np.r_[xy, th, rng.uniform(-lim.v_max, lim.v_max),
                 rng.uniform(-lim.phi_max, lim.phi_max)]


def random_control(model: Model, rng) -> np.ndarray:
    b = model.control_bounds()
    return rng.uniform(-b, b)


seeds = st.integers(min_value=0, max_value=2**32 - 1)
kinds = st.sampled_from(KINDS)


ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    """Record and print one verdict line; the caller asserts ``ok`` afterwards."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
