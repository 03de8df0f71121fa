import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stlplan.geometry import Circle, ConvexPolygon, Rect, Scenario, Trajectory
from stlplan.stl import Always, And, Atom, Eventually, Interval, Not, Or, Until, node_count

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

REGION_POOL = ("A", "B", "C")


def random_shape(rng, lo=0.0, hi=10.0):
    kind = rng.integers(3)
    cx, cy = rng.uniform(lo + 2, hi - 2, size=2)
    if kind == 0:
        return Circle(float(cx), float(cy), float(rng.uniform(0.5, 2.0)))
    if kind == 1:
        w, h = rng.uniform(0.5, 2.0, size=2)
        return Rect(float(cx - w), float(cy - h), float(cx + w), float(cy + h))
    n = int(rng.integers(3, 7))
    ang = np.sort(rng.uniform(0, 2 * math.pi, size=n))
    # keep gaps below pi so the polygon is strictly convex
    while np.max(np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))) >= math.pi - 1e-3:
        ang = np.sort(rng.uniform(0, 2 * math.pi, size=n))
    r = rng.uniform(0.8, 2.0)
    return ConvexPolygon(tuple((float(cx + r * math.cos(a)), float(cy + r * math.sin(a))) for a in ang))


def random_formula(rng, budget, T, allow_not=True, allow_until=True, temporal_ok=True, max_b=None):
    """Random AST with at most ``budget`` nodes whose windows fit inside ``T``."""
    max_b = T if max_b is None else max_b
    choices = ["atom"]
    if budget >= 2:
        if allow_not:
            choices.append("not")
        if temporal_ok and max_b >= 0:
            choices += ["F", "G"]
    if budget >= 3:
        choices += ["and", "or"]
        if allow_until and temporal_ok and max_b >= 1:
            choices.append("U")
    kind = choices[rng.integers(len(choices))]
    if kind == "atom":
        return Atom(REGION_POOL[rng.integers(len(REGION_POOL))])
    if kind == "not":
        return Not(random_formula(rng, budget - 1, T, allow_not, allow_until, temporal_ok, max_b))
    if kind in ("F", "G", "U"):
        b = int(rng.integers(0 if kind != "U" else 1, max_b + 1))
        a = int(rng.integers(0, b + 1))
        rest = max_b - b
        if kind == "U":
            left = int(rng.integers(1, budget - 1))
            lhs = random_formula(rng, left, T, allow_not, allow_until, temporal_ok, rest)
            rhs = random_formula(rng, budget - 1 - left, T, allow_not, allow_until, temporal_ok, rest)
            return Until(Interval(a, b), lhs, rhs)
        cls = Eventually if kind == "F" else Always
        return cls(Interval(a, b), random_formula(rng, budget - 1, T, allow_not, allow_until, temporal_ok, rest))
    n = int(rng.integers(2, min(4, budget - 1) + 1)) if budget - 1 >= 2 else 2
    sizes = np.full(n, 1)
    for _ in range(budget - 1 - n):
        sizes[rng.integers(n)] += 1 if rng.random() < 0.5 else 0
    kids = tuple(random_formula(rng, int(s), T, allow_not, allow_until, temporal_ok, max_b) for s in sizes)
    return (And if kind == "and" else Or)(kids)


def random_fragment_formula(rng, T, max_nodes=9):
    """Conjunction/disjunction of F/G over Boolean state formulas, intervals inside ``[0, T]``."""

    def state(budget):
        if budget < 3 or rng.random() < 0.6:
            return Atom(REGION_POOL[rng.integers(len(REGION_POOL))])
        return (And if rng.random() < 0.5 else Or)((state(1), state(1)))

    def temporal():
        b = int(rng.integers(0, T + 1))
        a = int(rng.integers(0, b + 1))
        cls = Eventually if rng.random() < 0.5 else Always
        return cls(Interval(a, b), state(3))

    n = int(rng.integers(1, 4))
    parts = [temporal() for _ in range(n)]
    if n == 1:
        return parts[0]
    f = (And if rng.random() < 0.5 else Or)(tuple(parts))
    return f if node_count(f) <= max_nodes + 6 else parts[0]


def random_walk(rng, T, start=(5.0, 5.0), step=1.0):
    xy = np.empty((T + 1, 2))
    xy[0] = start
    for t in range(1, T + 1):
        xy[t] = np.clip(xy[t - 1] + rng.normal(0, step, size=2), 0.0, 10.0)
    psi = rng.uniform(-math.pi, math.pi, size=T + 1)
    return Trajectory(np.column_stack([xy, psi]))


def random_instance(rng, T, max_nodes=12, allow_not=True, allow_until=True):
    f = random_formula(rng, int(rng.integers(1, max_nodes + 1)), T, allow_not, allow_until)
    regions = {name: random_shape(rng) for name in REGION_POOL}
    scenario = Scenario(Rect(0.0, 0.0, 10.0, 10.0), regions, (), (5.0, 5.0, 0.0), T, "in(A)")
    return f, random_walk(rng, T), scenario


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary lines

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if rep.passed else "FAIL"
    if _ACCEPTANCE.get(number, ("PASS",))[0] == "PASS":
        _ACCEPTANCE[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {status}: {title}" + (f" ({detail})" if detail else ""))
