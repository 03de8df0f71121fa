"""Independent reference implementations used as test oracles.

Nothing here imports the evaluators under test; values are computed with
plain Python loops straight from the textbook definitions.
"""

from __future__ import annotations

import math

from stlplan.stl import Always, And, Atom, Eventually, Not, Or, Until


def _lse_max(xs, k):
    m = max(xs)
    if math.isinf(m):
        return m
    return m + math.log(sum(math.exp(k * (x - m)) for x in xs)) / k


def _smax(xs, k):
    xs = list(xs)
    if k is None:
        return max(xs)
    return _lse_max(xs, k)


def _smin(xs, k):
    xs = list(xs)
    if k is None:
        return min(xs)
    return -_lse_max([-x for x in xs], k)


def rho_loops(f, mu: dict, t: int, k=None) -> float:
    """Robustness from per-region value lists ``mu[name][t]`` by direct recursion."""
    if isinstance(f, Atom):
        return float(mu[f.region][t])
    if isinstance(f, Not):
        return -rho_loops(f.child, mu, t, k)
    if isinstance(f, And):
        return _smin([rho_loops(c, mu, t, k) for c in f.children], k)
    if isinstance(f, Or):
        return _smax([rho_loops(c, mu, t, k) for c in f.children], k)
    if isinstance(f, Eventually):
        return _smax([rho_loops(f.child, mu, t + s, k) for s in range(f.interval.a, f.interval.b + 1)], k)
    if isinstance(f, Always):
        return _smin([rho_loops(f.child, mu, t + s, k) for s in range(f.interval.a, f.interval.b + 1)], k)
    if isinstance(f, Until):
        if k is not None:
            raise NotImplementedError("oracle covers exact Until only")
        best = -math.inf
        for tau in range(f.interval.a, f.interval.b + 1):
            prefix = min((rho_loops(f.lhs, mu, t + s, None) for s in range(tau)), default=math.inf)
            best = max(best, min(rho_loops(f.rhs, mu, t + tau, None), prefix))
        return best
    raise TypeError(f)


def truth_loops(f, inside: dict, t: int) -> bool:
    """Qualitative semantics from per-region Boolean lists."""
    if isinstance(f, Atom):
        return bool(inside[f.region][t])
    if isinstance(f, Not):
        return not truth_loops(f.child, inside, t)
    if isinstance(f, And):
        return all(truth_loops(c, inside, t) for c in f.children)
    if isinstance(f, Or):
        return any(truth_loops(c, inside, t) for c in f.children)
    if isinstance(f, Eventually):
        return any(truth_loops(f.child, inside, t + s) for s in range(f.interval.a, f.interval.b + 1))
    if isinstance(f, Always):
        return all(truth_loops(f.child, inside, t + s) for s in range(f.interval.a, f.interval.b + 1))
    if isinstance(f, Until):
        return any(
            truth_loops(f.rhs, inside, t + tau) and all(truth_loops(f.lhs, inside, t + s) for s in range(tau))
            for tau in range(f.interval.a, f.interval.b + 1)
        )
    raise TypeError(f)


def boundary_distance(vertices, p, samples_per_edge: int = 20_000) -> float:
    """Distance from ``p`` to a polygon boundary by dense sampling of every edge."""
    best = math.inf
    n = len(vertices)
    for i in range(n):
        (x0, y0), (x1, y1) = vertices[i], vertices[(i + 1) % n]
        for j in range(samples_per_edge + 1):
            s = j / samples_per_edge
            d = math.hypot(x0 + s * (x1 - x0) - p[0], y0 + s * (y1 - y0) - p[1])
            best = min(best, d)
    return best


def softplus(x: float) -> float:
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)
