"""Exact and smoothed STL robustness, its gradient, and Boolean satisfaction.

Both robustness evaluators run one vectorized recursion over whole signals:
each node maps to an array of robustness values for every start time at
which it is defined. The smooth evaluator swaps ``max``/``min`` for the
temperature-``k`` log-sum-exp pair and optionally carries forward-mode
tangents with respect to every trajectory coordinate.

Boolean satisfaction is a separate, direct recursion over point-in-shape
tests and never looks at robustness values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import stl
from .geometry import Scenario, Trajectory
from .stl import Always, And, Atom, Eventually, Formula, Not, Or, Until

__all__ = [
    "DEFAULT_K",
    "SmoothParams",
    "RobustnessResult",
    "HorizonError",
    "smooth_max",
    "smooth_min",
    "check_horizon",
    "robustness_signal",
    "robustness_at",
    "robustness_from_signals",
    "satisfied_from_signals",
    "atom_signals",
    "exact_robustness",
    "smooth_robustness",
    "smooth_robustness_grad",
    "finite_difference_grad",
    "boolean_satisfaction",
    "evaluate",
    "aggregation_profile",
    "smoothing_error_bound",
]

DEFAULT_K = 300.0


@dataclass(frozen=True)
class SmoothParams:
    k: float = DEFAULT_K

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise ValueError(f"sharpness k must be finite and positive, got {self.k}")


@dataclass(frozen=True)
class RobustnessResult:
    value: float
    satisfied: bool


class HorizonError(ValueError):
    """A temporal node would read past the end of the trajectory."""

    def __init__(self, node: Formula, t: int, horizon: int):
        b = node.interval.b
        super().__init__(
            f"horizon overrun at {stl.render(node)}: t={t} + b={b} exceeds T={horizon}"
        )
        self.node = node
        self.t = t
        self.horizon = horizon


# ---------------------------------------------------------------- smooth max / min


def smooth_max(x, k: float, axis: int = -1) -> np.ndarray:
    """``(1/k) log sum exp(k x)`` along ``axis``, stabilised by the true max."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(k * (x - safe)), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = safe + np.log(s) / k
    out = np.where(np.isfinite(m), out, m)
    return np.squeeze(out, axis=axis)


def smooth_min(x, k: float, axis: int = -1) -> np.ndarray:
    return -smooth_max(-np.asarray(x, dtype=float), k, axis=axis)


def _reduce(vals: np.ndarray, tans: np.ndarray | None, k: float | None, mode: str):
    """Reduce ``vals (L, n)`` along the last axis; tangents ``(L, P, n)`` follow the softmax weights."""
    if k is None:
        return (vals.max(axis=1) if mode == "max" else vals.min(axis=1)), None
    sign = 1.0 if mode == "max" else -1.0
    v = smooth_max(sign * vals, k, axis=1)
    if tans is None:
        return sign * v, None
    w = np.exp(k * (sign * vals - v[:, None]))
    return sign * v, np.einsum("lpn,ln->lp", tans, w)


def _reduce2(x, tx, y, ty, k, mode):
    """Pairwise version of :func:`_reduce`; tolerates one infinite operand."""
    if k is None:
        return (np.maximum(x, y) if mode == "max" else np.minimum(x, y)), None
    sign = 1.0 if mode == "max" else -1.0
    sx, sy = sign * x, sign * y
    m = np.maximum(sx, sy)
    with np.errstate(invalid="ignore", over="ignore"):
        gap = np.where(np.isfinite(sx) & np.isfinite(sy), np.abs(sx - sy), np.inf)
    v = m + np.log1p(np.exp(-k * gap)) / k
    if tx is None:
        return sign * v, None
    with np.errstate(invalid="ignore"):
        wx = np.where(np.isfinite(sx), np.exp(k * (sx - v)), 0.0)
        wy = np.where(np.isfinite(sy), np.exp(k * (sy - v)), 0.0)
    return sign * v, tx * wx[:, None] + ty * wy[:, None]


# ---------------------------------------------------------------- horizon check


def check_horizon(f: Formula, t: int, horizon: int) -> None:
    """Raise :class:`HorizonError` naming the outermost node that reads past ``horizon``."""
    if t < 0 or t > horizon:
        raise ValueError(f"evaluation time {t} outside [0, {horizon}]")

    def visit(node, t_hi):
        if isinstance(node, (Eventually, Always, Until)):
            if t_hi + node.interval.b > horizon:
                raise HorizonError(node, t_hi, horizon)
        if isinstance(node, Until):
            visit(node.rhs, t_hi + node.interval.b)
            if node.interval.b >= 1:
                visit(node.lhs, t_hi + node.interval.b - 1)
        elif isinstance(node, (Eventually, Always)):
            visit(node.child, t_hi + node.interval.b)
        else:
            for c in stl.children_of(node):
                visit(c, t_hi)

    visit(f, t)


# ---------------------------------------------------------------- robustness recursion


def robustness_signal(f: Formula, signals: dict, k: float | None = None, tangents: dict | None = None):
    """Robustness of ``f`` at every start time where it is defined.

    ``signals`` maps region names to per-timestep predicate values. With
    ``k=None`` the semantics are exact; otherwise min/max are smoothed.
    ``tangents`` (smooth mode only) maps region names to ``(T+1, P)``
    derivative arrays and turns on forward-mode differentiation.

    Returns ``(values, tangents_or_None)``.
    """
    if tangents is not None and k is None:
        raise ValueError("tangents require a smooth evaluation (k given)")
    want = tangents is not None

    def ev(node):
        if isinstance(node, Atom):
            v = np.asarray(signals[node.region], dtype=float)
            return v, (tangents[node.region] if want else None)
        if isinstance(node, Not):
            v, tg = ev(node.child)
            return -v, (-tg if want else None)
        if isinstance(node, (And, Or)):
            parts = [ev(c) for c in node.children]
            L = min(len(v) for v, _ in parts)
            vals = np.stack([v[:L] for v, _ in parts], axis=1)
            tans = np.stack([tg[:L] for _, tg in parts], axis=2) if want else None
            return _reduce(vals, tans, k, "min" if isinstance(node, And) else "max")
        if isinstance(node, (Eventually, Always)):
            v, tg = ev(node.child)
            a, b = node.interval.a, node.interval.b
            L = len(v) - b
            if L <= 0:
                return np.empty(0), (np.empty((0, tg.shape[1])) if want else None)
            w = b - a + 1
            vals = sliding_window_view(v, w)[a : a + L]
            tans = sliding_window_view(tg, w, axis=0)[a : a + L] if want else None
            return _reduce(vals, tans, k, "max" if isinstance(node, Eventually) else "min")
        if isinstance(node, Until):
            return until(node)
        raise TypeError(f"not a formula node: {node!r}")

    def until(node):
        vphi, tphi = ev(node.lhs)
        vpsi, tpsi = ev(node.rhs)
        a, b = node.interval.a, node.interval.b
        L = len(vpsi) - b if b == 0 else min(len(vpsi) - b, len(vphi) - b + 1)
        P = tpsi.shape[1] if want else 0
        if L <= 0:
            return np.empty(0), (np.empty((0, P)) if want else None)
        # running min over lhs[t .. t+tau-1]; empty prefix is +inf
        run = np.full(L, np.inf)
        trun = np.zeros((L, P)) if want else None
        out, tout = None, None
        for tau in range(b + 1):
            if tau >= a:
                c, tc = _reduce2(vpsi[tau : tau + L], tpsi[tau : tau + L] if want else None, run, trun, k, "min")
                if out is None:
                    out, tout = c, tc
                else:
                    out, tout = _reduce2(out, tout, c, tc, k, "max")
            if tau < b:
                run, trun = _reduce2(run, trun, vphi[tau : tau + L], tphi[tau : tau + L] if want else None, k, "min")
        return out, tout

    return ev(f)


def robustness_at(f: Formula, signals: dict, t: int = 0, k: float | None = None) -> np.ndarray:
    """Robustness at time ``t`` for a batch of signals shaped ``(..., T+1)``.

    Only the timesteps the formula reads are touched, so scoring many
    candidate trajectories is cheap. The arithmetic mirrors
    :func:`robustness_signal` operation for operation.
    """

    def ev(node, times):
        if isinstance(node, Atom):
            return np.asarray(signals[node.region], dtype=float)[..., times]
        if isinstance(node, Not):
            return -ev(node.child, times)
        if isinstance(node, (And, Or)):
            vals = np.stack([ev(c, times) for c in node.children], axis=-1)
            return _reduce_last(vals, k, "min" if isinstance(node, And) else "max")
        if isinstance(node, (Eventually, Always)):
            a, b = node.interval.a, node.interval.b
            tt = times[:, None] + np.arange(a, b + 1)[None, :]
            vals = ev(node.child, tt.ravel()).reshape(*np.shape(signals_probe)[:-1], len(times), b - a + 1)
            return _reduce_last(vals, k, "max" if isinstance(node, Eventually) else "min")
        if isinstance(node, Until):
            a, b = node.interval.a, node.interval.b
            run = np.full(np.shape(signals_probe)[:-1] + (len(times),), np.inf)
            out = None
            for tau in range(b + 1):
                if tau >= a:
                    c, _ = _reduce2(ev(node.rhs, times + tau), None, run, None, k, "min")
                    out = c if out is None else _reduce2(out, None, c, None, k, "max")[0]
                if tau < b:
                    run, _ = _reduce2(run, None, ev(node.lhs, times + tau), None, k, "min")
            return out
        raise TypeError(f"not a formula node: {node!r}")

    if not signals:
        raise ValueError("no predicate signals given")
    signals_probe = np.asarray(next(iter(signals.values())))
    check_horizon(f, t, signals_probe.shape[-1] - 1)
    return ev(f, np.array([t]))[..., 0]


def _reduce_last(vals, k, mode):
    if k is None:
        return vals.max(axis=-1) if mode == "max" else vals.min(axis=-1)
    sign = 1.0 if mode == "max" else -1.0
    return sign * smooth_max(sign * vals, k, axis=-1)


def robustness_from_signals(f: Formula, signals: dict, t: int = 0, k: float | None = None) -> float:
    """Robustness at time ``t`` from predicate signals (exact when ``k`` is None)."""
    horizon = min(len(np.asarray(s)) for s in signals.values()) - 1 if signals else 0
    check_horizon(f, t, horizon)
    vals, _ = robustness_signal(f, signals, k)
    return float(vals[t])


def satisfied_from_signals(f: Formula, truth: dict, t: int = 0) -> bool:
    """Qualitative semantics over Boolean predicate signals, evaluated point by point."""
    horizon = min(len(s) for s in truth.values()) - 1 if truth else 0
    check_horizon(f, t, horizon)

    def sat(node, t):
        if isinstance(node, Atom):
            return bool(truth[node.region][t])
        if isinstance(node, Not):
            return not sat(node.child, t)
        if isinstance(node, And):
            return all(sat(c, t) for c in node.children)
        if isinstance(node, Or):
            return any(sat(c, t) for c in node.children)
        a, b = node.interval.a, node.interval.b
        if isinstance(node, Eventually):
            return any(sat(node.child, t + s) for s in range(a, b + 1))
        if isinstance(node, Always):
            return all(sat(node.child, t + s) for s in range(a, b + 1))
        # Until: some tau in [a, b] where rhs holds and lhs held at every earlier step from t
        return any(
            sat(node.rhs, t + tau) and all(sat(node.lhs, t + s) for s in range(tau)) for tau in range(a, b + 1)
        )

    return sat(f, t)


# ---------------------------------------------------------------- trajectory-level API


def _region(scenario: Scenario, name: str):
    try:
        return scenario.regions[name]
    except KeyError:
        raise KeyError(f"formula references unknown region {name!r}") from None


def atom_signals(f: Formula, traj: Trajectory, scenario: Scenario, with_grad: bool = False):
    """Signed-distance signal per region in ``f``; with ``with_grad`` also ``(T+1, 2(T+1))`` tangents."""
    xy = traj.xy
    n = len(xy)
    signals, tangents = {}, {}
    for name in stl.region_names(f):
        shape = _region(scenario, name)
        signals[name] = shape.signed_distance(xy)
        if with_grad:
            g = shape.signed_distance_grad(xy)
            tg = np.zeros((n, 2 * n))
            idx = np.arange(n)
            tg[idx, 2 * idx] = g[:, 0]
            tg[idx, 2 * idx + 1] = g[:, 1]
            tangents[name] = tg
    return signals, (tangents if with_grad else None)


def exact_robustness(f: Formula, traj: Trajectory, scenario: Scenario, t: int = 0) -> float:
    check_horizon(f, t, traj.horizon)
    signals, _ = atom_signals(f, traj, scenario)
    vals, _ = robustness_signal(f, signals)
    return float(vals[t])


def smooth_robustness(
    f: Formula, traj: Trajectory, scenario: Scenario, t: int = 0, sp: SmoothParams = SmoothParams()
) -> float:
    check_horizon(f, t, traj.horizon)
    signals, _ = atom_signals(f, traj, scenario)
    vals, _ = robustness_signal(f, signals, sp.k)
    return float(vals[t])


def smooth_robustness_grad(
    f: Formula, traj: Trajectory, scenario: Scenario, t: int = 0, sp: SmoothParams = SmoothParams()
) -> np.ndarray:
    """Gradient of the smooth robustness, shape ``(T+1, 3)`` ordered ``(x, y, psi)``.

    The heading column is identically zero since no predicate reads it.
    """
    check_horizon(f, t, traj.horizon)
    signals, tangents = atom_signals(f, traj, scenario, with_grad=True)
    _, tg = robustness_signal(f, signals, sp.k, tangents)
    grad = np.zeros((len(traj), 3))
    grad[:, :2] = tg[t].reshape(-1, 2)
    return grad


def finite_difference_grad(
    f: Formula, traj: Trajectory, scenario: Scenario, t: int = 0, sp: SmoothParams = SmoothParams(), h: float = 1e-4
) -> np.ndarray:
    """Central differences of the smooth robustness in every pose coordinate."""
    base = np.array(traj.poses)
    grad = np.zeros_like(base)
    for i in range(base.shape[0]):
        for j in range(3):
            plus, minus = base.copy(), base.copy()
            plus[i, j] += h
            minus[i, j] -= h
            hi = smooth_robustness(f, Trajectory(plus), scenario, t, sp)
            lo = smooth_robustness(f, Trajectory(minus), scenario, t, sp)
            grad[i, j] = (hi - lo) / (2 * h)
    return grad


def boolean_satisfaction(f: Formula, traj: Trajectory, scenario: Scenario, t: int = 0) -> bool:
    truth = {name: _region(scenario, name).contains(traj.xy) for name in stl.region_names(f)}
    if not truth:
        check_horizon(f, t, traj.horizon)
    return satisfied_from_signals(f, truth, t)


def evaluate(f: Formula, traj: Trajectory, scenario: Scenario, t: int = 0) -> RobustnessResult:
    rho = exact_robustness(f, traj, scenario, t)
    return RobustnessResult(rho, rho > 0)


# ---------------------------------------------------------------- smoothing error bound


def aggregation_profile(f: Formula) -> tuple[int, int]:
    """``(number of min/max aggregations, largest aggregation arity)``.

    Until contributes three aggregations: the outer max over the window, the
    pairwise min, and the prefix min over the left operand.
    """
    count, arity = 0, 1
    for node, _ in stl.iter_nodes(f):
        if isinstance(node, (And, Or)):
            count += 1
            arity = max(arity, len(node.children))
        elif isinstance(node, (Eventually, Always)):
            count += 1
            arity = max(arity, node.interval.b - node.interval.a + 1)
        elif isinstance(node, Until):
            count += 3
            arity = max(arity, node.interval.b - node.interval.a + 1, 2, node.interval.b)
    return count, arity


def smoothing_error_bound(f: Formula, k: float) -> float:
    """Upper bound on ``|smooth - exact|``: aggregations times ``ln(max arity) / k``."""
    count, arity = aggregation_profile(f)
    return count * math.log(arity) / k
