"""Triggered segment repair: scan a trajectory, replan violating windows with a time-indexed RRT.

The scan walks ``t = 1..T``. A window ``[t, t+H]`` that collides, breaks
the step/heading limits, or belongs to a trajectory with negative exact
robustness triggers a goal-biased RRT rooted at pose ``t-1``. Every branch
reaching the end of the window is spliced into the trajectory and scored
by tracking error, squared curvature and smoothed robustness of the whole
spliced trajectory. The cheapest branch wins, is smoothed, and replaces
the window; branches whose last pose joins the untouched remainder within
the step and turn limits are preferred when any exist.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import asdict, dataclass, field

import numpy as np

from . import stl
from .geometry import Rect, Scenario, Trajectory, wrap_angle
from .losses import LossConfig, feasibility_loss
from .monitor import DEFAULT_K, atom_signals, check_horizon, exact_robustness, robustness_at

__all__ = [
    "KIN_TOL",
    "RepairConfig",
    "TreeNode",
    "SegmentCost",
    "Violation",
    "RepairAttempt",
    "TSPResult",
    "points_free",
    "edge_free",
    "count_collisions",
    "kinematic_ok",
    "violation_check",
    "steer",
    "segment_cost",
    "curvature",
    "rrt_repair",
    "smooth_segment",
    "run_tsp",
    "verify",
]

KIN_TOL = 1e-9  # slack on step-length and heading limits for floating-point round-off


@dataclass(frozen=True)
class RepairConfig:
    H: int = 10
    beta: float = 0.5
    M: int = 500
    d_max: float = 1.0
    dtheta_max: float = 0.6
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 10.0
    edge_resolution: float | None = None  # defaults to d_max / 4
    smoothing_window: int = 3
    bias_sigma: float = 1.0
    site_fraction: float = 0.5  # share of goal-biased samples drawn near predicate sites
    k: float = DEFAULT_K
    seed: int = 0

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("cost weights must be non-negative")
        if not (self.d_max > 0 and self.dtheta_max > 0):
            raise ValueError("kinematic limits must be positive")

    @property
    def resolution(self) -> float:
        return self.edge_resolution if self.edge_resolution else self.d_max / 4

    def loss_config(self) -> LossConfig:
        return LossConfig(d_max=self.d_max, delta_max=min(self.dtheta_max, math.pi))


@dataclass
class TreeNode:
    pose: np.ndarray
    time_index: int
    parent: "TreeNode | None" = None

    def path(self) -> np.ndarray:
        """Poses from the root's child down to this node."""
        out = []
        node = self
        while node.parent is not None:
            out.append(node.pose)
            node = node.parent
        return np.array(out[::-1])


@dataclass(frozen=True)
class SegmentCost:
    tracking: float
    curvature: float
    robustness_term: float
    total: float


@dataclass(frozen=True)
class Violation:
    violated: bool
    kind: str | None = None  # "geometric" | "kinematic" | "stl"


@dataclass
class RepairAttempt:
    t: int
    kind: str
    segment: np.ndarray | None
    cost: SegmentCost | None
    attempts_used: int
    branches: int

    @property
    def ok(self) -> bool:
        return self.segment is not None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "kind": self.kind,
            "attempts_used": self.attempts_used,
            "branches": self.branches,
            "repaired": self.ok,
            "cost": asdict(self.cost) if self.cost is not None else None,
        }


@dataclass
class TSPResult:
    repaired: Trajectory
    triggers: list[RepairAttempt] = field(default_factory=list)
    success: bool = False
    checks: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {"triggers": [a.to_dict() for a in self.triggers], "success": self.success, "checks": self.checks}


# ---------------------------------------------------------------- feasibility primitives


class _FreeSpace:
    """Vectorised point test for one scenario: axis-aligned rectangles in bulk, other shapes one by one."""

    def __init__(self, scenario: Scenario):
        self.world = scenario.world
        rects = [ob for ob in scenario.obstacles if isinstance(ob, Rect)]
        self.boxes = np.array([ob.bounds for ob in rects], dtype=float).reshape(-1, 4)
        self.others = [ob for ob in scenario.obstacles if not isinstance(ob, Rect)]
        self.box_list = [tuple(map(float, b)) for b in self.boxes]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        ok = self.world.contains(pts)
        if len(self.boxes):
            x, y = pts[:, 0:1], pts[:, 1:2]
            b = self.boxes
            hit = (x >= b[:, 0]) & (x <= b[:, 2]) & (y >= b[:, 1]) & (y <= b[:, 3])
            ok &= ~hit.any(axis=1)
        for ob in self.others:
            ok &= ~ob.contains(pts)
        return ok

    def edge(self, p, q, resolution: float) -> bool:
        """Same samples and tests as ``points_free(_edge_samples(...))``, without array overhead."""
        if self.others:
            return bool(np.all(self(_edge_samples(p, q, resolution))))
        px, py = float(p[0]), float(p[1])
        dx, dy = float(q[0]) - px, float(q[1]) - py
        n = max(1, math.ceil(math.hypot(dx, dy) / resolution))
        w = self.world
        boxes = self.box_list
        for i in range(n + 1):
            s = i / n
            x, y = px + s * dx, py + s * dy
            if not (w.xmin <= x <= w.xmax and w.ymin <= y <= w.ymax):
                return False
            for x0, y0, x1, y1 in boxes:
                if x0 <= x <= x1 and y0 <= y <= y1:
                    return False
        return True


@lru_cache(maxsize=64)
def _free_space(scenario: Scenario) -> _FreeSpace:
    # scenarios hash by identity
    return _FreeSpace(scenario)


def points_free(pts, scenario: Scenario) -> np.ndarray:
    """True where a point is inside the world and outside every obstacle."""
    return _free_space(scenario)(np.atleast_2d(np.asarray(pts, dtype=float)))


def _edge_samples(p, q, resolution):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    n = max(1, math.ceil(math.hypot(q[0] - p[0], q[1] - p[1]) / resolution))
    s = (np.arange(n + 1) / n)[:, None]
    return p + s * (q - p)


def edge_free(p, q, scenario: Scenario, resolution: float) -> bool:
    """Collision test of the straight edge ``p -> q`` sampled every ``resolution`` (endpoints included)."""
    return _free_space(scenario).edge(p, q, resolution)


def count_collisions(xy, scenario: Scenario, resolution: float) -> int:
    """Number of steps whose sampled edge leaves the world or touches an obstacle."""
    xy = np.asarray(xy, dtype=float)
    if len(xy) == 1:
        return int(not points_free(xy, scenario)[0])
    return sum(not edge_free(xy[i - 1], xy[i], scenario, resolution) for i in range(1, len(xy)))


def kinematic_ok(poses, d_max: float, dtheta_max: float) -> np.ndarray:
    """Per-step feasibility of consecutive poses (length ``n-1``)."""
    poses = np.asarray(poses, dtype=float)
    step = np.linalg.norm(np.diff(poses[:, :2], axis=0), axis=1)
    turn = np.abs(wrap_angle(np.diff(poses[:, 2])))
    return (step <= d_max + KIN_TOL) & (np.atleast_1d(turn) <= dtheta_max + KIN_TOL)


def violation_check(
    traj: Trajectory,
    t: int,
    scenario: Scenario,
    formula: stl.Formula,
    H: int,
    cfg: RepairConfig,
    rho: float | None = None,
) -> Violation:
    """Classify the window ``[t, min(t+H, T)]``; ``rho`` may pass a cached full-trajectory robustness."""
    T = traj.horizon
    if not 1 <= t <= T:
        raise ValueError(f"t must lie in [1, {T}]")
    end = min(t + H, T)
    window = traj.poses[t - 1 : end + 1]  # includes the step into t
    if count_collisions(window[:, :2], scenario, cfg.resolution):
        return Violation(True, "geometric")
    if not np.all(kinematic_ok(window, cfg.d_max, cfg.dtheta_max)):
        return Violation(True, "kinematic")
    if rho is None:
        rho = exact_robustness(formula, traj, scenario, 0)
    if rho < 0:
        return Violation(True, "stl")
    return Violation(False, None)


# ---------------------------------------------------------------- RRT pieces


def _wrap(a: float) -> float:
    return a - 2.0 * math.pi * math.ceil((a - math.pi) / (2.0 * math.pi))


def steer(z_near, q, cfg: RepairConfig) -> np.ndarray:
    """One timestep from ``z_near`` toward ``q`` under the step and heading limits.

    ``z_near`` is a :class:`TreeNode` or an ``(x, y, theta)`` pose. Motion
    follows the clamped heading; a target closer than ``d_max`` and within
    the turn limit is reached exactly.
    """
    pose = z_near.pose if isinstance(z_near, TreeNode) else np.asarray(z_near, dtype=float)
    x, y, th = float(pose[0]), float(pose[1]), float(pose[2])
    dx, dy = q[0] - x, q[1] - y
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        return np.array([x, y, th])
    turn = _wrap(math.atan2(dy, dx) - th)
    if abs(turn) <= cfg.dtheta_max:
        new_th = th + turn
        step = min(dist, cfg.d_max)
        if step == dist:
            return np.array([q[0], q[1], _wrap(new_th)])
    else:
        new_th = th + math.copysign(cfg.dtheta_max, turn)
        step = min(dist, cfg.d_max)
    return np.array([x + step * math.cos(new_th), y + step * math.sin(new_th), _wrap(new_th)])


def curvature(segment, prev_heading: float) -> np.ndarray:
    """Discrete curvature proxy: wrapped heading change per step."""
    th = np.concatenate([[prev_heading], np.asarray(segment)[:, 2]])
    return wrap_angle(np.diff(th))


def segment_cost(segment, anchors, prev_heading: float, rho_smooth: float, cfg: RepairConfig) -> SegmentCost:
    seg = np.asarray(segment, dtype=float)
    tracking = cfg.lambda1 * float(np.sum((seg[:, :2] - np.asarray(anchors)[:, :2]) ** 2))
    curv = cfg.lambda2 * float(np.sum(curvature(seg, prev_heading) ** 2))
    rob = -cfg.lambda3 * rho_smooth
    return SegmentCost(tracking, curv, rob, tracking + curv + rob)


def _predicate_sites(formula, scenario, lo, hi) -> np.ndarray:
    sites = []
    for node in stl.temporal_nodes(formula):
        if node.interval.a <= hi and node.interval.b >= lo:
            for name in stl.region_names(node):
                c = scenario.regions[name].centroid
                if c not in sites:
                    sites.append(c)
    return np.array(sites, dtype=float).reshape(-1, 2)


def rrt_repair(
    traj: Trajectory,
    tau: int,
    scenario: Scenario,
    formula: stl.Formula,
    cfg: RepairConfig,
    rng: np.random.Generator | None = None,
    nominal: Trajectory | None = None,
    kind: str = "manual",
) -> RepairAttempt:
    """Replan poses ``tau..min(tau+H, T)`` with a goal-biased, time-indexed RRT.

    ``nominal`` supplies the tracking anchors (defaults to ``traj``). Returns
    an attempt whose ``segment`` is None when no branch reached the window end.
    If some branches connect feasibly to pose ``end + 1`` the cost minimum is
    taken over those only.
    """
    T = traj.horizon
    if not 1 <= tau <= T:
        raise ValueError(f"trigger time must lie in [1, {T}]")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    nominal = nominal if nominal is not None else traj
    end = min(tau + cfg.H, T)
    anchors = nominal.poses[tau : end + 1]
    next_pose = traj.poses[end + 1] if end < T else None
    sites = _predicate_sites(formula, scenario, tau, end)
    w = scenario.world
    check_horizon(formula, 0, T)

    base_signals, _ = atom_signals(formula, traj, scenario)
    shapes = {name: scenario.regions[name] for name in base_signals}

    root = TreeNode(traj.poses[tau - 1].copy(), tau - 1)
    nodes = [root]
    xy = np.empty((cfg.M + 1, 2))
    times = np.empty(cfg.M + 1, dtype=int)
    xy[0], times[0] = root.pose[:2], root.time_index
    best_seg, best_cost = None, None
    finished: list[TreeNode] = []
    prev_heading = float(root.pose[2])

    for _ in range(cfg.M):
        if rng.random() < cfg.beta:
            if len(sites) and rng.random() < cfg.site_fraction:
                centre = sites[rng.integers(len(sites))]
            else:
                centre = anchors[rng.integers(len(anchors)), :2]
            q = centre + cfg.bias_sigma * rng.standard_normal(2)
        else:
            q = np.array([rng.uniform(w.xmin, w.xmax), rng.uniform(w.ymin, w.ymax)])
        n = len(nodes)
        d2 = np.sum((xy[:n] - q) ** 2, axis=1)
        d2[times[:n] >= end] = np.inf
        near = nodes[int(np.argmin(d2))]
        pose = steer(near, q, cfg)
        if not edge_free(near.pose[:2], pose[:2], scenario, cfg.resolution):
            continue
        node = TreeNode(pose, near.time_index + 1, near)
        xy[n], times[n] = pose[:2], node.time_index
        nodes.append(node)
        if node.time_index == end:
            finished.append(node)

    branches = len(finished)
    if finished:
        segs = [node.path() for node in finished]
        seg_xy = np.stack([seg[:, :2] for seg in segs])
        sig = {}
        for name, base in base_signals.items():
            batch = np.repeat(base[None, :], branches, axis=0)
            batch[:, tau : end + 1] = shapes[name].signed_distance(seg_xy.reshape(-1, 2)).reshape(branches, -1)
            sig[name] = batch
        rho = robustness_at(formula, sig, 0, cfg.k)
        stack = np.stack(segs)
        tracking = cfg.lambda1 * np.sum((stack[:, :, :2] - anchors[None, :, :2]) ** 2, axis=(1, 2))
        th = np.concatenate([np.full((branches, 1), prev_heading), stack[:, :, 2]], axis=1)
        curv = cfg.lambda2 * np.sum(wrap_angle(np.diff(th, axis=1)) ** 2, axis=1)
        total = tracking + curv - cfg.lambda3 * rho
        if next_pose is not None:
            # prefer branches whose last pose joins the untouched remainder feasibly
            joins = np.array([_joins(seg[-1], next_pose, scenario, cfg) for seg in segs])
            if joins.any():
                total = np.where(joins, total, np.inf)
        best = int(np.argmin(total))
        best_seg = segs[best]
        best_cost = segment_cost(best_seg, anchors, prev_heading, float(rho[best]), cfg)

    if best_seg is not None and len(best_seg) >= 3:
        best_seg = smooth_segment(best_seg, cfg, scenario, traj.poses[tau - 1], next_pose)
    return RepairAttempt(tau, kind, best_seg, best_cost, cfg.M, branches)


def _joins(last, nxt, scenario, cfg) -> bool:
    pair = np.stack([last, nxt])
    return bool(kinematic_ok(pair, cfg.d_max, cfg.dtheta_max)[0]) and edge_free(last[:2], nxt[:2], scenario, cfg.resolution)


def smooth_segment(
    segment, cfg: RepairConfig, scenario: Scenario | None = None, prev_pose=None, next_pose=None
) -> np.ndarray:
    """Endpoint-preserving moving average over xy, headings from the smoothed motion.

    When ``scenario``/``prev_pose`` are given the result is re-checked for
    collisions and kinematic limits; on any violation the input is returned.
    A ``next_pose`` extends the check to the step out of the segment, unless
    the unsmoothed segment already failed that step.
    """
    seg = np.asarray(segment, dtype=float)
    n = len(seg)
    wsize = cfg.smoothing_window
    if n < 3 or wsize < 2:
        return seg.copy()
    half = wsize // 2
    xy = seg[:, :2].copy()
    for i in range(1, n - 1):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        xy[i] = seg[lo:hi, :2].mean(axis=0)
    prev = np.asarray(prev_pose, dtype=float) if prev_pose is not None else None
    psi = np.empty(n)
    last_xy = prev[:2] if prev is not None else None
    last_psi = prev[2] if prev is not None else seg[0, 2]
    for i in range(n):
        if last_xy is None:
            psi[i] = seg[0, 2]
        else:
            d = xy[i] - last_xy
            psi[i] = math.atan2(d[1], d[0]) if math.hypot(*d) > 1e-12 else last_psi
        last_xy, last_psi = xy[i], psi[i]
    out = np.column_stack([xy, wrap_angle(psi)])
    full = np.vstack([prev, out]) if prev is not None else out
    if next_pose is not None and scenario is not None and _joins(seg[-1], next_pose, scenario, cfg):
        if not _joins(out[-1], np.asarray(next_pose, dtype=float), scenario, cfg):
            return seg.copy()
    if not np.all(kinematic_ok(full, cfg.d_max, cfg.dtheta_max)):
        return seg.copy()
    if scenario is not None and count_collisions(full[:, :2], scenario, cfg.resolution):
        return seg.copy()
    return out


# ---------------------------------------------------------------- main loop


def verify(traj: Trajectory, scenario: Scenario, formula: stl.Formula, cfg: RepairConfig) -> dict:
    """Success verdict: positive exact robustness, no collisions, zero feasibility hinge."""
    rho = exact_robustness(formula, traj, scenario, 0)
    collisions = count_collisions(traj.xy, scenario, cfg.resolution)
    feas = feasibility_loss(traj, cfg.loss_config())
    return {
        "robustness": rho,
        "collisions": collisions,
        "feasibility_loss": feas,
        "success": bool(rho > 0 and collisions == 0 and feas <= KIN_TOL * len(traj)),
    }


def run_tsp(traj: Trajectory, scenario: Scenario, formula: stl.Formula, cfg: RepairConfig) -> TSPResult:
    """Scan ``t = 1..T`` and repair each violating window; deterministic for a fixed ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    nominal = traj
    work = traj
    rho = exact_robustness(formula, work, scenario, 0)
    triggers: list[RepairAttempt] = []
    t = 1
    while t <= work.horizon:
        v = violation_check(work, t, scenario, formula, cfg.H, cfg, rho=rho)
        if v.violated:
            attempt = rrt_repair(work, t, scenario, formula, cfg, rng, nominal=nominal, kind=v.kind)
            triggers.append(attempt)
            if attempt.segment is not None:
                work = work.splice(t, attempt.segment)
                rho = exact_robustness(formula, work, scenario, 0)
            t = t + 1
            continue
        t += 1
    checks = verify(work, scenario, formula, cfg)
    return TSPResult(work, triggers, checks["success"], checks)
