"""Greedy schedule-and-interpolate planner producing nominal trajectories.

It stands in for a learned planner: it satisfies the formula in an empty
world but drives straight through obstacles, which gives the repair loop
something to fix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import stl
from .geometry import Scenario, Trajectory, wrap_angle
from .stl import Always, And, Atom, Eventually, Formula, Or

__all__ = ["Task", "InfeasibleSchedule", "task_options", "plan_tasks", "greedy_nominal"]


class InfeasibleSchedule(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    kind: str  # "F" or "G"
    a: int
    b: int
    region: str

    @property
    def deadline(self) -> int:
        # latest planned arrival: interval midpoint for F, interval start for G
        return (self.a + self.b) // 2 if self.kind == "F" else self.a


def _target_region(chi: Formula) -> str:
    # the first atom of a Boolean state formula; exact for single atoms and disjunctions
    for node, _ in stl.iter_nodes(chi):
        if isinstance(node, Atom):
            return node.region
    raise InfeasibleSchedule(f"no region atom in {stl.render(chi)}")


def _earliest_end(f: Formula) -> float:
    ends = [n.interval.b for n in stl.temporal_nodes(f)]
    return min(ends) if ends else 0.0


def task_options(f: Formula, limit: int = 256) -> list[list[Task]]:
    """Task lists for every way of resolving the disjunctions in ``f``, most preferred first.

    Disjuncts are preferred by earliest interval end (ties to the first
    written). A bare state formula at top level must hold at ``t=0`` and
    becomes ``G[0,0]``. At most ``limit`` options are returned.
    """
    if isinstance(f, And):
        out = []
        for combo in itertools.product(*(task_options(c, limit) for c in f.children)):
            out.append([t for part in combo for t in part])
            if len(out) >= limit:
                break
        return out
    if isinstance(f, Or):
        if not stl.temporal_nodes(f):
            return [[Task("G", 0, 0, _target_region(f))]]
        ordered = sorted(f.children, key=_earliest_end)
        return [opt for c in ordered for opt in task_options(c, limit)][:limit]
    if isinstance(f, Eventually):
        return [[Task("F", f.interval.a, f.interval.b, _target_region(f.child))]]
    if isinstance(f, Always):
        return [[Task("G", f.interval.a, f.interval.b, _target_region(f.child))]]
    if isinstance(f, Atom):
        return [[Task("G", 0, 0, f.region)]]
    raise InfeasibleSchedule(f"unsupported node for greedy planning: {stl.render(f)}")


def plan_tasks(f: Formula) -> list[Task]:
    """The most preferred task list of :func:`task_options`."""
    return task_options(f)[0]


def _schedule(tasks: list[Task], start, regions, T: int, speed: float) -> np.ndarray:
    pos = np.array(start, dtype=float)
    path = [pos.copy()]  # path[t] is the position at time t
    for task in sorted(tasks, key=lambda task: task.deadline):
        region = regions[task.region]
        # already strictly inside: stay put rather than drift to the centroid
        inside = float(region.signed_distance(pos[None])[0]) > 0
        target = pos.copy() if inside else np.asarray(region.centroid, dtype=float)
        dist = float(np.hypot(*(target - pos)))
        steps = 0 if dist < 1e-12 else math.ceil(dist / speed - 1e-9)
        arrival = len(path) - 1 + steps
        # already parked on the target: an F task only needs the time to still lie in [a, b]
        latest = task.b if (steps == 0 and task.kind == "F") else task.deadline
        if arrival > latest:
            raise InfeasibleSchedule(
                f"cannot reach {task.region} by t={latest} (earliest arrival t={arrival})"
            )
        for k in range(1, steps + 1):
            path.append(pos + (target - pos) * min(k * speed / dist, 1.0))
        pos = target
        path[-1] = target.copy()
        depart = max(arrival, task.a) if task.kind == "F" else task.b
        while len(path) - 1 < depart:
            path.append(target.copy())
    while len(path) - 1 < T:
        path.append(pos.copy())
    return np.array(path[: T + 1])


def greedy_nominal(
    scenario: Scenario,
    d_max: float = 1.0,
    dtheta_max: float = 0.6,
    cruise: float = 0.6,
) -> Trajectory:
    """Visit task regions in earliest-deadline order along straight lines.

    Disjunct choices are tried in preference order until one schedules.

    The robot moves at ``cruise * d_max`` per step toward each region's
    centroid, unless it already stands strictly inside the region. For ``F[a,b]`` it must arrive by the midpoint ``(a+b)//2``
    (or be parked there already while ``t <= b``) and waits until ``a``;
    for ``G[a,b]`` it must arrive by ``a`` and dwells through ``b``.
    Headings turn toward the direction of motion by at most ``dtheta_max``
    per step. Obstacles are ignored.
    """
    f = scenario.formula
    T = scenario.horizon
    report = stl.validate_fragment(f, T)
    if not report.is_member:
        raise InfeasibleSchedule("formula outside the plannable fragment: " + "; ".join(report.violations))
    if not 0 < cruise <= 1:
        raise ValueError("cruise must lie in (0, 1]")
    speed = cruise * d_max
    errors = []
    for tasks in task_options(f):
        try:
            xy = _schedule(tasks, scenario.start[:2], scenario.regions, T, speed)
            break
        except InfeasibleSchedule as exc:
            errors.append(str(exc))
    else:
        raise InfeasibleSchedule("no disjunct choice is schedulable: " + "; ".join(dict.fromkeys(errors)))

    psi = np.empty(T + 1)
    psi[0] = scenario.start[2]
    for t in range(1, T + 1):
        d = xy[t] - xy[t - 1]
        if np.hypot(*d) > 1e-12:
            turn = wrap_angle(math.atan2(d[1], d[0]) - psi[t - 1])
            psi[t] = psi[t - 1] + float(np.clip(turn, -dtheta_max, dtheta_max))
        else:
            psi[t] = psi[t - 1]
    return Trajectory(np.column_stack([xy, psi]))
