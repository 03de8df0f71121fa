"""2D world model: shapes with exact signed distance, scenarios, trajectories.

Signed distance is positive inside a shape, negative outside, zero on the
boundary. It doubles as the robustness of the atom ``in(R)`` and feeds the
softplus obstacle penalty.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import jsonschema
import numpy as np

from . import stl

__all__ = [
    "Circle",
    "Rect",
    "ConvexPolygon",
    "Shape",
    "Scenario",
    "Trajectory",
    "ScenarioError",
    "wrap_angle",
    "region_signed_distance",
    "obstacle_penalty",
    "shape_from_dict",
    "shape_to_dict",
    "load_scenario",
    "save_scenario",
    "normalize_document",
    "read_trajectory_csv",
    "write_trajectory_csv",
]


def wrap_angle(a):
    """Wrap angles into ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    out = a - 2.0 * np.pi * np.ceil((a - np.pi) / (2.0 * np.pi))
    return float(out) if out.ndim == 0 else out


def _as_points(p) -> np.ndarray:
    pts = np.asarray(p, dtype=float)
    return pts.reshape(1, 2) if pts.ndim == 1 else pts


def _segment_closest(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    s = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return a + s[:, None] * ab


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"circle radius must be positive, got {self.r}")

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)

    def signed_distance(self, p) -> np.ndarray:
        pts = _as_points(p)
        return self.r - np.hypot(pts[:, 0] - self.cx, pts[:, 1] - self.cy)

    def signed_distance_grad(self, p) -> np.ndarray:
        pts = _as_points(p)
        d = pts - (self.cx, self.cy)
        n = np.hypot(d[:, 0], d[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            g = -d / n[:, None]
        return np.where(n[:, None] > 0, g, 0.0)

    def contains(self, p) -> np.ndarray:
        pts = _as_points(p)
        return (pts[:, 0] - self.cx) ** 2 + (pts[:, 1] - self.cy) ** 2 <= self.r**2

    def feature(self, p) -> np.ndarray:
        # smooth everywhere except the centre
        pts = _as_points(p)
        return np.where((pts[:, 0] == self.cx) & (pts[:, 1] == self.cy), -1, 0)


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def centroid(self) -> tuple[float, float]:
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def _margins(self, pts):
        # distances to left, bottom, right, top edges; all >= 0 inside
        return np.stack(
            [pts[:, 0] - self.xmin, pts[:, 1] - self.ymin, self.xmax - pts[:, 0], self.ymax - pts[:, 1]],
            axis=1,
        )

    def signed_distance(self, p) -> np.ndarray:
        pts = _as_points(p)
        m = self._margins(pts)
        inside = m.min(axis=1)
        dx = np.maximum(np.maximum(self.xmin - pts[:, 0], pts[:, 0] - self.xmax), 0.0)
        dy = np.maximum(np.maximum(self.ymin - pts[:, 1], pts[:, 1] - self.ymax), 0.0)
        return np.where(inside >= 0, inside, -np.hypot(dx, dy))

    def signed_distance_grad(self, p) -> np.ndarray:
        pts = _as_points(p)
        m = self._margins(pts)
        normals = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        g_in = normals[m.argmin(axis=1)]
        closest = np.column_stack(
            [np.clip(pts[:, 0], self.xmin, self.xmax), np.clip(pts[:, 1], self.ymin, self.ymax)]
        )
        d = pts - closest
        n = np.hypot(d[:, 0], d[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            g_out = -d / n[:, None]
        return np.where((m.min(axis=1) >= 0)[:, None], g_in, np.nan_to_num(g_out))

    def contains(self, p) -> np.ndarray:
        pts = _as_points(p)
        return (
            (pts[:, 0] >= self.xmin) & (pts[:, 0] <= self.xmax) & (pts[:, 1] >= self.ymin) & (pts[:, 1] <= self.ymax)
        )

    def feature(self, p) -> np.ndarray:
        """Id of the boundary feature realising the distance (0-3 inside edges, 4-11 outside regions)."""
        pts = _as_points(p)
        m = self._margins(pts)
        inside = m.min(axis=1) >= 0
        cx = np.where(pts[:, 0] < self.xmin, 0, np.where(pts[:, 0] > self.xmax, 2, 1))
        cy = np.where(pts[:, 1] < self.ymin, 0, np.where(pts[:, 1] > self.ymax, 2, 1))
        return np.where(inside, m.argmin(axis=1), 4 + 3 * cy + cx)


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        v = np.asarray(verts)
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if not np.all(cross > 0):
            raise ValueError("polygon must be strictly convex with counterclockwise vertices")

    @cached_property
    def _arrays(self):
        v = np.asarray(self.vertices)
        e = np.roll(v, -1, axis=0) - v
        length = np.hypot(e[:, 0], e[:, 1])
        inward = np.column_stack([-e[:, 1], e[:, 0]]) / length[:, None]
        return v, e, inward

    @property
    def centroid(self) -> tuple[float, float]:
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        c = x * yn - xn * y
        area = c.sum() / 2.0
        return (float(((x + xn) * c).sum() / (6 * area)), float(((y + yn) * c).sum() / (6 * area)))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        v = np.asarray(self.vertices)
        return (*v.min(axis=0), *v.max(axis=0))

    def _line_dists(self, pts):
        v, _, inward = self._arrays
        return ((pts[:, None, :] - v[None, :, :]) * inward[None]).sum(axis=2)

    def _closest_boundary(self, pts):
        v, e, _ = self._arrays
        best = np.full(len(pts), np.inf)
        closest = np.zeros_like(pts)
        which = np.zeros(len(pts), dtype=int)
        for i in range(len(v)):
            c = _segment_closest(pts, v[i], v[i] + e[i])
            d = np.hypot(*(pts - c).T)
            better = d < best
            best = np.where(better, d, best)
            closest[better] = c[better]
            which[better] = i
        return best, closest, which

    def signed_distance(self, p) -> np.ndarray:
        pts = _as_points(p)
        ld = self._line_dists(pts)
        inside = ld.min(axis=1)
        outside, _, _ = self._closest_boundary(pts)
        return np.where(inside >= 0, inside, -outside)

    def signed_distance_grad(self, p) -> np.ndarray:
        pts = _as_points(p)
        _, _, inward = self._arrays
        ld = self._line_dists(pts)
        g_in = inward[ld.argmin(axis=1)]
        dist, closest, _ = self._closest_boundary(pts)
        with np.errstate(invalid="ignore", divide="ignore"):
            g_out = -(pts - closest) / dist[:, None]
        return np.where((ld.min(axis=1) >= 0)[:, None], g_in, np.nan_to_num(g_out))

    def contains(self, p) -> np.ndarray:
        # half-plane test against every edge, independent of the distance code
        pts = _as_points(p)
        v = np.asarray(self.vertices)
        w = np.roll(v, -1, axis=0)
        cross = (w[:, 0] - v[:, 0]) * (pts[:, None, 1] - v[:, 1]) - (w[:, 1] - v[:, 1]) * (pts[:, None, 0] - v[:, 0])
        return np.all(cross >= 0, axis=1)

    def feature(self, p) -> np.ndarray:
        pts = _as_points(p)
        ld = self._line_dists(pts)
        dist, closest, which = self._closest_boundary(pts)
        v, e, _ = self._arrays
        # distinguish edge interiors from vertices when outside
        s = ((closest - v[which]) * e[which]).sum(axis=1) / (e[which] ** 2).sum(axis=1)
        part = np.where(s <= 0, 0, np.where(s >= 1, 2, 1))
        n = len(v)
        return np.where(ld.min(axis=1) >= 0, ld.argmin(axis=1), n + 3 * which + part)


Shape = Union[Circle, Rect, ConvexPolygon]


def region_signed_distance(shape: Shape, p) -> float | np.ndarray:
    """Signed distance of a point (or ``(n, 2)`` array of points) to a shape."""
    out = shape.signed_distance(p)
    return float(out[0]) if np.ndim(p) == 1 else out


def obstacle_penalty(p, obstacles, sharpness: float = 10.0) -> float | np.ndarray:
    """Softplus barrier ``sum_k softplus(s * sd_k(p)) / s`` over obstacles.

    About ``sd`` deep inside an obstacle, ``ln 2 / s`` on its boundary, and
    vanishing far outside.
    """
    if not sharpness > 0:
        raise ValueError("sharpness must be positive")
    pts = _as_points(p)
    total = np.zeros(len(pts))
    for ob in obstacles:
        total += np.logaddexp(0.0, sharpness * ob.signed_distance(pts)) / sharpness
    return float(total[0]) if np.ndim(p) == 1 else total


# ---------------------------------------------------------------- documents


class ScenarioError(ValueError):
    """Invalid scenario document; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_NUM = {"type": "number"}
_SHAPE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "circle"}, "cx": _NUM, "cy": _NUM, "r": _NUM},
            "required": ["type", "cx", "cy", "r"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "rect"}, "xmin": _NUM, "ymin": _NUM, "xmax": _NUM, "ymax": _NUM},
            "required": ["type", "xmin", "ymin", "xmax", "ymax"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "polygon"},
                "vertices": {
                    "type": "array",
                    "minItems": 3,
                    "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                },
            },
            "required": ["type", "vertices"],
            "additionalProperties": False,
        },
    ]
}
SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "world": {
            "type": "object",
            "properties": {"xmin": _NUM, "ymin": _NUM, "xmax": _NUM, "ymax": _NUM},
            "required": ["xmin", "ymin", "xmax", "ymax"],
            "additionalProperties": False,
        },
        "regions": {
            "type": "object",
            "propertyNames": {"pattern": r"^[A-Za-z_][A-Za-z0-9_]*$"},
            "additionalProperties": _SHAPE_SCHEMA,
        },
        "obstacles": {"type": "array", "items": _SHAPE_SCHEMA},
        "start": {
            "type": "object",
            "properties": {"x": _NUM, "y": _NUM, "psi": _NUM},
            "required": ["x", "y", "psi"],
            "additionalProperties": False,
        },
        "horizon": {"type": "integer", "minimum": 1},
        "formula": {"type": "string", "minLength": 1},
    },
    "required": ["world", "regions", "obstacles", "start", "horizon", "formula"],
    "additionalProperties": False,
}


def shape_from_dict(d: dict) -> Shape:
    kind = d["type"]
    if kind == "circle":
        return Circle(float(d["cx"]), float(d["cy"]), float(d["r"]))
    if kind == "rect":
        return Rect(float(d["xmin"]), float(d["ymin"]), float(d["xmax"]), float(d["ymax"]))
    if kind == "polygon":
        return ConvexPolygon(tuple((float(x), float(y)) for x, y in d["vertices"]))
    raise ValueError(f"unknown shape type {kind!r}")


def shape_to_dict(s: Shape) -> dict:
    if isinstance(s, Circle):
        return {"type": "circle", "cx": s.cx, "cy": s.cy, "r": s.r}
    if isinstance(s, Rect):
        return {"type": "rect", "xmin": s.xmin, "ymin": s.ymin, "xmax": s.xmax, "ymax": s.ymax}
    return {"type": "polygon", "vertices": [list(v) for v in s.vertices]}


def _inside_bounds(inner: tuple, outer: Rect) -> bool:
    return inner[0] >= outer.xmin and inner[1] >= outer.ymin and inner[2] <= outer.xmax and inner[3] <= outer.ymax


@dataclass(frozen=True, eq=False)
class Scenario:
    """World, task regions, obstacles, start pose, horizon and formula text."""

    world: Rect
    regions: dict[str, Shape]
    obstacles: tuple[Shape, ...]
    start: tuple[float, float, float]
    horizon: int
    formula_text: str

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "regions", dict(self.regions))
        self.validate()

    def validate(self):
        for name, shape in self.regions.items():
            if not _inside_bounds(shape.bounds, self.world):
                raise ScenarioError("region lies outside world bounds", f"regions.{name}")
        for i, shape in enumerate(self.obstacles):
            if not _inside_bounds(shape.bounds, self.world):
                raise ScenarioError("obstacle lies outside world bounds", f"obstacles[{i}]")
        x, y, _ = self.start
        if not self.world.contains((x, y))[0]:
            raise ScenarioError("start pose outside world bounds", "start")
        for i, shape in enumerate(self.obstacles):
            if shape.contains((x, y))[0]:
                raise ScenarioError(f"start pose inside obstacle {i}", "start")
        if self.horizon < 1:
            raise ScenarioError("horizon must be >= 1", "horizon")
        try:
            f = stl.parse(self.formula_text)
        except (stl.ParseError, stl.IntervalError) as exc:
            raise ScenarioError(str(exc), "formula") from exc
        for name in stl.region_names(f):
            if name not in self.regions:
                raise ScenarioError(f"formula references unknown region {name!r}", "formula")

    @cached_property
    def formula(self) -> stl.Formula:
        return stl.parse(self.formula_text)

    def to_dict(self) -> dict:
        return {
            "world": {"xmin": self.world.xmin, "ymin": self.world.ymin, "xmax": self.world.xmax, "ymax": self.world.ymax},
            "regions": {name: shape_to_dict(s) for name, s in self.regions.items()},
            "obstacles": [shape_to_dict(s) for s in self.obstacles],
            "start": {"x": self.start[0], "y": self.start[1], "psi": self.start[2]},
            "horizon": self.horizon,
            "formula": self.formula_text,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = ".".join(str(p) for p in err.absolute_path) or "<document>"
            raise ScenarioError(err.message, path)
        try:
            world = Rect(*(float(doc["world"][k]) for k in ("xmin", "ymin", "xmax", "ymax")))
        except ValueError as exc:
            raise ScenarioError(str(exc), "world") from exc
        regions = {}
        for name, d in doc["regions"].items():
            try:
                regions[name] = shape_from_dict(d)
            except ValueError as exc:
                raise ScenarioError(str(exc), f"regions.{name}") from exc
        obstacles = []
        for i, d in enumerate(doc["obstacles"]):
            try:
                obstacles.append(shape_from_dict(d))
            except ValueError as exc:
                raise ScenarioError(str(exc), f"obstacles[{i}]") from exc
        s = doc["start"]
        return cls(world, regions, tuple(obstacles), (s["x"], s["y"], s["psi"]), int(doc["horizon"]), doc["formula"])

    def with_obstacles(self, obstacles) -> "Scenario":
        return Scenario(self.world, self.regions, tuple(obstacles), self.start, self.horizon, self.formula_text)

    def with_formula(self, text: str) -> "Scenario":
        return Scenario(self.world, self.regions, self.obstacles, self.start, self.horizon, text)


def normalize_document(doc: dict) -> str:
    """Canonical serialization of a scenario document (floats, sorted keys)."""

    def norm(v):
        if isinstance(v, dict):
            return {k: norm(x) for k, x in v.items()}
        if isinstance(v, list):
            return [norm(x) for x in v]
        if isinstance(v, bool) or isinstance(v, str):
            return v
        if isinstance(v, (int, float)):
            return float(v)
        return v

    d = norm(doc)
    d["horizon"] = int(d["horizon"])
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def load_scenario(data: bytes | str) -> Scenario:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    return Scenario.from_dict(doc)


def save_scenario(scenario: Scenario) -> bytes:
    return normalize_document(scenario.to_dict()).encode("utf-8")


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Poses ``(x, y, psi)`` at unit timesteps ``0..T``; headings wrapped to ``(-pi, pi]``."""

    poses: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.poses, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or len(p) < 1:
            raise ValueError(f"poses must have shape (T+1, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("trajectory contains non-finite values")
        p[:, 2] = wrap_angle(p[:, 2])
        p.setflags(write=False)
        object.__setattr__(self, "poses", p)

    @property
    def horizon(self) -> int:
        return len(self.poses) - 1

    @property
    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    @property
    def psi(self) -> np.ndarray:
        return self.poses[:, 2]

    def __len__(self):
        return len(self.poses)

    def __eq__(self, other):
        return isinstance(other, Trajectory) and np.array_equal(self.poses, other.poses)

    def splice(self, start: int, segment) -> "Trajectory":
        seg = np.asarray(segment, dtype=float)
        p = self.poses.copy()
        p[start : start + len(seg)] = seg
        return Trajectory(p)


def write_trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "y", "psi"])
    for t, (x, y, psi) in enumerate(traj.poses):
        w.writerow([t, repr(float(x)), repr(float(y)), repr(float(psi))])
    return buf.getvalue()


def read_trajectory_csv(text: str) -> Trajectory:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "x", "y", "psi"]:
        raise ValueError("trajectory CSV must start with header t,x,y,psi")
    poses = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 columns")
        t = int(row[0])
        if t != len(poses):
            raise ValueError(f"line {lineno}: expected t={len(poses)}, got {t}")
        poses.append([float(v) for v in row[1:]])
    return Trajectory(np.array(poses))


def poses_from_points(points, psi0: float) -> np.ndarray:
    """Attach motion-direction headings to an ``(n, 2)`` xy path; stationary steps keep the heading."""
    pts = np.asarray(points, dtype=float)
    psi = np.empty(len(pts))
    psi[0] = psi0
    for i in range(1, len(pts)):
        d = pts[i] - pts[i - 1]
        psi[i] = math.atan2(d[1], d[0]) if np.hypot(*d) > 1e-12 else psi[i - 1]
    return np.column_stack([pts, psi])
