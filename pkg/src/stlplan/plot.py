"""Deterministic SVG overlays of a scenario and named trajectories."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .geometry import Circle, ConvexPolygon, Rect, Scenario

__all__ = ["plot_rollout", "world_to_svg"]

_PALETTE = [
    ("#1f77b4", ""),
    ("#d62728", "6,3"),
    ("#2ca02c", "2,2"),
    ("#9467bd", "8,2,2,2"),
]
_SCALE = 15.0
_PAD = 20.0


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def world_to_svg(scenario: Scenario, xy) -> np.ndarray:
    """Map world coordinates to SVG pixels (y axis flipped)."""
    w = scenario.world
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    px = _PAD + (xy[:, 0] - w.xmin) * _SCALE
    py = _PAD + (w.ymax - xy[:, 1]) * _SCALE
    return np.column_stack([px, py])


def _shape(scenario, shape, style):
    if isinstance(shape, Circle):
        (cx, cy), = world_to_svg(scenario, [(shape.cx, shape.cy)])
        return f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(shape.r * _SCALE)}" {style}/>'
    if isinstance(shape, Rect):
        (x0, y0), = world_to_svg(scenario, [(shape.xmin, shape.ymax)])
        return (f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt((shape.xmax - shape.xmin) * _SCALE)}" '
                f'height="{_fmt((shape.ymax - shape.ymin) * _SCALE)}" {style}/>')
    if isinstance(shape, ConvexPolygon):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in world_to_svg(scenario, shape.vertices))
        return f'<polygon points="{pts}" {style}/>'
    raise TypeError(f"cannot draw {type(shape).__name__}")


def plot_rollout(scenario: Scenario, trajectories=()) -> str:
    """SVG with world bounds, labelled regions, obstacles, start marker and one polyline per trajectory.

    ``trajectories`` is a sequence of ``(name, Trajectory)`` pairs.
    """
    w = scenario.world
    width = 2 * _PAD + (w.xmax - w.xmin) * _SCALE
    height = 2 * _PAD + (w.ymax - w.ymin) * _SCALE + 20.0 * len(trajectories)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        _shape(scenario, w, 'class="world" fill="#fafafa" stroke="#000" stroke-width="2"'),
    ]
    for ob in scenario.obstacles:
        out.append(_shape(scenario, ob, 'class="obstacle" fill="#777" fill-opacity="0.8" stroke="#333"'))
    for name in sorted(scenario.regions):
        shape = scenario.regions[name]
        out.append(_shape(scenario, shape, 'class="region" fill="#ffd54f" fill-opacity="0.4" stroke="#b28900"'))
        (lx, ly), = world_to_svg(scenario, [shape.centroid])
        out.append(f'<text class="label" x="{_fmt(lx)}" y="{_fmt(ly)}" text-anchor="middle" '
                   f'font-size="14">{escape(name)}</text>')
    (sx, sy), = world_to_svg(scenario, [scenario.start[:2]])
    out.append(f'<circle class="start" cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="5" fill="#0050ff"/>')
    legend_y = 2 * _PAD + (w.ymax - w.ymin) * _SCALE
    for i, (name, traj) in enumerate(trajectories):
        color, dash = _PALETTE[i % len(_PALETTE)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in world_to_svg(scenario, traj.xy))
        out.append(f'<polyline class="trajectory" data-name="{escape(name)}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="2"{dash_attr}/>')
        y = legend_y + 20.0 * i
        out.append(f'<line x1="{_fmt(_PAD)}" y1="{_fmt(y)}" x2="{_fmt(_PAD + 30)}" y2="{_fmt(y)}" '
                   f'stroke="{color}" stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{_fmt(_PAD + 40)}" y="{_fmt(y + 4)}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
