"""Bounded-horizon STL planning toolkit: parsing, robustness monitoring, routing, losses and trajectory repair."""

from .geometry import Circle, ConvexPolygon, Rect, Scenario, Trajectory, load_scenario, save_scenario
from .monitor import SmoothParams, boolean_satisfaction, evaluate, exact_robustness, smooth_robustness
from .nominal import greedy_nominal
from .repair import RepairConfig, run_tsp
from .stl import parse, render, structural_tokens, validate_fragment

__version__ = "0.1.0"

__all__ = [
    "Circle",
    "ConvexPolygon",
    "Rect",
    "Scenario",
    "Trajectory",
    "load_scenario",
    "save_scenario",
    "SmoothParams",
    "boolean_satisfaction",
    "evaluate",
    "exact_robustness",
    "smooth_robustness",
    "greedy_nominal",
    "RepairConfig",
    "run_tsp",
    "parse",
    "render",
    "structural_tokens",
    "validate_fragment",
]
