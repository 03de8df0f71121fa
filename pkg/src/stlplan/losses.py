"""Training-objective terms and schedules as pure functions of trajectories and gates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import Scenario, Trajectory, obstacle_penalty, wrap_angle
from .monitor import SmoothParams, smooth_robustness
from .stl import Formula

__all__ = [
    "LossConfig",
    "ScheduleConfig",
    "feasibility_loss",
    "obstacle_loss",
    "stl_hinge",
    "moe_regularizer",
    "total_loss",
    "schedules",
    "teacher_forcing",
    "warmup_factor",
]


@dataclass(frozen=True)
class LossConfig:
    """Weights and limits of the composite objective.

    None of the defaults except ``gamma`` come from published values; they
    are the benchmark's own choices.
    """

    w_rec: float = 1.0
    w_end: float = 1.0
    w_obs: float = 1.0
    w_feas: float = 1.0
    w_stl: float = 1.0
    w_moe: float = 0.01
    gamma: float = 0.2
    d_max: float = 1.0
    delta_max: float = 0.6
    lambda_psi: float = 1.0
    obstacle_sharpness: float = 10.0
    lambda_bal: float = 1.0
    lambda_ent: float = 0.1
    psi_weight: float = 1.0  # heading weight inside the reconstruction term

    def __post_init__(self):
        for name in ("w_rec", "w_end", "w_obs", "w_feas", "w_stl", "w_moe", "gamma", "lambda_psi",
                     "lambda_bal", "lambda_ent", "psi_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if not 0 < self.delta_max <= math.pi:
            raise ValueError("delta_max must lie in (0, pi]")
        if not self.obstacle_sharpness > 0:
            raise ValueError("obstacle_sharpness must be positive")


@dataclass(frozen=True)
class ScheduleConfig:
    epochs: int = 24
    warmup_epochs: int = 4
    r_min: float = 0.1

    def __post_init__(self):
        if not 0 < self.warmup_epochs <= self.epochs:
            raise ValueError("need 0 < warmup_epochs <= epochs")
        if not 0 < self.r_min <= 1:
            raise ValueError("r_min must lie in (0, 1]")


def _hinge(x):
    return np.maximum(x, 0.0)


def feasibility_loss(traj: Trajectory, cfg: LossConfig) -> float:
    """Hinge on every step length over ``d_max`` plus weighted heading changes over ``delta_max``."""
    if len(traj) < 2:
        raise ValueError("feasibility loss needs at least two poses")
    step = np.linalg.norm(np.diff(traj.xy, axis=0), axis=1)
    dpsi = np.abs(wrap_angle(np.diff(traj.psi)))
    return float(_hinge(step - cfg.d_max).sum() + cfg.lambda_psi * _hinge(dpsi - cfg.delta_max).sum())


def obstacle_loss(traj: Trajectory, scenario: Scenario, cfg: LossConfig) -> float:
    """Mean softplus obstacle penalty over timesteps ``1..T``."""
    pts = traj.xy[1:]
    if len(pts) == 0 or not scenario.obstacles:
        return 0.0
    return float(np.mean(obstacle_penalty(pts, scenario.obstacles, cfg.obstacle_sharpness)))


def stl_hinge(robustness: float, cfg: LossConfig) -> float:
    return max(cfg.gamma - robustness, 0.0)


def moe_regularizer(gate_history, cfg: LossConfig, tol: float = 1e-6) -> dict:
    """Load-balance and entropy regularizers over a ``(steps, experts)`` gate history.

    ``bal = E * sum_e f_e P_e`` with ``f_e`` and ``P_e`` both the mean gate
    mass (soft importance) of expert ``e``; it is 1 exactly when importance
    is uniform and ``E`` under total collapse. ``ent`` is the mean negative
    Shannon entropy of the per-step gates.
    """
    g = np.atleast_2d(np.asarray(gate_history, dtype=float))
    if g.size == 0:
        raise ValueError("empty gate history")
    if np.any(g < -tol) or np.any(np.abs(g.sum(axis=1) - 1.0) > tol):
        raise ValueError("gate vectors must be non-negative and sum to 1")
    n_experts = g.shape[1]
    importance = g.mean(axis=0)
    bal = float(n_experts * np.sum(importance * importance))
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(g > 0, g * np.log(np.where(g > 0, g, 1.0)), 0.0)
    ent = float(np.mean(plogp.sum(axis=1)))
    return {"bal": bal, "ent": ent, "total": cfg.lambda_bal * bal + cfg.lambda_ent * ent}


def total_loss(
    pred: Trajectory,
    gt: Trajectory,
    scenario: Scenario,
    formula: Formula,
    gates,
    cfg: LossConfig,
    sp: SmoothParams = SmoothParams(),
) -> dict:
    """Weighted objective and its per-term breakdown (flat, JSON-serializable)."""
    if pred.horizon != gt.horizon:
        raise ValueError("pred and gt must share the horizon")
    diff = pred.poses[1:] - gt.poses[1:]
    diff[:, 2] *= math.sqrt(cfg.psi_weight)
    rec = float(np.sum(diff * diff))
    end = float(np.sum((pred.xy[-1] - gt.xy[-1]) ** 2))
    obs = obstacle_loss(pred, scenario, cfg)
    feas = feasibility_loss(pred, cfg)
    rho = smooth_robustness(formula, pred, scenario, 0, sp)
    hinge = stl_hinge(rho, cfg)
    moe = moe_regularizer(gates, cfg)["total"] if gates is not None else 0.0
    terms = {
        "rec": cfg.w_rec * rec,
        "end": cfg.w_end * end,
        "obs": cfg.w_obs * obs,
        "feas": cfg.w_feas * feas,
        "stl": cfg.w_stl * hinge,
        "moe": cfg.w_moe * moe,
    }
    out = dict(terms)
    out["total"] = float(sum(terms.values()))
    out["robustness"] = rho
    return out


def teacher_forcing(epoch: float, cfg: ScheduleConfig) -> float:
    return max(0.0, 1.0 - epoch / cfg.epochs)


def warmup_factor(epoch: float, cfg: ScheduleConfig) -> float:
    if epoch >= cfg.warmup_epochs:
        return 1.0
    return cfg.r_min + (1.0 - cfg.r_min) * epoch / cfg.warmup_epochs


WARMED_TERMS = ("w_obs", "w_feas", "w_stl", "w_moe")


def schedules(epoch: float, cfg: ScheduleConfig, base_weights: LossConfig | dict) -> dict:
    """Teacher-forcing probability and warmed-up weights at ``epoch``.

    Only the secondary terms (obstacle, feasibility, STL, MoE) are scaled.
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    weights = asdict(base_weights) if isinstance(base_weights, LossConfig) else dict(base_weights)
    r = warmup_factor(epoch, cfg)
    warmed = {k: (v * r if k in WARMED_TERMS else v) for k, v in weights.items()}
    return {"teacher_forcing": teacher_forcing(epoch, cfg), "warmup": r, "warmed_weights": warmed}
