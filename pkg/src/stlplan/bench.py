"""Seeded factory-floor scenarios over the five task templates, and the nominal-vs-repair benchmark."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import stl
from .geometry import Circle, Rect, Scenario, save_scenario, write_trajectory_csv
from .monitor import exact_robustness
from .nominal import InfeasibleSchedule, greedy_nominal
from .plot import plot_rollout
from .repair import RepairConfig, run_tsp, verify

__all__ = [
    "TEMPLATES",
    "TaskTemplate",
    "GeneratorParams",
    "GenerationError",
    "generate_scenario",
    "scenario_seed",
    "run_scenario",
    "run_suite",
    "write_artifacts",
    "four_zone_world",
    "TASK_FORMULAS",
]


@dataclass(frozen=True)
class TaskTemplate:
    kind: str
    arity: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.kind not in TEMPLATES:
            raise ValueError(f"unknown template {self.kind!r}; choose from {sorted(TEMPLATES)}")


TEMPLATES = {
    "single-F": (1, 1),
    "single-G": (1, 1),
    "only-AND": (2, 3),
    "only-OR": (2, 3),
    "and-or-mix": (3, 3),
}


def template(kind: str) -> TaskTemplate:
    return TaskTemplate(kind, TEMPLATES[kind]) if kind in TEMPLATES else TaskTemplate(kind)


@dataclass(frozen=True)
class GeneratorParams:
    """Sampling ranges for scenario generation (meters, timesteps)."""

    world_size: float = 40.0
    horizon: int = 80
    d_max: float = 1.0
    dtheta_max: float = 0.6
    cruise: float = 0.6
    n_regions: tuple[int, int] = (2, 4)
    region_size: tuple[float, float] = (1.5, 3.0)  # circle radius / half side
    region_gap: float = 2.0
    leg_length: tuple[float, float] = (6.0, 14.0)
    wall_margin: float = 1.0
    n_obstacles: tuple[int, int] = (2, 5)
    obstacle_extent: tuple[float, float] = (2.0, 8.0)
    obstacle_clearance: float = 1.0  # to regions
    start_clearance: float = 1.5
    on_path_prob: float = 0.7
    slack: tuple[int, int] = (3, 8)
    window_F: tuple[int, int] = (4, 14)
    window_G: tuple[int, int] = (2, 8)
    max_retries: int = 200

    @classmethod
    def ood(cls) -> "GeneratorParams":
        """Shifted placement: bigger obstacles, regions hugging the walls."""
        return cls(obstacle_extent=(4.0, 10.0), wall_margin=0.2, n_obstacles=(3, 6))


class GenerationError(RuntimeError):
    pass


REGION_NAMES = ("A", "B", "C", "D")


def scenario_seed(base_seed: int, template_index: int, i: int) -> int:
    return base_seed * 1_000_000 + template_index * 10_000 + i


def _region_shape(rng, centre, size) -> Circle | Rect:
    if rng.random() < 0.5:
        return Circle(float(centre[0]), float(centre[1]), float(size))
    hx, hy = size, size * rng.uniform(0.7, 1.3)
    return Rect(float(centre[0] - hx), float(centre[1] - hy), float(centre[0] + hx), float(centre[1] + hy))


def _bbox_gap(b1, b2) -> float:
    dx = max(b1[0] - b2[2], b2[0] - b1[2], 0.0)
    dy = max(b1[1] - b2[3], b2[1] - b1[3], 0.0)
    return math.hypot(dx, dy) if (dx > 0 or dy > 0) else -1.0


def _place_regions(rng, p: GeneratorParams, start, n_chain, n_total, chain_from_start):
    """Regions placed as a chain of legs (each from the previous, or all from the start)."""
    placed: list = []
    lo, hi = p.wall_margin, p.world_size - p.wall_margin
    anchor = np.asarray(start)
    for i in range(n_total):
        for _ in range(100):
            size = rng.uniform(*p.region_size)
            if i < n_chain:
                ang = rng.uniform(-math.pi, math.pi)
                centre = anchor + rng.uniform(*p.leg_length) * np.array([math.cos(ang), math.sin(ang)])
            else:
                centre = rng.uniform(lo + size, hi - size, size=2)
            shape = _region_shape(rng, centre, size)
            bx = shape.bounds
            if bx[0] < lo or bx[1] < lo or bx[2] > hi or bx[3] > hi:
                continue
            if any(_bbox_gap(bx, s.bounds) < p.region_gap for s in placed):
                continue
            if i < n_chain and shape.contains(start)[0] and not chain_from_start:
                continue
            placed.append(shape)
            if i < n_chain and not chain_from_start:
                anchor = np.asarray(shape.centroid)
            break
        else:
            raise GenerationError("could not place regions")
    return placed


def _timeline(rng, p: GeneratorParams, start, legs):
    """Intervals for sequential legs ``[(kind, shape)]`` that the greedy planner meets with slack."""
    t, pos = 0, np.asarray(start, dtype=float)
    speed = p.cruise * p.d_max
    out = []
    for kind, shape in legs:
        c = np.asarray(shape.centroid)
        arrival = t + math.ceil(float(np.hypot(*(c - pos))) / speed)
        a = arrival + int(rng.integers(p.slack[0], p.slack[1] + 1))
        if kind == "F":
            b = a + int(rng.integers(p.window_F[0], p.window_F[1] + 1))
            t = a
        else:
            b = a + int(rng.integers(p.window_G[0], p.window_G[1] + 1))
            t = b
        out.append((kind, a, b))
        pos = c
    return out


def _temporal(kind, a, b, name):
    return f"{kind}[{a},{b}](in({name}))"


def _formula_for(rng, tmpl: TaskTemplate, p: GeneratorParams, start, shapes):
    names = REGION_NAMES
    pick = lambda: "F" if rng.random() < 0.5 else "G"  # noqa: E731
    kind = tmpl.kind
    if kind in ("single-F", "single-G"):
        k = kind[-1]
        (_, a, b), = _timeline(rng, p, start, [(k, shapes[0])])
        return _temporal(k, a, b, names[0])
    if kind == "only-AND":
        n = int(rng.integers(tmpl.arity[0], tmpl.arity[1] + 1))
        kinds = [pick() for _ in range(n)]
        tl = _timeline(rng, p, start, list(zip(kinds, shapes[:n])))
        return " & ".join(_temporal(k, a, b, names[i]) for i, (k, a, b) in enumerate(tl))
    if kind == "only-OR":
        n = int(rng.integers(tmpl.arity[0], tmpl.arity[1] + 1))
        parts = []
        for i in range(n):
            k = pick()
            (_, a, b), = _timeline(rng, p, start, [(k, shapes[i])])
            parts.append(_temporal(k, a, b, names[i]))
        return " | ".join(parts)
    if kind == "and-or-mix":
        # (F | G) & F & F; the greedy planner takes the disjunct with the earlier end
        k0 = pick()
        tl = _timeline(rng, p, start, [(k0, shapes[0]), ("F", shapes[1]), ("F", shapes[2])])
        (_, a0, b0), (_, a1, b1), (_, a2, b2) = tl
        alt_kind = "G" if k0 == "F" else "F"
        alt_a = a0 + int(rng.integers(0, 4))
        alt_b = max(b0 + 1 + int(rng.integers(0, 6)), alt_a)
        alt_name = names[3] if len(shapes) > 3 else names[1]
        first = sorted([(k0, _temporal(k0, a0, b0, names[0])), (alt_kind, _temporal(alt_kind, alt_a, alt_b, alt_name))])
        first = [text for _, text in first]  # F disjunct first, as in (F | G) & F & F
        return f"({first[0]} | {first[1]}) & {_temporal('F', a1, b1, names[1])} & {_temporal('F', a2, b2, names[2])}"
    raise ValueError(f"unknown template {kind!r}")


def _place_obstacles(rng, p: GeneratorParams, scenario: Scenario, path_xy):
    n = int(rng.integers(p.n_obstacles[0], p.n_obstacles[1] + 1))
    region_boxes = [s.bounds for s in scenario.regions.values()]
    sx, sy = scenario.start[:2]
    moving = [i for i in range(1, len(path_xy)) if np.hypot(*(path_xy[i] - path_xy[i - 1])) > 1e-9]
    obstacles: list[Rect] = []
    for _ in range(n):
        for _ in range(100):
            w, h = rng.uniform(*p.obstacle_extent, size=2)
            if moving and rng.random() < p.on_path_prob:
                c = path_xy[moving[rng.integers(len(moving))]] + rng.normal(0.0, 1.0, size=2)
            else:
                c = rng.uniform(0.0, p.world_size, size=2)
            r = Rect(c[0] - w / 2, c[1] - h / 2, c[0] + w / 2, c[1] + h / 2)
            if r.xmin < 0 or r.ymin < 0 or r.xmax > p.world_size or r.ymax > p.world_size:
                continue
            if any(_bbox_gap(r.bounds, b) < p.obstacle_clearance for b in region_boxes):
                continue
            if Circle(sx, sy, p.start_clearance).signed_distance((np.clip(sx, r.xmin, r.xmax), np.clip(sy, r.ymin, r.ymax)))[0] >= 0:
                continue
            obstacles.append(Rect(*(round(float(v), 6) for v in r.bounds)))
            break
        else:
            raise GenerationError("could not place obstacles")
    return obstacles


def generate_scenario(seed: int, tmpl: TaskTemplate | str, params: GeneratorParams = GeneratorParams()) -> Scenario:
    """Deterministic scenario for ``seed``: regions, formula from the template, obstacles.

    Candidates whose formula the greedy planner cannot schedule, or whose
    obstacle-free nominal does not satisfy the formula, are rejected and
    resampled up to ``params.max_retries`` times.
    """
    if isinstance(tmpl, str):
        tmpl = template(tmpl)
    p = params
    last_err = "no attempt made"
    for attempt in range(p.max_retries):
        rng = np.random.default_rng([seed, attempt])
        margin = 3.0
        start = rng.uniform(margin, p.world_size - margin, size=2)
        psi0 = float(rng.uniform(-math.pi, math.pi))
        need = {"single-F": 1, "single-G": 1, "only-AND": 3, "only-OR": 3, "and-or-mix": 4}[tmpl.kind]
        n_total = max(need, int(rng.integers(p.n_regions[0], p.n_regions[1] + 1)))
        n_chain = 3 if tmpl.kind == "and-or-mix" else need
        try:
            shapes = _place_regions(rng, p, start, n_chain, n_total, chain_from_start=tmpl.kind == "only-OR")
            text = _formula_for(rng, tmpl, p, start, shapes)
            f = stl.parse(text)
            if not stl.validate_fragment(f, p.horizon).is_member:
                last_err = f"formula exceeds horizon: {text}"
                continue
            used = set(stl.region_names(f))
            regions = {REGION_NAMES[i]: s for i, s in enumerate(shapes)}
            world = Rect(0.0, 0.0, p.world_size, p.world_size)
            start_pose = (round(float(start[0]), 6), round(float(start[1]), 6), round(psi0, 6))
            regions = {k: _rounded(v) for k, v in regions.items()}
            free = Scenario(world, regions, (), start_pose, p.horizon, text)
            nominal = greedy_nominal(free, p.d_max, p.dtheta_max, p.cruise)
            if exact_robustness(f, nominal, free, 0) <= 0:
                last_err = "obstacle-free nominal violates the formula"
                continue
            obstacles = _place_obstacles(rng, p, free, nominal.xy)
            assert used <= set(regions)
            return free.with_obstacles(obstacles)
        except (GenerationError, InfeasibleSchedule, ValueError) as exc:
            last_err = str(exc)
            continue
    raise GenerationError(f"retry budget exhausted for seed {seed} ({tmpl.kind}): {last_err}")


def _rounded(shape):
    if isinstance(shape, Circle):
        return Circle(round(shape.cx, 6), round(shape.cy, 6), round(shape.r, 6))
    return Rect(*(round(float(v), 6) for v in shape.bounds))


# ---------------------------------------------------------------- benchmark


def run_scenario(scenario: Scenario, cfg: RepairConfig, params: GeneratorParams = GeneratorParams()):
    """Nominal plan, its verdict, the TSP repair and its verdict."""
    f = scenario.formula
    nominal = greedy_nominal(scenario, cfg.d_max, cfg.dtheta_max, params.cruise)
    nominal_checks = verify(nominal, scenario, f, cfg)
    result = run_tsp(nominal, scenario, f, cfg)
    return nominal, nominal_checks, result


def _rate(xs):
    return None if not xs else sum(xs) / len(xs)


def run_suite(
    templates,
    n_per_template: int,
    seed: int = 42,
    cfg: RepairConfig = RepairConfig(),
    params: GeneratorParams = GeneratorParams(),
    artifacts: dict | None = None,
    progress=None,
) -> dict:
    """Benchmark report over ``n_per_template`` scenarios per template.

    Generation failures are resampled with derived seeds and logged in the
    record. ``artifacts``, if given, collects per-scenario documents and
    trajectories keyed by record id. Wall times are kept out of the report
    (under the ``timing`` key of ``artifacts``) so reports are reproducible
    byte for byte.
    """
    templates = [t if isinstance(t, str) else t.kind for t in templates]
    records = []
    timing = {}
    for ti, name in enumerate(templates):
        tmpl = template(name)
        for i in range(n_per_template):
            sid = scenario_seed(seed, ti, i)
            started = time.perf_counter()
            gen_seed, regenerated = sid, []
            for retry in range(10):
                try:
                    scenario = generate_scenario(gen_seed, tmpl, params)
                    break
                except GenerationError as exc:
                    regenerated.append({"seed": gen_seed, "error": str(exc)})
                    gen_seed = sid * 100 + retry + 1
            else:
                records.append({"seed": sid, "template": name, "generation_failed": True,
                                "regenerated": regenerated, "nominal_success": False, "repaired_success": False})
                continue
            run_cfg = replace(cfg, seed=sid)
            nominal, nchecks, result = run_scenario(scenario, run_cfg, params)
            rid = f"{name}_{sid}"
            rec = {
                "id": rid,
                "seed": sid,
                "generator_seed": gen_seed,
                "template": name,
                "formula": scenario.formula_text,
                "nominal_success": nchecks["success"],
                "repaired_success": result.success,
                "nominal": nchecks,
                "repaired": result.checks,
                "triggers": len(result.triggers),
                "trigger_kinds": [a.kind for a in result.triggers],
                "failed_repairs": sum(not a.ok for a in result.triggers),
            }
            if regenerated:
                rec["regenerated"] = regenerated
            records.append(rec)
            timing[rid] = time.perf_counter() - started
            if artifacts is not None:
                artifacts[rid] = {
                    "scenario": scenario,
                    "nominal": nominal,
                    "repaired": result.repaired,
                    "repair_report": result.report(),
                }
            if progress is not None:
                progress(rec)
    records.sort(key=lambda r: r["seed"])
    aggregate = {}
    for name in templates:
        rs = [r for r in records if r["template"] == name]
        aggregate[name] = _aggregate(rs)
    aggregate["overall"] = _aggregate(records)
    if artifacts is not None:
        artifacts["__timing__"] = timing
    return {
        "seed": seed,
        "templates": templates,
        "n_per_template": n_per_template,
        "repair_config": asdict(cfg),
        "generator": asdict(params),
        "records": records,
        "aggregate": aggregate,
    }


def _aggregate(rs):
    nom = _rate([r["nominal_success"] for r in rs])
    rep = _rate([r["repaired_success"] for r in rs])
    return {
        "n": len(rs),
        "nominal_rate": nom,
        "repaired_rate": rep,
        "uplift_pp": None if nom is None else 100.0 * (rep - nom),
        "undefined": not rs,
    }


def write_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_artifacts(artifacts: dict, out_dir: Path, plots_dir: Path | None = None) -> None:
    """Scenario JSON, nominal/repaired CSV and repair report per record; SVG overlays when asked."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if plots_dir is not None:
        Path(plots_dir).mkdir(parents=True, exist_ok=True)
    for rid, art in sorted(artifacts.items()):
        if rid.startswith("__"):
            continue
        (out_dir / f"{rid}.scenario.json").write_bytes(save_scenario(art["scenario"]))
        (out_dir / f"{rid}.nominal.csv").write_text(write_trajectory_csv(art["nominal"]))
        (out_dir / f"{rid}.repaired.csv").write_text(write_trajectory_csv(art["repaired"]))
        (out_dir / f"{rid}.repair.json").write_text(json.dumps(art["repair_report"], sort_keys=True, indent=2) + "\n")
        if plots_dir is not None:
            svg = plot_rollout(art["scenario"], [("nominal", art["nominal"]), ("repaired", art["repaired"])])
            (Path(plots_dir) / f"{rid}.svg").write_text(svg)


# ---------------------------------------------------------------- task formula fixtures

TASK_FORMULAS = {
    "phi_a": "(F[18,28](in(C)) | G[19,22](in(B))) & F[14,28](in(B)) & F[32,77](in(A))",
    "phi_b": "(F[2,19](in(C)) | G[15,18](in(B))) & (G[53,54](in(D)) | G[50,53](in(D)))",
    "phi_c": "(F[18,26](in(D)) | G[25,26](in(C))) & (F[34,76](in(B)) | G[67,71](in(D))) & F[14,27](in(C))",
    "phi_d": "F[13,19](in(B)) & G[71,72](in(D))",
}


def four_zone_world(formula: str, obstacles=()) -> Scenario:
    """Four task zones: circle A, square B, circle C, rectangle D, in a 40 m square hall."""
    regions = {
        "A": Circle(6.0, 32.0, 2.5),
        "B": Rect(13.0, 20.5, 17.0, 24.5),
        "C": Circle(24.0, 20.0, 2.5),
        "D": Rect(24.0, 8.0, 30.0, 12.0),
    }
    return Scenario(Rect(0.0, 0.0, 40.0, 40.0), regions, tuple(obstacles), (15.0, 15.0, 0.0), 80, formula)
