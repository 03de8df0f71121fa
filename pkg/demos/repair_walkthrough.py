"""Generate a cluttered scenario, repair the obstacle-blind plan and save an SVG overlay."""

import sys
from pathlib import Path

from stlplan.bench import generate_scenario
from stlplan.nominal import greedy_nominal
from stlplan.plot import plot_rollout
from stlplan.repair import RepairConfig, run_tsp, verify

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 8
out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("repair_walkthrough.svg")

scen = generate_scenario(seed, "and-or-mix")
print("task:", scen.formula_text)
print("obstacles:", len(scen.obstacles))

cfg = RepairConfig(seed=seed)
nominal = greedy_nominal(scen)
print("nominal verdict:", verify(nominal, scen, scen.formula, cfg))

result = run_tsp(nominal, scen, scen.formula, cfg)
for att in result.triggers:
    status = "repaired" if att.ok else "failed"
    print(f"  trigger t={att.t:<3} {att.kind:<10} {status}, branches={att.branches}")
print("repaired verdict:", result.checks)

out.write_text(plot_rollout(scen, [("nominal", nominal), ("repaired", result.repaired)]))
print("overlay written to", out)
