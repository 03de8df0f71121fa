"""Bucket assignment and in-bucket gating along the horizon of a two-phase task."""

import numpy as np

from stlplan import stl
from stlplan.routing import BucketConfig, random_gate_params, routing_trace, routing_trace_csv

f = stl.parse("F[13,19](in(B)) & G[71,72](in(D))")
cfg = BucketConfig(K=3)
rng = np.random.default_rng(0)
gp = random_gate_params(rng, d=16, cfg=cfg)
hidden = rng.standard_normal((80, 16))
rows = routing_trace(f, 80, cfg, gp, hidden)
print(routing_trace_csv(rows[10:22]), end="")
print("...")
print("buckets used:", sorted({r["bucket"] for r in rows}))
