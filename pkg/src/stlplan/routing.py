"""STL-structured expert routing over numeric hidden states.

Each decoding step ``t`` is anchored to the temporal operator whose interval
covers it, sliced into one of ``K`` time bands, and mapped to a bucket
``family * K + band`` (F -> 0, G -> 1). Experts are partitioned by bucket
and only the active bucket competes in the key-value softmax.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import stl
from .stl import Always, Eventually, Formula

__all__ = [
    "FAMILIES",
    "BucketConfig",
    "GateParams",
    "AffineExpert",
    "Route",
    "route",
    "assign_bucket",
    "gate_weights",
    "top_k_experts",
    "moe_mix",
    "blend",
    "random_gate_params",
    "random_experts",
    "routing_trace",
    "routing_trace_csv",
]

FAMILIES = ("F", "G")


@dataclass(frozen=True)
class BucketConfig:
    K: int = 3
    num_families: int = 2

    def __post_init__(self):
        if self.K < 1 or self.num_families < 1:
            raise ValueError("K and num_families must be >= 1")

    @property
    def B(self) -> int:
        return self.num_families * self.K


class Route(NamedTuple):
    bucket: int
    family: str | None
    band: int
    covered: bool  # t lies inside the chosen operator's interval
    anchored: bool  # False only when the formula has no temporal operator


def _band(t: int, a: int, b: int, K: int) -> int:
    return min(max(math.floor(K * (t - a) / (b - a + 1)), 0), K - 1)


def route(f: Formula, t: int, cfg: BucketConfig = BucketConfig()) -> Route:
    """Innermost covering operator, band and bucket for step ``t``.

    Steps outside every interval go to the temporally nearest operator,
    ties broken by preorder; a formula without temporal operators lands in
    bucket 0 with ``anchored=False``.
    """
    ops = [n for n in stl.temporal_nodes(f)]
    if any(not isinstance(n, (Eventually, Always)) for n in ops):
        raise ValueError("routing is defined for F/G operators only")
    if not ops:
        return Route(0, None, 0, False, False)
    chosen, covered = None, False
    for n in ops:
        if n.interval.covers(t):
            chosen, covered = n, True
            break
    if chosen is None:
        def gap(n):
            return n.interval.a - t if t < n.interval.a else t - n.interval.b
        chosen = min(ops, key=gap)  # min keeps the first of equal gaps
    family = "F" if isinstance(chosen, Eventually) else "G"
    band = _band(t, chosen.interval.a, chosen.interval.b, cfg.K)
    return Route(FAMILIES.index(family) * cfg.K + band, family, band, covered, True)


def assign_bucket(f: Formula, t: int, cfg: BucketConfig = BucketConfig()) -> int:
    return route(f, t, cfg).bucket


@dataclass(frozen=True, eq=False)
class GateParams:
    """Router parameters: expert keys ``(E, d_k)``, query projection ``(d_k, d)``.

    ``partition[b]`` lists the expert ids owned by bucket ``b``.
    """

    expert_keys: np.ndarray
    query_projection: np.ndarray
    partition: tuple[tuple[int, ...], ...]
    temperature: float = 1.0
    top_k: int = 2

    def __post_init__(self):
        keys = np.asarray(self.expert_keys, dtype=float)
        wq = np.asarray(self.query_projection, dtype=float)
        object.__setattr__(self, "expert_keys", keys)
        object.__setattr__(self, "query_projection", wq)
        object.__setattr__(self, "partition", tuple(tuple(int(e) for e in p) for p in self.partition))
        if keys.ndim != 2 or wq.ndim != 2 or wq.shape[0] != keys.shape[1]:
            raise ValueError("expert_keys (E, d_k) and query_projection (d_k, d) disagree")
        flat = sorted(e for p in self.partition for e in p)
        if flat != list(range(len(keys))):
            raise ValueError("bucket partition must be a disjoint cover of the experts")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 1 <= self.top_k <= min(len(p) for p in self.partition):
            raise ValueError("top_k must be between 1 and the smallest bucket size")

    @property
    def num_experts(self) -> int:
        return len(self.expert_keys)

    @property
    def d_k(self) -> int:
        return self.expert_keys.shape[1]


@dataclass(frozen=True, eq=False)
class AffineExpert:
    W: np.ndarray
    b: np.ndarray

    def __call__(self, h):
        return self.W @ h + self.b


def gate_weights(h, gp: GateParams, bucket: int) -> np.ndarray:
    """Softmax over the bucket's experts of ``<W_q h, K_e> / (tau sqrt(d_k))``; zero elsewhere."""
    h = np.asarray(h, dtype=float)
    if h.shape != (gp.query_projection.shape[1],):
        raise ValueError(f"hidden vector must have shape ({gp.query_projection.shape[1]},), got {h.shape}")
    if not 0 <= bucket < len(gp.partition):
        raise ValueError(f"unknown bucket {bucket}")
    members = list(gp.partition[bucket])
    q = gp.query_projection @ h
    logits = gp.expert_keys[members] @ q / (gp.temperature * math.sqrt(gp.d_k))
    z = np.exp(logits - logits.max())
    w = np.zeros(gp.num_experts)
    w[members] = z / z.sum()
    return w


def top_k_experts(weights: np.ndarray, members: Sequence[int], k: int) -> list[int]:
    """Ids of the ``k`` heaviest experts among ``members``; ties go to the lower id."""
    members = sorted(members)
    order = sorted(members, key=lambda e: (-weights[e], e))
    return order[:k]


def moe_mix(h, gp: GateParams, bucket: int, experts: Sequence) -> np.ndarray:
    """Top-k mixture inside the bucket with the selected weights renormalized to 1."""
    if len(experts) != gp.num_experts:
        raise ValueError("need one expert map per expert id")
    w = gate_weights(h, gp, bucket)
    chosen = top_k_experts(w, gp.partition[bucket], gp.top_k)
    sel = w[chosen] / w[chosen].sum()
    h = np.asarray(h, dtype=float)
    return sum(g * np.asarray(experts[e](h)) for g, e in zip(sel, chosen))


def blend(shared_out, moe_out, alpha) -> np.ndarray:
    shared_out = np.asarray(shared_out, dtype=float)
    moe_out = np.asarray(moe_out, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if shared_out.shape != moe_out.shape:
        raise ValueError("shared and MoE outputs differ in shape")
    if alpha.ndim and alpha.shape != shared_out.shape:
        raise ValueError("channel-wise alpha must match the output shape")
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise ValueError("alpha must lie in [0, 1]")
    return shared_out + alpha * moe_out


def random_gate_params(
    rng: np.random.Generator,
    d: int = 16,
    d_k: int = 8,
    cfg: BucketConfig = BucketConfig(),
    experts_per_bucket: int = 2,
    temperature: float = 1.0,
    top_k: int = 2,
) -> GateParams:
    """Gaussian router with ``experts_per_bucket`` contiguous experts per bucket."""
    E = cfg.B * experts_per_bucket
    partition = tuple(tuple(range(b * experts_per_bucket, (b + 1) * experts_per_bucket)) for b in range(cfg.B))
    return GateParams(
        expert_keys=rng.standard_normal((E, d_k)),
        query_projection=rng.standard_normal((d_k, d)) / math.sqrt(d),
        partition=partition,
        temperature=temperature,
        top_k=top_k,
    )


def random_experts(rng: np.random.Generator, n: int, d: int) -> list[AffineExpert]:
    return [AffineExpert(rng.standard_normal((d, d)) / math.sqrt(d), rng.standard_normal(d)) for _ in range(n)]


def routing_trace(f: Formula, horizon: int, cfg: BucketConfig, gp: GateParams, hidden) -> list[dict]:
    """Per-step routing record for ``t = 1..T``; ``hidden[t-1]`` is the state at step ``t``."""
    rows = []
    for t in range(1, horizon + 1):
        r = route(f, t, cfg)
        w = gate_weights(hidden[t - 1], gp, r.bucket)
        members = gp.partition[r.bucket]
        p = w[list(members)]
        ent = float(-np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)))
        rows.append(
            {
                "t": t,
                "op_family": r.family or "none",
                "band": r.band,
                "bucket": r.bucket,
                "top1_expert": top_k_experts(w, members, 1)[0],
                "gate_entropy": ent,
            }
        )
    return rows


def routing_trace_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["t", "op_family", "band", "bucket", "top1_expert", "gate_entropy"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({**row, "gate_entropy": repr(row["gate_entropy"])})
    return buf.getvalue()
