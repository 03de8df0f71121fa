import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_fragment_formula
from stlplan.bench import TASK_FORMULAS
from stlplan.routing import (
    AffineExpert,
    BucketConfig,
    GateParams,
    assign_bucket,
    blend,
    gate_weights,
    moe_mix,
    random_experts,
    random_gate_params,
    route,
    routing_trace,
    routing_trace_csv,
    top_k_experts,
)
from stlplan.stl import parse

CFG = BucketConfig(K=3)


def test_band_edges_single_F():
    f = parse("F[0,9](in(A))")
    assert route(f, 0, CFG)[:3] == (0, "F", 0)
    assert route(f, 9, CFG)[:3] == (2, "F", 2)


def test_G_family_bucket():
    r = route(parse("G[20,30](in(B))"), 25, CFG)
    assert (r.family, r.band, r.bucket) == ("G", 1, 4)


def test_uncovered_step_routes_to_nearest():
    r = route(parse(TASK_FORMULAS["phi_d"]), 40, CFG)
    assert (r.family, r.band, r.bucket, r.covered) == ("F", 2, 2, False)


def test_nearest_tie_goes_to_preorder_first():
    f = parse("G[0,4](in(A)) & F[10,12](in(B))")
    r = route(f, 7, CFG)  # gaps 3 and 3
    assert r.family == "G" and r.band == 2


def test_before_first_interval_clamps_to_band_0():
    r = route(parse("G[10,20](in(A))"), 2, CFG)
    assert (r.band, r.bucket) == (0, 3)


def test_no_temporal_node_flagged():
    r = route(parse("in(A) | in(B)"), 5, CFG)
    assert r.bucket == 0 and not r.anchored


def test_until_rejected():
    with pytest.raises(ValueError):
        route(parse("U[0,3](in(A), in(B))"), 1, CFG)


@given(st.integers(1, 8), st.integers(0, 60), st.integers(0, 30))
def test_bands_partition_interval(K, a, width):
    b = a + width
    f = parse(f"F[{a},{b}](in(A))")
    counts = np.bincount([route(f, t, BucketConfig(K=K)).band for t in range(a, b + 1)], minlength=K)
    assert counts.sum() == b - a + 1
    assert len(counts) == K


def _two_expert_params(keys, d=2, tau=1.0):
    return GateParams(np.asarray(keys, float), np.eye(len(keys[0]), d), ((0, 1),), tau, 2)


def test_identical_keys_split_evenly():
    gp = _two_expert_params([[1.0, 2.0], [1.0, 2.0]])
    assert np.array_equal(gate_weights(np.array([0.3, -0.7]), gp, 0), [0.5, 0.5])


def test_opposite_keys_closed_form():
    h = np.array([0.4, -1.1])
    q = h.copy()
    tau = 0.7
    gp = _two_expert_params([q, -q], tau=tau)
    w = gate_weights(h, gp, 0)
    s = 1.0 / (1.0 + math.exp(-2 * q @ q / (tau * math.sqrt(2))))
    assert w[0] == pytest.approx(s, rel=1e-14) and w[1] == pytest.approx(1 - s, rel=1e-12)


def test_shift_along_query_invariant():
    rng = np.random.default_rng(3)
    gp = random_gate_params(rng, d=8, d_k=4)
    h = rng.standard_normal(8)
    q = gp.query_projection @ h
    shifted = GateParams(gp.expert_keys + 2.5 * q / (q @ q), gp.query_projection, gp.partition, gp.temperature, gp.top_k)
    for b in range(CFG.B):
        assert np.allclose(gate_weights(h, gp, b), gate_weights(h, shifted, b), atol=1e-15)


def test_out_of_bucket_weights_exactly_zero():
    rng = np.random.default_rng(4)
    gp = random_gate_params(rng)
    h = rng.standard_normal(16)
    w = gate_weights(h, gp, 3)
    mask = np.ones(gp.num_experts, bool)
    mask[list(gp.partition[3])] = False
    assert np.all(w[mask] == 0.0)
    assert abs(w.sum() - 1) <= 1e-12


def test_dimension_mismatch():
    gp = random_gate_params(np.random.default_rng(0))
    with pytest.raises(ValueError):
        gate_weights(np.zeros(5), gp, 0)
    with pytest.raises(ValueError):
        GateParams(np.zeros((4, 3)), np.zeros((2, 8)), ((0, 1), (2, 3)))


def test_gate_params_validation():
    with pytest.raises(ValueError):
        GateParams(np.zeros((3, 2)), np.eye(2), ((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        GateParams(np.zeros((2, 2)), np.eye(2), ((0, 1),), top_k=3)
    with pytest.raises(ValueError):
        GateParams(np.zeros((2, 2)), np.eye(2), ((0, 1),), temperature=0.0)


def test_top_k_tie_breaks_low_id():
    w = np.array([0.25, 0.25, 0.25, 0.25])
    assert top_k_experts(w, [3, 1, 2, 0], 2) == [0, 1]


def test_top_k_full_bucket_equals_full_mixture():
    rng = np.random.default_rng(5)
    gp = random_gate_params(rng, experts_per_bucket=3, top_k=3)
    experts = random_experts(rng, gp.num_experts, 16)
    h = rng.standard_normal(16)
    for b in range(CFG.B):
        w = gate_weights(h, gp, b)
        full = sum(w[e] * experts[e](h) for e in gp.partition[b])
        assert np.allclose(moe_mix(h, gp, b, experts), full, atol=1e-12)


def test_dominant_gate_limit():
    q = np.array([1.0, 0.0])
    gp = GateParams(np.array([[60.0, 0.0], [-60.0, 0.0]]), np.eye(2), ((0, 1),), 1.0, 1)
    experts = [AffineExpert(np.eye(2), np.array([1.0, 2.0])), AffineExpert(-np.eye(2), np.zeros(2))]
    assert np.array_equal(moe_mix(q, gp, 0, experts), experts[0](q))


def test_default_mixture_recomputed():
    rng = np.random.default_rng(6)
    gp = random_gate_params(rng, cfg=BucketConfig(K=3), experts_per_bucket=2, temperature=1.0, top_k=2)
    assert gp.num_experts == 12 and len(gp.partition) == 6
    experts = random_experts(rng, 12, 16)
    h = rng.standard_normal(16)
    for b in range(6):
        e0, e1 = gp.partition[b]
        q = gp.query_projection @ h
        l0, l1 = (gp.expert_keys[[e0, e1]] @ q) / math.sqrt(gp.d_k)
        g0 = 1 / (1 + math.exp(l1 - l0))
        ref = g0 * (experts[e0].W @ h + experts[e0].b) + (1 - g0) * (experts[e1].W @ h + experts[e1].b)
        assert np.max(np.abs(moe_mix(h, gp, b, experts) - ref)) <= 1e-12


def test_blend_cases():
    s, m = np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0])
    assert np.array_equal(blend(s, m, 0.0), s)
    assert np.array_equal(blend(s, m, 1.0), s + m)
    assert np.array_equal(blend(s, m, np.array([0.0, 1.0, 0.0])), [1.0, 22.0, 3.0])
    with pytest.raises(ValueError):
        blend(s, m[:2], 0.5)
    with pytest.raises(ValueError):
        blend(s, m, 1.5)


@given(st.integers(0, 2**32 - 1))
def test_argmax_invariant_under_temperature(seed):
    rng = np.random.default_rng(seed)
    gp = random_gate_params(rng, experts_per_bucket=3, top_k=1)
    h = rng.standard_normal(16)
    tau = float(rng.uniform(0.05, 20))
    hot = GateParams(gp.expert_keys, gp.query_projection, gp.partition, tau, 1)
    for b in range(CFG.B):
        assert top_k_experts(gate_weights(h, gp, b), gp.partition[b], 1) == top_k_experts(
            gate_weights(h, hot, b), gp.partition[b], 1
        )


def test_routing_trace_csv():
    rng = np.random.default_rng(7)
    f = parse(TASK_FORMULAS["phi_a"])
    gp = random_gate_params(rng)
    rows = routing_trace(f, 80, CFG, gp, rng.standard_normal((80, 16)))
    text = routing_trace_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "t,op_family,band,bucket,top1_expert,gate_entropy"
    assert len(lines) == 81
    assert all(r["bucket"] == assign_bucket(f, r["t"], CFG) for r in rows)
    assert all(0 <= r["gate_entropy"] <= math.log(2) + 1e-12 for r in rows)
    assert all(r["top1_expert"] in gp.partition[r["bucket"]] for r in rows)


@given(st.integers(0, 2**32 - 1))
def test_assign_bucket_total(seed):
    rng = np.random.default_rng(seed)
    f = random_fragment_formula(rng, 80)
    for t in range(1, 81):
        b = assign_bucket(f, t, CFG)
        assert 0 <= b < CFG.B
