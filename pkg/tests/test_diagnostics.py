import ast

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahdenv.diagnostics import analyze_instances, ast_novelty
from ahdenv.diagnostics.ast_novelty import (
    alignment_ratio,
    combine,
    cosine,
    node_counts,
    novelty_hint,
    similarity,
    token_stream,
)
from ahdenv.diagnostics.instance_analysis import (
    FEATURES,
    LeakageError,
    ToolArgumentError,
    UnknownInstanceError,
    cluster_structure,
    contrastive_pair,
    demand_pattern,
    density_and_hull,
    instance_features,
    knn_weights,
    morans_i,
    nn_statistics,
)
from ahdenv.instancegen import (
    DESIGN,
    VALIDATION,
    Dataset,
    EuclideanInstance,
    RoutingInstance,
    generate,
    generate_cvrp,
    generate_mkp,
    generate_tsp,
)
from ahdenv.programhost import ProgramParseError

from conftest import FARTHEST_TSP, NN_TSP, weighted_tsp_source

# -- spatial statistics ---------------------------------------------------------


def blobs(side=6):
    """Two square lattices with spacing 1/32; every spacing and offset is exact in binary."""
    lattice = np.array([(x, y) for x in range(side) for y in range(side)], dtype=float) / 32.0
    return np.vstack([lattice + 0.125, lattice + 0.625])


def test_two_blobs_are_found():
    pts = blobs()
    eps = 1.0 / 32.0  # every nearest-neighbour distance equals the spacing
    gap = np.linalg.norm(pts[:36, None] - pts[None, 36:], axis=-1).min()
    assert gap > 10 * eps
    k, sil, degenerate = cluster_structure(pts)
    assert k == 2 and sil > 0.5 and not degenerate


def test_two_points_have_zero_nn_cv():
    cv, norm, degenerate = nn_statistics(np.array([[0.0, 0.0], [0.3, 0.4]]))
    assert cv == 0.0 and not degenerate and norm == pytest.approx(0.5 / (0.5 / np.sqrt(2)))


def test_uniform_points_rarely_form_dense_clusters():
    k, sil, _ = cluster_structure(np.random.default_rng(3).random((100, 2)))
    assert k <= 2


def test_coincident_points_are_degenerate():
    pts = np.zeros((10, 2))
    assert nn_statistics(pts) == (0.0, 0.0, True)
    assert cluster_structure(pts) == (1, None, True)


def test_collinear_points_report_no_hull_area():
    pts = np.column_stack([np.linspace(0, 1, 10), np.linspace(0, 1, 10)])
    density_cv, hull_fraction, area, collinear = density_and_hull(pts)
    assert collinear and area == 0.0 and hull_fraction == pytest.approx(0.2)


def test_uniform_nn_mean_is_near_one():
    pts = np.random.default_rng(5).random((2000, 2))
    assert nn_statistics(pts)[1] == pytest.approx(1.0, abs=0.1)


def test_density_cv_is_zero_for_a_regular_grid():
    grid = np.array([(x, y) for x in range(8) for y in range(8)], dtype=float)
    assert density_and_hull(grid)[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), power=st.integers(-8, 8))
def test_ratio_statistics_are_scale_invariant(seed, power):
    pts = np.random.default_rng(seed).random((40, 2))
    factor = 2.0**power
    assert nn_statistics(pts * factor)[0] == pytest.approx(nn_statistics(pts)[0], abs=1e-12)
    assert density_and_hull(pts * factor) == pytest.approx(density_and_hull(pts), abs=1e-12)
    assert cluster_structure(pts * factor)[:2] == pytest.approx(cluster_structure(pts)[:2], abs=1e-12)


def test_knn_weights_are_binary_rows_of_k():
    pts = np.random.default_rng(1).random((12, 2))
    W = knn_weights(pts)
    assert set(np.unique(W)) == {0.0, 1.0}
    assert np.all(W.sum(axis=1) == 5) and np.all(np.diag(W) == 0)


def test_morans_i_sign_and_undefined():
    pts = np.array([(x, 0.0) for x in range(12)], dtype=float) + np.random.default_rng(0).normal(0, 1e-3, (12, 2))
    W = knn_weights(pts)
    smooth = np.arange(12, dtype=float)
    alternating = np.array([0.0, 1.0] * 6)
    assert morans_i(smooth, W) > 0.3
    assert morans_i(alternating, W) < 0
    assert morans_i(np.ones(12), W) is None


def test_demand_pattern_needs_enough_customers():
    with pytest.raises(ValueError):
        demand_pattern(np.random.default_rng(0).random((5, 2)), np.arange(1, 6))


# -- per-domain features and the tool -------------------------------------------


def test_routing_features_use_customers_only():
    inst = generate_cvrp(30, 1, 2)[0]
    s = instance_features("cvrp_c", inst)
    cv, moran, _ = demand_pattern(inst.coordinates[1:], inst.demands[1:])
    assert s.demand_cv == cv and s.demand_morans_i == moran
    assert s.value_cv is None


def test_tiny_routing_instances_are_flagged():
    s = instance_features("cvrp_c", generate_cvrp(5, 1, 0)[0])
    assert s.demand_cv is None and any("too few customers" in f for f in s.flags)


def test_constant_demands_are_flagged():
    inst = generate_cvrp(20, 1, 0)[0]
    flat = RoutingInstance(inst.base, np.array([0] + [3] * 20), inst.capacity)
    s = instance_features("cvrp_c", flat)
    assert s.demand_morans_i == 0.0 and "moran undefined: constant demands" in s.flags


def test_knapsack_features_are_tabular():
    s = instance_features("mkp_aco", generate_mkp(30, 1, 0)[0])
    assert s.nn_cv is None and s.value_cv > 0 and s.weight_cv > 0
    assert -1.0 <= s.value_weight_correlation <= 1.0


@pytest.mark.parametrize("domain", ["tsp_c", "cvrp_aco", "op_aco", "mkp_aco"])
def test_tool_scopes(domain):
    n = 30
    ds = generate(domain, n, 4, 1)
    summary = analyze_instances(ds)
    assert summary.metrics["count"] == 4 and "Design set" in summary.text
    single = analyze_instances(ds, "single_instance", ds[2].id)
    assert single.metrics["instance_id"] == ds[2].id
    pair = analyze_instances(ds, "contrastive_pair")
    assert pair.metrics["a"] != pair.metrics["b"]
    assert len(pair.metrics["gaps"]) <= 3


def test_contrastive_pair_picks_the_outlier():
    rng = np.random.default_rng(0)
    insts = [EuclideanInstance(f"u{k}", rng.random((40, 2))) for k in range(4)]
    insts.append(EuclideanInstance("blob", blobs()[:40]))
    pair = contrastive_pair(Dataset("tsp_c", DESIGN, 40, 0, insts))
    assert "blob" in (pair["a"], pair["b"])
    assert all(g["feature"] in FEATURES for g in pair["gaps"])


def test_tool_argument_errors():
    ds = generate_tsp(20, 2, 0)
    with pytest.raises(ToolArgumentError):
        analyze_instances(ds, "everything")
    with pytest.raises(ToolArgumentError):
        analyze_instances(ds, "single_instance")
    with pytest.raises(ToolArgumentError):
        analyze_instances(ds, "summary", ds[0].id)
    with pytest.raises(UnknownInstanceError):
        analyze_instances(ds, "single_instance", "nope")
    with pytest.raises(ToolArgumentError):
        contrastive_pair(generate_tsp(20, 1, 0))


def test_validation_data_is_refused():
    with pytest.raises(LeakageError):
        analyze_instances(generate_tsp(20, 2, 0, role=VALIDATION))


# -- AST novelty ----------------------------------------------------------------


def test_token_streams_normalize_names_and_literals():
    tree = ast.parse("def f(a):\n    b = a + 1.5\n    return 'x'\n")
    raw = token_stream(tree)
    shape = token_stream(tree, normalize=True)
    assert "Name:b" in raw and "Constant:1.5" in raw
    assert "Name:VAR" in shape and "Name:ARG" in shape and "Constant:NUM" in shape and "Constant:STR" in shape
    assert "FunctionDef:VAR" in shape and "arg:ARG" in shape
    assert not any(t.startswith(("Load", "Store")) for t in raw)


def test_similarity_primitives():
    assert alignment_ratio([], []) == 1.0
    assert alignment_ratio(list("abcd"), list("abcd")) == 1.0
    assert cosine(node_counts(ast.parse("x = 1")), node_counts(ast.parse("x = 1"))) == pytest.approx(1.0)
    assert combine(1.0, 1.0, 1.0) == 1.0 and combine(0.0, 0.0, 0.0) == 0.0


def test_literal_changes_only_move_the_raw_similarity():
    m = similarity(weighted_tsp_source(0.1), weighted_tsp_source(0.9))
    assert m.shape_sim == 1.0 and m.node_sim == 1.0 and m.raw_sim < 1.0


def test_different_programs_are_less_similar():
    near = similarity(NN_TSP, FARTHEST_TSP).combined
    far = similarity(NN_TSP, "def select_next_node(a, b, c, d):\n    return c[0]\n").combined
    assert far < near < 1.0


def test_report_ranks_matches_and_skips_unparseable_history():
    history = [(1, FARTHEST_TSP), (2, "def broken(:\n"), (3, NN_TSP), (4, weighted_tsp_source(0.2))]
    report = ast_novelty(NN_TSP, history, top_k=2)
    assert report.skipped == [2] and report.compared == 3
    assert [m.attempt_id for m in report.matches] == [3, 1]  # argmin vs argmax is one token
    assert report.novelty == 0.0 and "close to an earlier attempt" in report.hint
    assert "attempt 3" in report.text()
    assert report.as_dict()["novelty"] == 0.0


def test_hint_threshold():
    assert "novel" in novelty_hint(0.15) and "close" in novelty_hint(0.149)


def test_unparseable_candidate_raises():
    with pytest.raises(ProgramParseError):
        ast_novelty("def f(:\n", [])
