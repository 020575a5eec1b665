import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netmark.select import (ClusterModel, ScoreTable, candidate_pool_size, cluster_nets,
                            score_nets, select_sensitive, trace_distance)
from netmark.sim import TraceMatrix, activity, generate_vectors, simulate
from netmark.netlist import fanin_cone_sizes, parse_bench, serialize_bench

from conftest import load
from oracles import best_two_partition

FOUR = np.array([[0, 0, 1, 1],
                 [0, 0, 1, 1],
                 [0, 0, 1, 1],
                 [0, 1, 0, 1]], dtype=bool)  # columns: 0000, 0001, 1110, 1111
NOT_CONSTANT = np.zeros(4, dtype=bool)


def test_trace_distance_examples():
    t = TraceMatrix.from_array(FOUR)
    assert trace_distance(t, 0, 0) == 0.0
    assert trace_distance(t, 0, 1) == 1.0
    assert trace_distance(t, 0, 3) == 2.0
    assert trace_distance(t, 1, 2) == 2.0
    assert trace_distance(t, 2, 3) == trace_distance(t, 3, 2) == 1.0
    with pytest.raises(IndexError):
        trace_distance(t, 0, 4)


def test_trace_distance_triangle_inequality(net19):
    t = simulate(net19, generate_vectors(net19, 200, seed=1))
    n = net19.net_count
    for i in range(n):
        for j in range(n):
            for k in range(0, n, 3):
                assert trace_distance(t, i, j) <= trace_distance(t, i, k) + trace_distance(t, k, j) + 1e-12


def test_four_net_example_matches_exhaustive_partition():
    t = TraceMatrix.from_array(FOUR)
    model = cluster_nets(t, 2, seed=0, constant=NOT_CONSTANT)
    a = model.assignment
    assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]
    sse, labels = best_two_partition(FOUR.T.astype(float))
    assert np.array_equal(a == a[0], labels == labels[0])
    assert math.isclose(model.distortion, sse)


@pytest.mark.parametrize("seed", range(6))
def test_random_points_reach_exhaustive_optimum_or_local_minimum(seed):
    rng = np.random.default_rng(seed)
    cols = rng.random((12, 7)) < 0.5
    cols[:, 0] = False
    cols[0, 0] = True  # keep every column non-constant w.r.t. the zero default
    model = cluster_nets(TraceMatrix.from_array(cols), 2, seed=seed, constant=np.zeros(7, bool))
    sse, _ = best_two_partition(cols.T.astype(float))
    assert model.distortion >= sse - 1e-9
    # Lloyd fixed point: nobody is closer to the other centroid
    pts = cols.T.astype(float)
    d = ((pts[:, None, :] - model.centroids[None]) ** 2).sum(axis=2)
    assert np.all(d[np.arange(7), model.assignment] <= d.min(axis=1) + 1e-9)


def test_k_equal_n_gives_singletons():
    t = TraceMatrix.from_array(FOUR)
    model = cluster_nets(t, 4, seed=1, constant=NOT_CONSTANT)
    assert sorted(model.assignment.tolist()) == [0, 1, 2, 3]
    assert model.distortion == 0.0


def test_k_validation():
    t = TraceMatrix.from_array(FOUR)
    with pytest.raises(ValueError):
        cluster_nets(t, 5, seed=0, constant=NOT_CONSTANT)
    with pytest.raises(ValueError):
        cluster_nets(t, 0, seed=0, constant=NOT_CONSTANT)
    # default exclusion drops the all-zero column (it never leaves the zero default)
    with pytest.raises(ValueError):
        cluster_nets(t, 4, seed=0)


def test_constant_nets_excluded():
    t = TraceMatrix.from_array(FOUR)
    model = cluster_nets(t, 2, seed=0)
    assert model.assignment[0] == -1
    assert (model.assignment[1:] >= 0).all()


@pytest.fixture(scope="module")
def c880_trace():
    n = load("c880")
    return n, simulate(n, generate_vectors(n, 2000, seed=1))


def test_clustering_is_deterministic(c880_trace):
    _, t = c880_trace
    a = cluster_nets(t, 32, seed=5)
    b = cluster_nets(t, 32, seed=5)
    assert np.array_equal(a.assignment, b.assignment)
    assert a.distortion_history == b.distortion_history


def test_distortion_never_increases(c880_trace):
    _, t = c880_trace
    for seed in range(3):
        h = cluster_nets(t, 32, seed=seed).distortion_history
        assert all(h[i + 1] <= h[i] + 1e-6 for i in range(len(h) - 1))


def test_no_empty_clusters(c880_trace):
    _, t = c880_trace
    model = cluster_nets(t, 32, seed=0)
    assert all(len(model.members(c)) > 0 for c in range(32))


def test_long_traces_are_subsampled(full_adder):
    t = simulate(full_adder, generate_vectors(full_adder, 10_050, seed=2))
    model = cluster_nets(t, 2, seed=0)
    assert model.rows is not None and len(model.rows) == 4096
    assert model.centroids.shape == (2, 4096)


def test_score_examples():
    s = ScoreTable(sw=np.array([0.5, 1.0, 0.0]), fanin_norm=np.array([0.5, 1.0, 1.0]))
    assert s.p.tolist() == [0.5, 1.0, 0.5]
    assert s[1].p == 1.0


def test_scores_of_net19(net19):
    t = simulate(net19, generate_vectors(net19, 256, seed=1))
    act = activity(t)
    s = score_nets(net19, act)
    cones = np.array(fanin_cone_sizes(net19))
    assert np.allclose(s.fanin_norm, cones / 14)
    assert np.allclose(s.p, 0.5 * act.sw + 0.5 * cones / 14)
    assert s.fanin_norm[net19.net("N19")] == 1.0
    assert (s.p >= 0).all() and (s.p <= 1).all()
    imm = score_nets(net19, act, fanin="immediate")
    assert imm.fanin_norm[net19.net("N14")] == 0.5
    with pytest.raises(ValueError):
        score_nets(net19, act, fanin="bogus")


def test_duplicated_circuit_keeps_scores(net19):
    # two disjoint copies: same cones, same max, so every net keeps its score
    text = serialize_bench(net19, header=False)
    twin = parse_bench(text + re.sub(r"\bN(\d+)\b", r"M\1", text), "twin")
    vecs = generate_vectors(net19, 256, seed=1).bits
    t1 = simulate(net19, vecs)
    t2 = simulate(twin, np.hstack([vecs, vecs]))
    s1 = score_nets(net19, activity(t1))
    s2 = score_nets(twin, activity(t2))
    for name in net19.net_names:
        assert s2.p[twin.net(name)] == s1.p[net19.net(name)]
        assert s2.p[twin.net("M" + name[1:])] == s1.p[net19.net(name)]


def test_candidate_pool_size():
    assert candidate_pool_size(30, 0.1) == 3
    assert candidate_pool_size(31, 0.1) == 4
    assert candidate_pool_size(5, 0.1) == 1
    assert candidate_pool_size(7, 1.0) == 7


def _model(assign, k):
    a = np.asarray(assign)
    return ClusterModel(k=k, assignment=a, centroids=np.zeros((k, 1)), iterations_run=1,
                        seed=0, distortion_history=(0.0,))


def test_single_candidate_pool_picks_argmax():
    scores = ScoreTable(sw=np.array([0.1, 0.9, 0.3, 0.2, 0.8, 0.5]),
                        fanin_norm=np.zeros(6))
    model = _model([0, 0, 0, 1, 1, -1], 2)
    for seed in range(10):
        s = select_sensitive(model, scores, threshold=0.1, seed=seed)
        assert s.nets == (1, 4)
        assert s.clusters == (0, 1)


def test_ties_break_by_lower_net_id():
    scores = ScoreTable(sw=np.array([0.5, 0.5, 0.5]), fanin_norm=np.zeros(3))
    s = select_sensitive(_model([0, 0, 0], 1), scores, threshold=0.1, seed=0)
    assert s.nets == (0,)


def test_pool_draw_stays_in_top_fraction():
    rng = np.random.default_rng(0)
    p = rng.random(100)
    scores = ScoreTable(sw=p, fanin_norm=p)
    top = set(np.argsort(-p)[:10].tolist())
    for seed in range(50):
        s = select_sensitive(_model(np.zeros(100, int), 1), scores, threshold=0.1, seed=seed)
        assert s.nets[0] in top


def test_empty_clusters_are_skipped():
    scores = ScoreTable(sw=np.array([0.1, 0.2]), fanin_norm=np.zeros(2))
    s = select_sensitive(_model([0, 2], 3), scores)
    assert s.skipped_clusters == (1,)
    assert len(s) == 2


def test_selection_on_real_circuit(c880_trace):
    n, t = c880_trace
    act = activity(t)
    model = cluster_nets(t, 32, seed=3, constant=act.constant)
    sel = select_sensitive(model, score_nets(n, act), threshold=0.1, seed=4)
    assert len(sel) == 32
    assert len(set(sel.nets)) == 32
    assert sorted(model.assignment[list(sel.nets)].tolist()) == list(range(32))
    assert not act.constant[list(sel.nets)].any()
    again = select_sensitive(model, score_nets(n, act), threshold=0.1, seed=4)
    assert again.nets == sel.nets
    assert '"nets"' in sel.to_json(n)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 6))
def test_distortion_monotone_property(seed, k):
    rng = np.random.default_rng(seed)
    cols = rng.random((40, 15)) < rng.random(15)
    cols[0] = True
    model = cluster_nets(TraceMatrix.from_array(cols), k, seed=seed, constant=np.zeros(15, bool))
    h = model.distortion_history
    assert all(h[i + 1] <= h[i] + 1e-9 for i in range(len(h) - 1))
    assert set(model.assignment.tolist()) == set(range(k))
