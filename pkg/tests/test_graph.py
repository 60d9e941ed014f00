"""Graph-module tests: Laplacian blocks, reachability, M-matrix certificates."""

import numpy as np
import pytest

from coopreg import graph, linalg
from coopreg.errors import LeaderHasInEdge, ZeroInDegree

# Six-agent benchmark: 4 followers, 2 leaders.  Row i lists who i hears.
BENCH_ADJ = np.array([
    [0, 0, 0, 1, 1, 0],
    [1, 0, 0, 0, 0, 0],
    [1, 0, 0, 1, 0, 0],
    [0, 1, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0],
], dtype=float)

L1_EXPECTED = np.array([
    [2.0, 0.0, 0.0, -1.0],
    [-1.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 2.0, -1.0],
    [0.0, -1.0, 0.0, 2.0],
])
L2_EXPECTED = np.array([
    [-1.0, 0.0],
    [0.0, 0.0],
    [0.0, 0.0],
    [0.0, -1.0],
])


def bench_topology():
    return graph.Topology(n=6, m=4, adjacency=BENCH_ADJ)


def random_leader_reachable_topology(rng):
    """Random weighted digraph in which every follower is reachable from a
    leader: each follower hears one earlier-or-leader node (a spanning
    structure) plus optional extra edges."""
    n = int(rng.integers(3, 13))
    m = int(rng.integers(1, n))
    adj = np.zeros((n, n))
    for i in range(m):
        # guaranteed feed from a leader or an already-fed follower
        feeders = list(range(m, n)) + list(range(i))
        j = int(rng.choice(feeders))
        adj[i, j] = rng.uniform(0.2, 2.0)
    # extra random follower in-edges
    for i in range(m):
        for j in range(n):
            if j != i and adj[i, j] == 0 and rng.random() < 0.25:
                adj[i, j] = rng.uniform(0.2, 2.0)
    return graph.Topology(n=n, m=m, adjacency=adj)


# ---------------------------------------------------------------------------
# build_laplacian

def test_benchmark_blocks_exact():
    blocks = graph.build_laplacian(bench_topology())
    np.testing.assert_array_equal(blocks.L1, L1_EXPECTED)
    np.testing.assert_array_equal(blocks.L2, L2_EXPECTED)
    np.testing.assert_array_equal(np.diag(blocks.D), [2.0, 1.0, 2.0, 2.0])
    np.testing.assert_array_equal(blocks.L[4:], np.zeros((2, 6)))

def test_single_follower_single_leader():
    t = graph.Topology(n=2, m=1, adjacency=[[0.0, 1.0], [0.0, 0.0]])
    blocks = graph.build_laplacian(t)
    np.testing.assert_array_equal(blocks.L1, [[1.0]])
    np.testing.assert_array_equal(blocks.L2, [[-1.0]])

def test_no_edges_builds_but_fails_reachability():
    t = graph.Topology(n=3, m=2, adjacency=np.zeros((3, 3)))
    blocks = graph.build_laplacian(t)
    np.testing.assert_array_equal(blocks.L, np.zeros((3, 3)))
    assert not graph.check_assumption4(t)

def test_leader_in_edge_raises():
    adj = BENCH_ADJ.copy()
    adj[4, 0] = 1.0
    t = graph.Topology(n=6, m=4, adjacency=adj)
    with pytest.raises(LeaderHasInEdge):
        graph.build_laplacian(t)

def test_follower_laplacian_rows_sum_to_zero():
    blocks = graph.build_laplacian(bench_topology())
    np.testing.assert_allclose(blocks.L[:4].sum(axis=1), np.zeros(4),
                               atol=1e-12)


# ---------------------------------------------------------------------------
# check_assumption4

def test_benchmark_reachability_holds():
    assert graph.check_assumption4(bench_topology())

def test_zero_indegree_follower_unreachable():
    adj = BENCH_ADJ.copy()
    adj[1] = 0.0
    assert not graph.check_assumption4(graph.Topology(6, 4, adj))

def test_follower_cycle_disconnected_from_leaders():
    adj = np.zeros((4, 4))
    adj[0, 1] = 1.0
    adj[1, 0] = 1.0
    assert not graph.check_assumption4(graph.Topology(4, 2, adj))

def test_leader_in_edge_fails_assumption4():
    adj = BENCH_ADJ.copy()
    adj[5, 1] = 1.0
    assert not graph.check_assumption4(graph.Topology(6, 4, adj))


# ---------------------------------------------------------------------------
# check_lemma1

def test_benchmark_lemma1_all_subchecks_pass():
    report = graph.check_lemma1(graph.build_laplacian(bench_topology()))
    assert report.passed
    assert report.m_matrix and report.nonnegative and report.row_sums_one
    assert report.min_real_eigenvalue > 0
    assert report.max_row_sum_deviation <= 1e-8

def test_lemma1_trivial_single_edge():
    t = graph.Topology(n=2, m=1, adjacency=[[0.0, 1.0], [0.0, 0.0]])
    blocks = graph.build_laplacian(t)
    X = linalg.solve_linear(blocks.L1, -blocks.L2)
    np.testing.assert_allclose(X, [[1.0]], atol=1e-12)
    assert graph.check_lemma1(blocks).passed

def test_lemma1_disconnected_follower_fails_m_matrix():
    adj = BENCH_ADJ.copy()
    adj[1] = 0.0  # follower 1 hears nobody -> zero row in L1
    report = graph.check_lemma1(graph.build_laplacian(graph.Topology(6, 4, adj)))
    assert not report.m_matrix
    assert not report.passed
    assert not report.computed_inverse_checks


# ---------------------------------------------------------------------------
# small_gain_matrix

def test_benchmark_small_gain_entries():
    blocks = graph.build_laplacian(bench_topology())
    Gamma = graph.small_gain_matrix(blocks)
    expected = np.array([
        [0.0, 0.0, 0.0, 0.5],
        [1.0, 0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.5],
        [0.0, 0.5, 0.0, 0.0],
    ])
    np.testing.assert_allclose(Gamma, expected, atol=1e-12)
    assert linalg.spectral_radius(Gamma) < 1.0

def test_small_gain_single_follower_is_zero():
    t = graph.Topology(n=2, m=1, adjacency=[[0.0, 1.0], [0.0, 0.0]])
    Gamma = graph.small_gain_matrix(graph.build_laplacian(t))
    np.testing.assert_array_equal(Gamma, [[0.0]])

def test_small_gain_zero_indegree_raises():
    adj = BENCH_ADJ.copy()
    adj[1] = 0.0
    blocks = graph.build_laplacian(graph.Topology(6, 4, adj))
    with pytest.raises(ZeroInDegree):
        graph.small_gain_matrix(blocks)

def test_small_gain_row_sums():
    # Row sums are (sum over follower senders a_ij) / kappa_i <= 1, with
    # equality exactly when follower i hears no leader directly.
    rng = np.random.default_rng(31)
    for _ in range(50):
        t = random_leader_reachable_topology(rng)
        blocks = graph.build_laplacian(t)
        Gamma = graph.small_gain_matrix(blocks)
        assert Gamma.min() >= 0.0
        sums = Gamma.sum(axis=1)
        assert (sums <= 1.0 + 1e-12).all()
        hears_leader = t.adjacency[:t.m, t.m:].sum(axis=1) > 0
        for i in range(t.m):
            if hears_leader[i]:
                assert sums[i] < 1.0 - 1e-12
            else:
                assert sums[i] == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# the executable certificate: reachability implies both Lemma-1 facts and
# the small-gain condition

def test_reachable_topologies_satisfy_certificates():
    rng = np.random.default_rng(37)
    for _ in range(200):
        t = random_leader_reachable_topology(rng)
        assert graph.check_assumption4(t)
        blocks = graph.build_laplacian(t)
        assert graph.check_lemma1(blocks).passed
        rho = linalg.spectral_radius(graph.small_gain_matrix(blocks))
        assert rho < 1.0
