import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_signed_graph
from trustgnn.errors import ConfigError
from trustgnn.features import (FeatureMatrix, SvdConfig, assemble_features,
                               random_features, rating_moments, signed_degree_stats,
                               standardize_columns, truncated_svd, unsigned_adjacency)
from trustgnn.graph import EdgeRecord, SignedGraph


def test_degree_stats_isolated_node():
    g = SignedGraph(2, [EdgeRecord(0, 1, 5, 0)])
    g3 = SignedGraph(3, g.edges)  # node 2 isolated
    assert signed_degree_stats(g3)[2].tolist() == [0, 0, 0, 0]


def test_degree_stats_direct():
    # node 1: in +0.5 and -0.3, out +1.0
    g = SignedGraph(3, [EdgeRecord(0, 1, 5, 0), EdgeRecord(2, 1, -3, 1), EdgeRecord(1, 0, 10, 2)])
    assert signed_degree_stats(g)[1].tolist() == [1, 1, 1, 0]


def test_degree_stats_matches_scan(rng):
    g = random_signed_graph(rng, n_nodes=25, n_edges=90)
    stats = signed_degree_stats(g)
    for v in range(g.num_nodes):
        want = [
            sum(1 for r in g.edges if r.target == v and r.raw_rating > 0),
            sum(1 for r in g.edges if r.target == v and r.raw_rating < 0),
            sum(1 for r in g.edges if r.source == v and r.raw_rating > 0),
            sum(1 for r in g.edges if r.source == v and r.raw_rating < 0),
        ]
        assert stats[v].tolist() == want


def test_moments_symmetric_pair():
    g = SignedGraph(3, [EdgeRecord(0, 2, 10, 0), EdgeRecord(1, 2, -10, 1)])
    mu, var = rating_moments(g)[2]
    assert mu == pytest.approx(0.0)
    assert var == pytest.approx(1.0)


def test_moments_singleton():
    g = SignedGraph(2, [EdgeRecord(0, 1, 5, 0)])
    assert rating_moments(g)[1].tolist() == pytest.approx([0.5, 0.0])
    assert rating_moments(g)[0].tolist() == [0.0, 0.0]


def test_moments_match_two_pass_oracle(rng):
    g = random_signed_graph(rng, n_nodes=30, n_edges=120)
    got = rating_moments(g)
    for v in range(g.num_nodes):
        ws = [r.raw_rating / 10.0 for r in g.edges if r.target == v]
        if not ws:
            assert got[v].tolist() == [0.0, 0.0]
            continue
        mu = sum(ws) / len(ws)
        var = sum((w - mu) ** 2 for w in ws) / len(ws)
        assert got[v, 0] == pytest.approx(mu, abs=1e-12)
        assert got[v, 1] == pytest.approx(var, abs=1e-12)


def test_svd_rank_one_recovery():
    # |A| = outer(u, v) built from a 5-node graph where node 0 rates everyone
    records = [EdgeRecord(0, j, w, j) for j, w in zip(range(1, 5), (10, 8, 6, 4))]
    g = SignedGraph(5, records)
    X = truncated_svd(g, SvdConfig(k_svd=1, iters=10, seed=0))
    A = unsigned_adjacency(g).toarray()
    _, s, _ = np.linalg.svd(A)
    assert np.linalg.norm(X[:, 0]) == pytest.approx(s[0], rel=1e-10)
    resid = np.linalg.norm(A - np.outer(X[:, 0] / s[0], (X[:, 0] / s[0]) @ A))
    assert resid / s[0] < 1e-8


def test_svd_zero_graph():
    g = SignedGraph(4, [EdgeRecord(0, 1, 1, 0)])
    gz = SignedGraph(4, [])
    X = truncated_svd(gz, SvdConfig(k_svd=2, iters=5, seed=0))
    assert np.allclose(X, 0.0)
    del g


def test_svd_k_too_large():
    g = SignedGraph(3, [EdgeRecord(0, 1, 5, 0)])
    with pytest.raises(ConfigError):
        truncated_svd(g, SvdConfig(k_svd=4, iters=5, seed=0))


@pytest.mark.parametrize("seed", range(5))
def test_svd_values_match_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_signed_graph(rng, n_nodes=50, n_edges=400, neg_frac=0.3)
    X = truncated_svd(g, SvdConfig(k_svd=8, iters=40, seed=seed))
    got = np.linalg.norm(X, axis=0)
    want = np.linalg.svd(unsigned_adjacency(g).toarray(), compute_uv=False)[:8]
    assert np.abs(got - want).max() / want[0] < 1e-6
    assert np.all(np.diff(got) <= 1e-9)  # descending order


def test_svd_residual_non_increasing(rng):
    g = random_signed_graph(rng, n_nodes=30, n_edges=180)
    A = unsigned_adjacency(g).toarray()
    resids = []
    for k in range(1, 7):
        X = truncated_svd(g, SvdConfig(k_svd=k, iters=40, seed=1))
        norms = np.linalg.norm(X, axis=0)
        U = X[:, norms > 1e-12] / norms[norms > 1e-12]
        resids.append(np.linalg.norm(A - U @ (U.T @ A)))
    assert all(b <= a + 1e-7 for a, b in zip(resids, resids[1:]))


def test_assemble_toy_dims_and_standardization():
    g = SignedGraph(3, [EdgeRecord(0, 1, 6, 0), EdgeRecord(1, 2, -4, 1), EdgeRecord(2, 0, 9, 2)])
    fm = assemble_features(g, SvdConfig(k_svd=2, iters=5, seed=0))
    assert fm.dim == 8
    assert fm.rows == 3
    assert np.abs(fm.data.mean(axis=0)).max() < 1e-9


def test_standardized_columns_unit_variance(rng):
    g = random_signed_graph(rng, n_nodes=40, n_edges=200)
    fm = assemble_features(g, SvdConfig(k_svd=4, iters=20, seed=3))
    var = fm.data.var(axis=0)
    nonconst = var > 1e-12
    assert np.abs(var[nonconst] - 1.0).max() < 1e-6
    assert np.all(np.isfinite(fm.data))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    g = random_signed_graph(rng, n_nodes=18, n_edges=60, neg_frac=0.3)
    perm = rng.permutation(18)
    g2 = SignedGraph(18, [EdgeRecord(int(perm[r.source]), int(perm[r.target]),
                                     r.raw_rating, r.timestamp) for r in g.edges])
    cfg = SvdConfig(k_svd=3, iters=60, seed=9)
    f1 = assemble_features(g, cfg).data
    f2 = assemble_features(g2, cfg).data
    assert np.abs(f2[perm] - f1).max() < 1e-7


def test_random_features_standardized():
    fm = random_features(50, 8, seed=5)
    assert fm.dim == 8
    assert np.abs(fm.data.mean(axis=0)).max() < 1e-12
    assert np.abs(fm.data.var(axis=0) - 1.0).max() < 1e-9
    fm2 = random_features(50, 8, seed=5)
    assert np.array_equal(fm.data, fm2.data)


def test_standardize_constant_column():
    out = standardize_columns(np.array([[1.0, 2.0], [1.0, 4.0]]))
    assert np.array_equal(out[:, 0], [0.0, 0.0])
