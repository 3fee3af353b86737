from itertools import product

import numpy as np
import pytest
import scipy.sparse as sp
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from harvnet.errors import MatrixError
from harvnet.graph import knn_graph
from harvnet.spectral import (
    Partition,
    _rotate_and_round,
    cluster,
    continuous_partition,
    discretize,
    eigendecompose,
    eigengap_choose_K,
    knassoc,
    spectral_partition,
)
from harvnet.validation import adjusted_rand_index


def _blocks(rng, sizes, noise=0.0):
    """Symmetric W with dense positive blocks, optional weak cross links, unit diagonal."""
    M = sum(sizes)
    W = noise * rng.random((M, M))
    start = 0
    for n in sizes:
        W[start:start + n, start:start + n] = 0.5 + 0.5 * rng.random((n, n))
        start += n
    W = np.triu(W, 1)
    W = W + W.T + np.eye(M)
    truth = np.repeat(np.arange(len(sizes)), sizes)
    return W, truth


def _random_W(rng, M, p=0.5, connected=False):
    A = np.triu(rng.random((M, M)) * (rng.random((M, M)) < p), 1)
    if connected:
        idx = np.arange(M - 1)
        A[idx, idx + 1] += 0.05
    return A + A.T + np.eye(M)


def _all_partitions(M, K):
    """Every labeling of M nodes into exactly K nonempty clusters (node 0 in cluster 0)."""
    for tail in product(range(K), repeat=M - 1):
        labels = (0,) + tail
        if len(set(labels)) == K:
            yield np.array(labels)


def _knassoc_sets(W, labels):
    """Direct set-based links(V,V)/deg(V) average."""
    M = W.shape[0]
    total = 0.0
    K = int(labels.max()) + 1
    for k in range(K):
        V = [i for i in range(M) if labels[i] == k]
        links = sum(W[i, j] for i in V for j in V)
        deg = sum(W[i, j] for i in V for j in range(M))
        total += links / deg
    return total / K


def test_identity_spectrum():
    sol = eigendecompose(np.eye(6), 6)
    np.testing.assert_allclose(sol.eigenvalues, 1.0, atol=1e-12)


def test_two_blocks_spectrum():
    W, _ = _blocks(np.random.default_rng(0), [5, 7])
    lam = eigendecompose(W, 3).eigenvalues
    assert lam[0] == pytest.approx(1, abs=1e-10) and lam[1] == pytest.approx(1, abs=1e-10)
    assert lam[2] < 1 - 1e-3


def test_triangle_against_exact_solver():
    W = np.ones((3, 3))
    lam = eigendecompose(W, 3).eigenvalues
    N = sympy.Matrix(3, 3, lambda i, j: sympy.Rational(1, 3))
    exact = sorted((float(v) for v, mult in N.eigenvals().items() for _ in range(mult)), reverse=True)
    np.testing.assert_allclose(lam, exact, atol=1e-12)


def test_sparse_path_matches_dense():
    rng = np.random.default_rng(1)
    W, _ = _blocks(rng, [300, 300], noise=0.01)
    W[W < 0.005] = 0
    dense = eigendecompose(W, 4)
    sparse = eigendecompose(sp.csr_matrix(W), 4)
    np.testing.assert_allclose(dense.eigenvalues, sparse.eigenvalues, atol=1e-8)
    assert np.abs(np.abs(dense.eigenvectors.T @ sparse.eigenvectors).diagonal() - 1).max() < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_spectrum_invariants(M, seed):
    W = _random_W(np.random.default_rng(seed), M, p=0.3)
    sol = eigendecompose(W, M)
    assert (np.diff(sol.eigenvalues) <= 1e-12).all()
    assert sol.eigenvalues.min() >= -1 - 1e-10 and sol.eigenvalues.max() <= 1 + 1e-10
    assert sol.eigenvalues[0] == pytest.approx(1, abs=1e-10)
    n_comp = sp.csgraph.connected_components(sp.csr_matrix(W - np.eye(M)), directed=False)[0]
    assert int(np.sum(sol.eigenvalues > 1 - 1e-9)) == n_comp
    Y = sol.generalized_eigenvectors
    D = np.diag(W.sum(axis=1))
    np.testing.assert_allclose(W @ Y, D @ Y * sol.eigenvalues, atol=1e-9)


@pytest.mark.parametrize("lam,K", [
    ([1.0, 1.0, 0.99, 0.4, 0.35], 3),
    ([1.0, 0.2, 0.19], 1),
    ([1.0, 0.75, 0.5, 0.25], 1),  # equal gaps resolve to the smallest K
    ([1.0, 0.95, 0.45, 0.0], 2),  # the 0.45 -> 0.0 gap is below the floor
])
def test_eigengap_examples(lam, K):
    assert eigengap_choose_K(lam) == K


def test_eigengap_five_blocks():
    W, _ = _blocks(np.random.default_rng(2), [6, 5, 8, 4, 7])
    assert eigengap_choose_K(eigendecompose(W, 10).eigenvalues) == 5


def test_eigengap_needs_two():
    with pytest.raises(ValueError):
        eigengap_choose_K([1.0])


def test_continuous_partition_blocks():
    W, truth = _blocks(np.random.default_rng(3), [4, 6])
    Z = continuous_partition(eigendecompose(W, 2), 2)
    np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1, atol=1e-12)
    assert len({tuple(np.round(row, 8)) for row in Z}) == 2
    with pytest.raises(MatrixError):
        continuous_partition(eigendecompose(W, 2), 1)
    W[0, -1] = W[-1, 0] = 0.1
    Z1 = continuous_partition(eigendecompose(W, 2), 1)
    np.testing.assert_allclose(Z1, 1, atol=1e-12)


def test_continuous_partition_perturbed():
    W, truth = _blocks(np.random.default_rng(4), [10, 10], noise=0.05)
    Z = continuous_partition(eigendecompose(W, 2), 2)
    for b in range(2):
        rows = Z[truth == b]
        assert (rows @ rows.T).min() >= 0.99


def test_discretize_fixed_point():
    labels = np.array([0, 1, 2, 1, 0, 2, 2])
    Z = np.eye(3)[labels]
    log = []
    part = discretize(Z, trace_log=log)
    assert adjusted_rand_index(labels, part.assignments) == 1.0
    assert log[0] == pytest.approx(len(labels))
    assert len(log) == 2  # one rotation, then no further improvement


def test_discretize_single_cluster():
    part = discretize(np.ones((5, 1)))
    assert part.K == 1 and (part.assignments == 0).all()


def test_discretize_recovers_three_blocks():
    W, truth = _blocks(np.random.default_rng(5), [7, 9, 5])
    part = discretize(continuous_partition(eigendecompose(W, 3), 3))
    assert adjusted_rand_index(truth, part.assignments) == 1.0
    X = part.X
    assert (X.sum(axis=1) == 1).all() and (X.sum(axis=0) > 0).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 30), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_discretize_trace_monotone(M, K, seed):
    W = _random_W(np.random.default_rng(seed), M, p=0.4, connected=True)
    Z = continuous_partition(eigendecompose(W, K), K)
    for first in (0, M // 2):
        log = []
        _rotate_and_round(Z, first, log)
        assert all(b >= a - 1e-9 for a, b in zip(log, log[1:]))
        assert log[-1] <= M + 1e-9


def test_knassoc_examples():
    W, truth = _blocks(np.random.default_rng(6), [3, 4, 5])
    assert knassoc(W, Partition(truth, 3)) == pytest.approx(1.0, abs=1e-12)
    assert knassoc(W, Partition(np.zeros(12, dtype=np.int64), 1)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(MatrixError):
        knassoc(np.zeros((2, 2)), np.eye(2))


def test_knassoc_matches_set_definition():
    W = _random_W(np.random.default_rng(7), 8, p=0.5)
    values = []
    for labels in _all_partitions(8, 2):
        ours = knassoc(W, Partition(labels, 2))
        assert ours == pytest.approx(_knassoc_sets(W, labels), abs=1e-12)
        values.append((ours, tuple(labels)))
    best, best_labels = max(values)
    assert knassoc(W, Partition(np.array(best_labels), 2)) == pytest.approx(best, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 8), st.integers(2, 3), st.integers(0, 2**32 - 1))
def test_relaxation_bound(M, K, seed):
    K = min(K, M)
    W = _random_W(np.random.default_rng(seed), M)
    bound = eigendecompose(W, K).eigenvalues.mean()
    for labels in _all_partitions(M, K):
        assert knassoc(W, Partition(labels, K)) <= bound + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    W, _ = _blocks(rng, [8, 6, 10], noise=0.1)
    perm = rng.permutation(W.shape[0])
    base = spectral_partition(W).assignments
    permuted = spectral_partition(W[np.ix_(perm, perm)]).assignments
    back = np.empty_like(permuted)
    back[perm] = permuted
    assert adjusted_rand_index(base, back) == 1.0


def test_cluster_small_components_skip_eigensolve(monkeypatch):
    import harvnet.spectral as spectral

    monkeypatch.setattr(spectral, "eigendecompose", lambda *a, **k: pytest.fail("eigensolve called"))
    W = sp.block_diag([np.ones((n, n)) for n in (2, 3, 4, 5, 6)]).tocsr()
    part = cluster(W, "auto", 10)
    assert part.K == 5
    assert part.assignments.tolist() == part.component_ids.tolist()


def test_cluster_large_plus_small_components():
    rng = np.random.default_rng(8)
    big, truth = _blocks(rng, [10, 10, 10, 10], noise=0.02)
    W = sp.block_diag([big, np.ones((2, 2)), np.ones((2, 2))]).tocsr()
    part = cluster(W, "auto", 10)
    assert part.K == 6
    expected = np.concatenate([truth, [4, 4, 5, 5]])
    assert adjusted_rand_index(expected, part.assignments) == 1.0
    assert part.chosen_K == {0: 4}


def test_cluster_explicit_K_and_workers():
    rng = np.random.default_rng(9)
    big, _ = _blocks(rng, [12] * 6, noise=0.05)
    W = sp.block_diag([big, np.ones((3, 3)), big]).tocsr()
    seq = cluster(W, 7, 10)
    assert seq.K == 7 + 1 + 7
    assert np.bincount(seq.assignments[:72]).size == 7
    par = cluster(W, 7, 10, workers=3)
    assert par.assignments.tolist() == seq.assignments.tolist()


def test_cluster_knn_graph_input():
    rng = np.random.default_rng(10)
    W, truth = _blocks(rng, [15, 15])
    g = knn_graph(W, 5)
    part = cluster(g)
    assert adjusted_rand_index(truth, part.assignments) == 1.0
