"""Normalized-association spectral partitioning.

The graph is split by maximizing the average within-cluster association
ratio ``links(V_k, V_k) / deg(V_k)``.  The discrete problem is relaxed to
the top eigenvectors of ``D^-1/2 W D^-1/2`` and then rounded back to a
partition matrix by alternating between a rotation of the eigenvector
frame and the nearest 0/1 assignment.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegeneratePartitionError, EigensolverError, MatrixError
from .graph import AdjacencyGraph, connected_components

log = logging.getLogger(__name__)

DENSE_LIMIT = 500
LAMBDA_FLOOR = 0.5
MAX_CLUSTERS = 100
MIN_COMPONENT_SIZE = 10
EIG_TOL = 1e-8
DISCRETIZE_TOL = 1e-10
DISCRETIZE_MAX_ITER = 100


@dataclass
class SpectralSolution:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degrees: np.ndarray

    @property
    def generalized_eigenvectors(self) -> np.ndarray:
        """Solutions of W y = lambda D y, i.e. D^-1/2 times the symmetric eigenvectors."""
        return self.eigenvectors / np.sqrt(self.degrees)[:, None]


@dataclass
class Partition:
    assignments: np.ndarray
    K: int
    component_ids: np.ndarray | None = None
    chosen_K: dict = field(default_factory=dict)

    @property
    def X(self) -> np.ndarray:
        X = np.zeros((len(self.assignments), self.K), dtype=np.int8)
        X[np.arange(len(self.assignments)), self.assignments] = 1
        return X

    @property
    def M(self) -> int:
        return len(self.assignments)

    def clusters(self) -> list[list[int]]:
        return [np.flatnonzero(self.assignments == c).tolist() for c in range(self.K)]


def relabel(assignments) -> np.ndarray:
    """Renumber cluster ids 0..K-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    return np.array([mapping.setdefault(int(a), len(mapping)) for a in assignments], dtype=np.int64)


def partition_from_labels(labels) -> Partition:
    assignments = relabel(labels)
    return Partition(assignments, int(assignments.max()) + 1 if len(assignments) else 0)


def _as_matrix(W):
    if sp.issparse(W):
        return sp.csr_matrix(W, dtype=float)
    return np.asarray(W, dtype=float)


def _degrees(W) -> np.ndarray:
    return np.asarray(W.sum(axis=1)).ravel()


def normalized_adjacency(W):
    W = _as_matrix(W)
    d = _degrees(W)
    if np.any(d <= 0):
        raise MatrixError("every node needs positive degree (add self-edges)")
    inv = 1.0 / np.sqrt(d)
    if sp.issparse(W):
        return sp.csr_matrix(sp.diags(inv) @ W @ sp.diags(inv)), d
    return W * inv[:, None] * inv[None, :], d


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive (first on ties)
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1
    return vectors * signs


def eigendecompose(W, m: int, tol: float = EIG_TOL) -> SpectralSolution:
    """Top-m eigenpairs of D^-1/2 W D^-1/2, eigenvalues descending."""
    N, d = normalized_adjacency(W)
    M = N.shape[0]
    if not 1 <= m <= M:
        raise ValueError(f"m must be in [1, {M}], got {m}")
    if M <= DENSE_LIMIT or m >= M - 1:
        dense = N.toarray() if sp.issparse(N) else N
        vals, vecs = np.linalg.eigh(dense)
        vals, vecs = vals[::-1][:m], vecs[:, ::-1][:, :m]
    else:
        try:
            vals, vecs = spla.eigsh(N, k=m, which="LA", tol=tol, v0=np.sqrt(d))
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError(
                f"eigensolver did not converge ({len(exc.eigenvalues)} of {m} pairs)"
            ) from exc
        order = np.argsort(-vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
    residuals = np.linalg.norm(N @ vecs - vecs * vals, axis=0)
    if np.any(residuals > max(100 * tol, 1e-9) * max(1.0, np.abs(vals).max())):
        raise EigensolverError(
            f"eigenpair residuals too large (max {residuals.max():.3g})", residuals=residuals
        )
    return SpectralSolution(vals, _fix_signs(vecs), d)


def eigengap_choose_K(eigenvalues, K_max: int | None = None, lambda_floor: float = LAMBDA_FLOOR) -> int:
    """K maximizing lambda_K - lambda_{K+1} over 1 <= K < K_max with lambda_K >= lambda_floor.

    Ties resolve to the smallest K.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size < 2:
        raise ValueError("eigengap needs at least two eigenvalues")
    K_max = lam.size if K_max is None else min(K_max, lam.size)
    best_K, best_gap = 1, -np.inf
    for K in range(1, K_max):
        if lam[K - 1] < lambda_floor:
            break
        gap = lam[K - 1] - lam[K]
        if gap > best_gap:
            best_K, best_gap = K, gap
    return best_K


def continuous_partition(solution: SpectralSolution, K: int) -> np.ndarray:
    """Rows of D^-1/2 [v_1..v_K], each scaled to unit length."""
    if K > solution.eigenvectors.shape[1]:
        raise ValueError(f"K={K} exceeds the {solution.eigenvectors.shape[1]} available eigenpairs")
    Z = solution.generalized_eigenvectors[:, :K]
    norms = np.linalg.norm(Z, axis=1)
    if not np.all(norms > 0):
        raise MatrixError(
            f"node {int(np.argmin(norms))} has a zero row in the relaxed partition (is the graph connected?)"
        )
    return Z / norms[:, None]


def _initial_rotation(Z: np.ndarray, first: int) -> np.ndarray:
    M, K = Z.shape
    R = np.zeros((K, K))
    R[:, 0] = Z[first]
    c = np.zeros(M)
    for j in range(1, K):
        c += np.abs(Z @ R[:, j - 1])
        R[:, j] = Z[int(np.argmin(c))]
    return R


def _assign(Y: np.ndarray) -> np.ndarray:
    X = np.zeros_like(Y)
    X[np.arange(Y.shape[0]), np.argmax(Y, axis=1)] = 1.0
    return X


def _rotate_and_round(Z: np.ndarray, first: int, trace_log=None):
    R = _initial_rotation(Z, first)
    last = -np.inf
    for _ in range(DISCRETIZE_MAX_ITER):
        X = _assign(Z @ R)
        U, omega, Vt = np.linalg.svd(X.T @ Z)
        objective = omega.sum()
        if trace_log is not None:
            trace_log.append(objective)
        if objective - last < DISCRETIZE_TOL:
            break
        last = objective
        R = Vt.T @ U.T
    return np.argmax(X, axis=1)


def discretize(Z, trace_log=None) -> Partition:
    """Round a unit-row relaxed partition to the nearest 0/1 partition matrix.

    Alternates X = onehot(argmax(Z R)) with R = V U^T from the SVD of
    X^T Z = U Omega V^T.  If a cluster comes out empty the whole procedure
    restarts from a different first row, up to K times.
    """
    Z = np.asarray(Z, dtype=float)
    M, K = Z.shape
    if K == 1:
        return Partition(np.zeros(M, dtype=np.int64), 1)
    for attempt in range(K + 1):
        first = (attempt * max(1, M // (K + 1))) % M
        labels = _rotate_and_round(Z, first, trace_log)
        if np.unique(labels).size == K:
            return Partition(relabel(labels), K)
        log.debug("discretization left an empty cluster (start row %d), restarting", first)
    raise DegeneratePartitionError(f"could not find {K} nonempty clusters for {M} nodes")


def knassoc(W, X) -> float:
    """Average over clusters of links(V_k, V_k) / deg(V_k)."""
    W = _as_matrix(W)
    if isinstance(X, Partition):
        X = X.X
    X = np.asarray(X, dtype=float)
    d = _degrees(W)
    links = np.einsum("ik,ik->k", X, np.asarray(W @ X))
    deg = X.T @ d
    if np.any(deg <= 0):
        raise MatrixError("a cluster has zero degree")
    return float(np.mean(links / deg))


def spectral_partition(W, K: int | str = "auto", *, max_clusters: int = MAX_CLUSTERS,
                       lambda_floor: float = LAMBDA_FLOOR, eig_tol: float = EIG_TOL) -> Partition:
    """Cluster one connected graph; ``K="auto"`` picks K by the eigengap."""
    W = _as_matrix(W)
    M = W.shape[0]
    if K == "auto":
        m = min(M, max_clusters + 1)
        if m < 2:
            return Partition(np.zeros(M, dtype=np.int64), 1)
        solution = eigendecompose(W, m, tol=eig_tol)
        K = eigengap_choose_K(solution.eigenvalues, m, lambda_floor)
    else:
        K = int(K)
        if not 1 <= K <= M:
            raise ValueError(f"K must be in [1, {M}], got {K}")
        solution = eigendecompose(W, K, tol=eig_tol)
    return discretize(continuous_partition(solution, K))


def cluster(graph, K: int | str = "auto", min_component_size: int = MIN_COMPONENT_SIZE, *,
            max_clusters: int = MAX_CLUSTERS, lambda_floor: float = LAMBDA_FLOOR,
            eig_tol: float = EIG_TOL, workers: int = 1) -> Partition:
    """Partition every connected component and merge into global cluster ids.

    Components smaller than ``min_component_size`` become a single cluster.
    Larger ones are partitioned independently (explicit K is capped at the
    component size).  Ids are assigned component by component, in order of
    each component's lowest node.
    """
    if isinstance(graph, AdjacencyGraph):
        W, comps = graph.W, graph.components
    else:
        W = sp.csr_matrix(graph, dtype=float)
        comps = connected_components(W)
    W = sp.csr_matrix(W)
    members = [np.flatnonzero(comps == c) for c in range(int(comps.max()) + 1)]

    def solve(nodes):
        if nodes.size < max(min_component_size, 2):
            return np.zeros(nodes.size, dtype=np.int64), None
        sub = W[nodes][:, nodes]
        k = K if K == "auto" else min(int(K), nodes.size)
        part = spectral_partition(sub, k, max_clusters=max_clusters,
                                  lambda_floor=lambda_floor, eig_tol=eig_tol)
        return part.assignments, part.K

    if workers > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, members))
    else:
        results = [solve(nodes) for nodes in members]

    assignments = np.empty(W.shape[0], dtype=np.int64)
    chosen = {}
    offset = 0
    for c, (nodes, (local, k)) in enumerate(zip(members, results)):
        assignments[nodes] = local + offset
        offset += int(local.max()) + 1
        if k is not None:
            chosen[c] = k
    return Partition(assignments, offset, component_ids=comps.copy(), chosen_K=chosen)
