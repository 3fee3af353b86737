"""k-nearest-neighbor adjacency graphs built from a normalized similarity matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

log = logging.getLogger(__name__)

_RANK_CHUNK = 1024


@dataclass
class AdjacencyGraph:
    """Union-symmetrized k-NN graph.

    ``W`` holds positive edge weights plus unit self-edges; ``edges`` is the
    selected (undirected, self-free) neighbor pattern, which can include
    pairs whose similarity is zero.
    """

    W: sp.csr_matrix
    k: int
    components: np.ndarray
    edges: sp.csr_matrix

    @property
    def M(self) -> int:
        return self.W.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.W.sum(axis=1)).ravel()

    def component_sets(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for node, c in enumerate(self.components):
            groups.setdefault(int(c), []).append(node)
        return [groups[c] for c in sorted(groups)]


def default_k(M: int) -> int:
    """ceil(ln M), at least 1 and at most M - 1."""
    if M < 2:
        raise ValueError(f"need at least 2 nodes to pick k, got M={M}")
    return min(M - 1, max(1, math.ceil(math.log(M))))


def neighbor_ranking(S_prime, depth: int) -> np.ndarray:
    """Per row, the ``depth`` other nodes in decreasing similarity.

    Ties go to the lower node index (stable sort on negated similarity).
    """
    S_prime = np.asarray(S_prime, dtype=float)
    M = S_prime.shape[0]
    depth = min(depth, M - 1)
    ranking = np.empty((M, depth), dtype=np.int64)
    for lo in range(0, M, _RANK_CHUNK):
        block = -S_prime[lo:lo + _RANK_CHUNK].copy()
        rows = np.arange(block.shape[0])
        block[rows, rows + lo] = np.inf
        ranking[lo:lo + block.shape[0]] = np.argsort(block, axis=1, kind="stable")[:, :depth]
    return ranking


def _edge_pattern(ranking: np.ndarray, k: int) -> sp.csr_matrix:
    M = ranking.shape[0]
    rows = np.repeat(np.arange(M), k)
    cols = ranking[:, :k].ravel()
    A = sp.coo_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(M, M)).tocsr()
    return (A + A.T).astype(bool).tocsr()


def _graph_from_pattern(S_prime: np.ndarray, pattern: sp.csr_matrix, k: int) -> AdjacencyGraph:
    M = S_prime.shape[0]
    P = pattern.tocoo()
    # read each pair from the upper triangle so W is exactly symmetric
    weights = S_prime[np.minimum(P.row, P.col), np.maximum(P.row, P.col)]
    keep = weights > 0
    off = sp.coo_matrix((weights[keep], (P.row[keep], P.col[keep])), shape=(M, M))
    W = (off + sp.identity(M, format="coo")).tocsr()
    W.sort_indices()
    return AdjacencyGraph(W, k, connected_components(W), pattern)


def knn_graph(S_prime, k: int) -> AdjacencyGraph:
    """Connect every node to its k most similar others; keep the union of both directions."""
    S_prime = np.asarray(S_prime, dtype=float)
    M = S_prime.shape[0]
    if not 1 <= k <= M - 1:
        raise ValueError(f"k must be in [1, {M - 1}], got {k}")
    return _graph_from_pattern(S_prime, _edge_pattern(neighbor_ranking(S_prime, k), k), k)


def connected_components(W) -> np.ndarray:
    """Component label per node over strictly positive off-diagonal weights.

    Labels are numbered in order of each component's lowest node index.
    """
    W = sp.csr_matrix(W)
    A = sp.csr_matrix(W - sp.diags(W.diagonal()))
    A.data = (A.data > 0).astype(np.int8)
    A.eliminate_zeros()
    _, labels = _cc(A, directed=False)
    return _canonical_labels(labels)


def _canonical_labels(labels) -> np.ndarray:
    mapping: dict[int, int] = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def _n_components(pattern: sp.csr_matrix, S_prime: np.ndarray) -> int:
    P = pattern.tocoo()
    keep = S_prime[P.row, P.col] > 0
    A = sp.coo_matrix((np.ones(keep.sum()), (P.row[keep], P.col[keep])), shape=S_prime.shape)
    return _cc(A.tocsr(), directed=False)[0]


def ensure_connectivity_k(S_prime, k0: int, k_max: int | None = None) -> tuple[int, bool]:
    """Smallest k >= k0 whose k-NN graph keeps every positive-similarity component whole.

    Returns ``(k, ok)``; ``ok`` is False when even ``k_max`` leaves a component
    split, in which case ``k_max`` is returned.
    """
    S_prime = np.asarray(S_prime, dtype=float)
    M = S_prime.shape[0]
    if k0 < 1:
        raise ValueError(f"k0 must be >= 1, got {k0}")
    k_max = M - 1 if k_max is None else min(k_max, M - 1)
    k0 = min(k0, k_max)
    target = connected_components(S_prime).max() + 1
    ranking = neighbor_ranking(S_prime, k_max)

    def joined(k):
        return _n_components(_edge_pattern(ranking, k), S_prime) == target

    # component count is non-increasing in k because the edge sets are nested
    if joined(k0):
        return k0, True
    if not joined(k_max):
        log.warning("k-NN graph still splits a similarity component at k_max=%d", k_max)
        return k_max, False
    lo, hi = k0, k_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if joined(mid):
            hi = mid
        else:
            lo = mid
    return hi, True


def write_edge_list(graph: AdjacencyGraph, names, fh) -> None:
    """TSV ``source<TAB>target<TAB>weight``, one line per undirected positive edge."""
    W = sp.triu(graph.W, k=1).tocoo()
    order = np.lexsort((W.col, W.row))
    for idx in order:
        fh.write(f"{names[W.row[idx]]}\t{names[W.col[idx]]}\t{float(W.data[idx])!r}\n")
