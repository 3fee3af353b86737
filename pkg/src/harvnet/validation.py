"""Cluster validation: pair-counting indices, phishing purity, temporal coherence, IP prefixes."""

from __future__ import annotations

import ipaddress
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairCounts:
    a: int  # same label, same cluster
    b: int  # same label, different cluster
    c: int  # different label, same cluster
    d: int  # different label, different cluster

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass
class ClusterSummary:
    cluster_id: int
    size: int
    phisher_count: int
    majority_label: str
    purity: float


@dataclass
class ValidationReport:
    rand: float | None = None
    adjusted_rand: float | None = None
    clusters: list[ClusterSummary] = field(default_factory=list)
    prefix_groups: dict[str, list[str]] = field(default_factory=dict)
    rho_avg: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rand": self.rand,
            "adjusted_rand": self.adjusted_rand,
            "clusters": [asdict(c) for c in self.clusters],
            "prefix_groups": self.prefix_groups,
            "rho_avg": self.rho_avg,
        }


def _check(labels, clusters) -> tuple[list, list]:
    labels, clusters = list(labels), list(clusters)
    if len(labels) != len(clusters):
        raise ValueError(f"label count {len(labels)} != cluster count {len(clusters)}")
    if len(labels) < 2:
        raise ValueError("need at least two nodes for pair counting")
    return labels, clusters


def pair_counts_bruteforce(labels, clusters) -> PairCounts:
    """O(M^2) enumeration of all unordered pairs."""
    labels, clusters = _check(labels, clusters)
    a = b = c = d = 0
    for i, j in combinations(range(len(labels)), 2):
        same_label = labels[i] == labels[j]
        same_cluster = clusters[i] == clusters[j]
        if same_label and same_cluster:
            a += 1
        elif same_label:
            b += 1
        elif same_cluster:
            c += 1
        else:
            d += 1
    return PairCounts(a, b, c, d)


def contingency(labels, clusters) -> tuple[Counter, Counter, Counter]:
    """Joint, row (label) and column (cluster) counts."""
    labels, clusters = _check(labels, clusters)
    joint = Counter(zip(labels, clusters))
    return joint, Counter(labels), Counter(clusters)


def _pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_counts(labels, clusters) -> PairCounts:
    """Pair counts from the contingency table."""
    joint, rows, cols = contingency(labels, clusters)
    n = sum(rows.values())
    a = sum(_pairs(v) for v in joint.values())
    same_label = sum(_pairs(v) for v in rows.values())
    same_cluster = sum(_pairs(v) for v in cols.values())
    b = same_label - a
    c = same_cluster - a
    d = _pairs(n) - a - b - c
    return PairCounts(a, b, c, d)


def rand_index_exact(counts: PairCounts) -> Fraction:
    if counts.total == 0:
        raise ValueError("rand index needs at least two nodes")
    return Fraction(counts.a + counts.d, counts.total)


def rand_index(counts: PairCounts) -> float:
    return float(rand_index_exact(counts))


def adjusted_rand_index_exact(labels, clusters) -> Fraction:
    joint, rows, cols = contingency(labels, clusters)
    n = sum(rows.values())
    index = sum(_pairs(v) for v in joint.values())
    sum_rows = sum(_pairs(v) for v in rows.values())
    sum_cols = sum(_pairs(v) for v in cols.values())
    expected = Fraction(sum_rows * sum_cols, _pairs(n))
    maximum = Fraction(sum_rows + sum_cols, 2)
    if maximum == expected:
        # both partitions trivial (all-in-one or all singletons)
        return Fraction(1)
    return (index - expected) / (maximum - expected)


def adjusted_rand_index(labels, clusters) -> float:
    return float(adjusted_rand_index_exact(labels, clusters))


def temporal_correlation_group(H, group) -> float:
    """Mean Pearson correlation over distinct pairs of rows in ``group``.

    Rows with zero variance have no defined correlation; they are dropped
    with a warning.
    """
    rows = sorted(set(int(g) for g in group))
    if len(rows) < 2:
        raise ValueError("a group needs at least two harvesters")
    entries = H.entries if hasattr(H, "entries") else H
    X = entries[rows].toarray() if sp.issparse(entries) else np.asarray(entries, dtype=float)[rows]
    var = X.var(axis=1)
    flat = var <= 0
    if flat.any():
        log.warning("dropping %d zero-variance rows from correlation group", int(flat.sum()))
        X = X[~flat]
    if X.shape[0] < 2:
        raise ValueError("fewer than two harvesters with nonzero variance in group")
    R = np.corrcoef(X)
    iu = np.triu_indices(X.shape[0], k=1)
    return float(R[iu].mean())


def prefix_key(ip: str, prefix_bits: int = 24) -> str:
    """Network label like ``208.66.195/24`` or ``208.66.192/22``."""
    net = ipaddress.IPv4Network(f"{ip}/{prefix_bits}", strict=False)
    octets = str(net.network_address).split(".")[: max(1, math.ceil(prefix_bits / 8))]
    return f"{'.'.join(octets)}/{prefix_bits}"


def ip_prefix_groups(harvester_ips, prefix_bits: int = 24) -> dict[str, list[str]]:
    if not 0 < prefix_bits <= 32:
        raise ValueError(f"prefix_bits must be in (0, 32], got {prefix_bits}")
    groups: dict[str, list[str]] = {}
    for ip in harvester_ips:
        groups.setdefault(prefix_key(ip, prefix_bits), []).append(ip)
    return dict(sorted(groups.items(), key=lambda kv: _net(kv[0])))


def _net(key: str) -> ipaddress.IPv4Network:
    head, bits = key.split("/")
    octets = head.split(".")
    octets += ["0"] * (4 - len(octets))
    return ipaddress.IPv4Network(f"{'.'.join(octets)}/{bits}")


def cluster_phishing_purity(assignments, phisher_flags) -> list[ClusterSummary]:
    """Per cluster: size, phisher count, majority label (ties are non-phishing), purity."""
    assignments = np.asarray(assignments)
    flags = np.asarray(phisher_flags, dtype=bool)
    if assignments.shape != flags.shape:
        raise ValueError("labels must cover every clustered node")
    out = []
    for cid in sorted(set(assignments.tolist())):
        members = flags[assignments == cid]
        size = int(members.size)
        phishers = int(members.sum())
        majority = "phishing" if phishers > size - phishers else "non-phishing"
        purity = max(phishers, size - phishers) / size
        out.append(ClusterSummary(int(cid), size, phishers, majority, purity))
    return out
