"""End-to-end run: window -> coincidence -> similarity -> k-NN graph -> partition -> report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import graph as graphmod
from . import spectral
from .ingest import EventWindow, window_by_month
from .phishing import PhishingProfile, phisher_labels, phishing_profiles
from .similarity import (
    SERVER_USAGE,
    CoincidenceMatrix,
    SimilarityMatrix,
    coincidence,
    similarity_from_coincidence,
    temporal_coincidence,
)
from .validation import (
    ValidationReport,
    adjusted_rand_index,
    cluster_phishing_purity,
    ip_prefix_groups,
    pair_counts,
    rand_index,
    temporal_correlation_group,
)

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    similarity: str = SERVER_USAGE
    month: str | None = None
    k: int | str = "auto"
    K: int | str = "auto"
    keywords: str | None = None
    min_component_size: int = spectral.MIN_COMPONENT_SIZE
    lambda_floor: float = spectral.LAMBDA_FLOOR
    eig_tol: float = spectral.EIG_TOL
    max_clusters: int = spectral.MAX_CLUSTERS
    prefix_bits: int = 24
    threads: int = 1
    out: str = "out"
    dump_matrices: str | None = None
    seed: int = 0


@dataclass
class PipelineResult:
    window: EventWindow
    H: CoincidenceMatrix
    similarity: SimilarityMatrix
    graph: graphmod.AdjacencyGraph | None
    partition: spectral.Partition
    k_connected: bool = True
    profiles: list[PhishingProfile] = field(default_factory=list)

    @property
    def harvester_ips(self) -> list[str]:
        return self.window.harvester_ips


def build_graph(S_prime, k="auto") -> tuple[graphmod.AdjacencyGraph, bool]:
    """k-NN graph with k grown until no positive-similarity component is split."""
    M = S_prime.shape[0]
    k0 = graphmod.default_k(M) if k == "auto" else min(int(k), M - 1)
    k_final, ok = graphmod.ensure_connectivity_k(S_prime, k0, M - 1)
    return graphmod.knn_graph(S_prime, k_final), ok


def cluster_window(window: EventWindow, config: PipelineConfig, keywords=None) -> PipelineResult:
    with threadpool_limits(limits=max(1, int(config.threads))):
        H = coincidence(window, config.similarity)
        sim = similarity_from_coincidence(H)
        if window.M < 2:
            graph, ok = None, True
            partition = spectral.Partition(np.zeros(window.M, dtype=np.int64), 1,
                                           component_ids=np.zeros(window.M, dtype=np.int64))
        else:
            graph, ok = build_graph(sim.S_prime, config.k)
            partition = spectral.cluster(
                graph, config.K, config.min_component_size,
                max_clusters=config.max_clusters, lambda_floor=config.lambda_floor,
                eig_tol=config.eig_tol, workers=config.threads,
            )
    profiles = phishing_profiles(window, keywords) if keywords else []
    return PipelineResult(window, H, sim, graph, partition, ok, profiles)


def run(events, config: PipelineConfig, keywords=None) -> PipelineResult:
    return cluster_window(window_by_month(events, config.month), config, keywords)


def group_correlations(H_temporal, groups: dict[str, list[int]]) -> dict[str, float]:
    out = {}
    for name, rows in groups.items():
        if len(rows) < 2:
            continue
        try:
            out[name] = temporal_correlation_group(H_temporal, rows)
        except ValueError as exc:
            log.warning("no correlation for group %s: %s", name, exc)
    return out


def validation_report(assignments, harvester_ips, labels=None, phisher_flags=None,
                      H_temporal=None, extra_groups=None, prefix_bits: int = 24) -> ValidationReport:
    """Assemble a report; each section is filled only when its inputs are given.

    ``extra_groups`` maps a name to harvester IPs; /24 (or ``prefix_bits``)
    groups with two or more members are always added for the correlation
    section when a temporal matrix is supplied.
    """
    report = ValidationReport()
    assignments = np.asarray(assignments)
    if labels is not None and len(assignments) >= 2:
        report.rand = rand_index(pair_counts(labels, assignments))
        report.adjusted_rand = adjusted_rand_index(labels, assignments)
    if phisher_flags is not None:
        report.clusters = cluster_phishing_purity(assignments, phisher_flags)
    report.prefix_groups = ip_prefix_groups(harvester_ips, prefix_bits)
    if H_temporal is not None:
        row_of = {ip: i for i, ip in enumerate(H_temporal.row_meta)}
        groups = {}
        for name, members in (extra_groups or {}).items():
            groups[name] = [row_of[ip] for ip in members if ip in row_of]
        for prefix, members in report.prefix_groups.items():
            if len(members) >= 2:
                groups[f"prefix:{prefix}"] = [row_of[ip] for ip in members if ip in row_of]
        report.rho_avg = group_correlations(H_temporal, groups)
    return report


def report_for_result(result: PipelineResult, prefix_bits: int = 24) -> ValidationReport:
    """Validation against keyword-derived phisher labels, as for an unlabeled log."""
    flags = phisher_labels(result.profiles) if result.profiles else None
    H_t = result.H if result.H.kind != SERVER_USAGE else temporal_coincidence(result.window)
    return validation_report(
        result.partition.assignments, result.harvester_ips,
        labels=flags, phisher_flags=flags, H_temporal=H_t, prefix_bits=prefix_bits,
    )

