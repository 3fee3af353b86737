"""Coincidence matrices and the normalized pairwise-similarity matrix."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, MatrixError
from .ingest import EventWindow

SERVER_USAGE = "server-usage"
TEMPORAL = "temporal"


@dataclass
class CoincidenceMatrix:
    """Harvester-by-resource matrix H (rows: harvesters, columns: servers or time bins)."""

    kind: str
    entries: sp.csr_matrix
    row_meta: list[str]
    col_meta: list

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass
class SimilarityMatrix:
    S: np.ndarray
    S_prime: np.ndarray
    D_S: np.ndarray


def _counts(window: EventWindow, column_of):
    rows = np.fromiter((window.harvesters[ev.harvester_ip] for ev in window.events), dtype=np.int64)
    cols = np.fromiter((column_of(ev) for ev in window.events), dtype=np.int64)
    return rows, cols


def server_coincidence(window: EventWindow) -> CoincidenceMatrix:
    """h_ij = p_ij / (d_j * e_i), with d_j the month's email total through server j."""
    rows, cols = _counts(window, lambda ev: window.servers[ev.server_ip])
    P = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(window.M, window.N)
    ).tocsr()
    d = np.asarray(P.sum(axis=0)).ravel()
    e = np.asarray(window.addresses_acquired, dtype=float)
    H = sp.diags(1.0 / e) @ P @ sp.diags(1.0 / d)
    return CoincidenceMatrix(SERVER_USAGE, sp.csr_matrix(H), window.harvester_ips, window.server_ips)


def temporal_coincidence(window: EventWindow, bin_width: timedelta = timedelta(hours=1)) -> CoincidenceMatrix:
    """h_ij = s_ij / e_i over consecutive UTC bins covering the whole month."""
    width = int(bin_width.total_seconds())
    if width <= 0 or 86400 % width:
        raise ConfigError(f"bin width {bin_width} does not divide 24h evenly")
    start, end = window.month_bounds()
    n_bins = int((end - start).total_seconds()) // width
    rows, cols = _counts(window, lambda ev: int((ev.timestamp - start).total_seconds()) // width)
    Sc = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(window.M, n_bins)).tocsr()
    e = np.asarray(window.addresses_acquired, dtype=float)
    H = sp.csr_matrix(sp.diags(1.0 / e) @ Sc)
    bins = [start + j * timedelta(seconds=width) for j in range(n_bins)]
    return CoincidenceMatrix(TEMPORAL, H, window.harvester_ips, bins)


def coincidence(window: EventWindow, kind: str) -> CoincidenceMatrix:
    if kind == SERVER_USAGE:
        return server_coincidence(window)
    if kind == TEMPORAL:
        return temporal_coincidence(window)
    raise ConfigError(f"unknown similarity kind {kind!r}")


def similarity_from_coincidence(H) -> SimilarityMatrix:
    """S = H H^T and its cosine normalization S' = D_S^-1/2 S D_S^-1/2."""
    if isinstance(H, CoincidenceMatrix):
        names, H = H.row_meta, H.entries
    else:
        names = None
    if sp.issparse(H):
        S = np.asarray((H @ H.T).todense(), dtype=float)
    else:
        H = np.asarray(H, dtype=float)
        S = H @ H.T
    # BLAS may round (i, j) and (j, i) differently
    S = (S + S.T) / 2
    diag = S.diagonal().copy()
    zero = np.flatnonzero(diag <= 0)
    if zero.size:
        i = int(zero[0])
        who = names[i] if names is not None else f"row {i}"
        raise MatrixError(f"harvester {who} has an all-zero coincidence row")
    inv = 1.0 / np.sqrt(diag)
    S_prime = S * inv[:, None] * inv[None, :]
    np.fill_diagonal(S_prime, 1.0)
    return SimilarityMatrix(S, S_prime, diag)


def write_coo(matrix, path) -> None:
    """Write nonzero entries as ``i j value`` lines (0-based)."""
    M = sp.coo_matrix(matrix)
    order = np.lexsort((M.col, M.row))
    with open(path, "w", encoding="utf-8") as fh:
        for k in order:
            fh.write(f"{M.row[k]} {M.col[k]} {float(M.data[k])!r}\n")


def read_coo(path, shape=None) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            i, j, v = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    if shape is None:
        shape = (max(rows, default=-1) + 1, max(cols, default=-1) + 1)
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def dump_matrices(directory, H: CoincidenceMatrix, sim: SimilarityMatrix | None = None) -> None:
    """Dump H (and S') plus the row/column labels needed to read them back."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tag = "server" if H.kind == SERVER_USAGE else "temporal"
    write_coo(H.entries, out / f"H_{tag}.coo")
    (out / f"H_{tag}.rows.txt").write_text("".join(f"{r}\n" for r in H.row_meta), "utf-8")
    cols = [c.strftime("%Y-%m-%dT%H:%M:%SZ") if hasattr(c, "strftime") else str(c) for c in H.col_meta]
    (out / f"H_{tag}.cols.txt").write_text("".join(f"{c}\n" for c in cols), "utf-8")
    if sim is not None:
        write_coo(sim.S_prime, out / f"S_prime_{tag}.coo")


def load_coincidence_dump(directory, kind: str = TEMPORAL) -> CoincidenceMatrix:
    out = Path(directory)
    tag = "server" if kind == SERVER_USAGE else "temporal"
    rows = (out / f"H_{tag}.rows.txt").read_text("utf-8").split()
    cols = (out / f"H_{tag}.cols.txt").read_text("utf-8").split()
    H = read_coo(out / f"H_{tag}.coo", shape=(len(rows), len(cols)))
    return CoincidenceMatrix(kind, H, rows, cols)
