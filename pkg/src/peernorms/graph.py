"""Interaction structure: adjacency matrices, degrees, row-normalized weights.

Per-network matrices are dense below ``DENSE_NODE_LIMIT`` nodes and CSR sparse
above it. All operations are pure functions over immutable inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .exceptions import DataError

DENSE_NODE_LIMIT = 2000


def is_sparse(mat) -> bool:
    return sp.issparse(mat)


def to_dense(mat) -> np.ndarray:
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


@dataclass(frozen=True)
class Network:
    """Directed binary interaction graph for one sub-population.

    ``adjacency`` is n x n with entries in {0, 1} and a zero diagonal
    (self-influence is not allowed); ``degree`` holds out-degrees, i.e. the
    row sums of the adjacency matrix.
    """

    network_id: str
    adjacency: object  # ndarray or scipy CSR
    degree: np.ndarray = field(default=None)

    def __post_init__(self):
        adj = self.adjacency
        if not sp.issparse(adj):
            adj = np.asarray(adj)
            object.__setattr__(self, "adjacency", adj)
        deg = self.degree
        if deg is None:
            deg = np.asarray(row_sums(adj))
            object.__setattr__(self, "degree", deg.astype(np.int64))
        else:
            object.__setattr__(self, "degree", np.asarray(deg, dtype=np.int64))

    @classmethod
    def from_edges(cls, network_id: str, n: int, edges, symmetrize: bool = False) -> "Network":
        """Build a network from (source, target) index pairs.

        Self-nominations are dropped with a warning; duplicate edges collapse
        to a single link.
        """
        edges = list(edges)
        kept = [(s, t) for s, t in edges if s != t]
        if len(kept) < len(edges):
            warnings.warn(
                f"network {network_id}: dropped {len(edges) - len(kept)} self-nomination(s)",
                stacklevel=2,
            )
        if n > DENSE_NODE_LIMIT:
            if kept:
                rows, cols = zip(*kept)
            else:
                rows, cols = (), ()
            data = np.ones(len(kept), dtype=np.float64)
            adj = sp.csr_array((data, (rows, cols)), shape=(n, n))
            if symmetrize:
                adj = adj + adj.T
            adj.data = np.minimum(adj.data, 1.0)
            adj.eliminate_zeros()
        else:
            adj = np.zeros((n, n), dtype=np.float64)
            for s, t in kept:
                adj[s, t] = 1.0
            if symmetrize:
                adj = np.maximum(adj, adj.T)
        return cls(network_id=network_id, adjacency=adj)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def nonisolated(self) -> np.ndarray:
        """Indicator 1{d_i > 0} as a float vector."""
        return (self.degree > 0).astype(np.float64)

    def validate(self) -> None:
        adj = self.adjacency
        diag = adj.diagonal() if sp.issparse(adj) else np.diagonal(adj)
        if np.any(diag != 0):
            raise DataError(f"network {self.network_id}: nonzero diagonal in adjacency")
        vals = adj.data if sp.issparse(adj) else np.asarray(adj).ravel()
        if vals.size and not np.all((vals == 0) | (vals == 1)):
            raise DataError(f"network {self.network_id}: adjacency entries must be 0 or 1")
        if not np.array_equal(self.degree, np.asarray(row_sums(adj), dtype=np.int64)):
            raise DataError(f"network {self.network_id}: degree vector does not match row sums")


@dataclass(frozen=True)
class InteractionMatrix:
    """Row-normalized interaction weights g_ij = a_ij / d_i (zero rows for isolates)."""

    weights: object  # ndarray or scipy CSR

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def validate(self, net: Network | None = None) -> None:
        w = self.weights
        vals = w.data if sp.issparse(w) else np.asarray(w).ravel()
        if vals.size and np.any(vals < 0):
            raise DataError("interaction weights must be nonnegative")
        sums = np.asarray(row_sums(w))
        bad = ~(np.isclose(sums, 1.0, atol=1e-12) | (sums == 0.0))
        if np.any(bad):
            raise DataError("interaction rows must sum to 1 (or 0 for isolated nodes)")
        if net is not None:
            support = to_dense(w) > 0
            adj = to_dense(net.adjacency) > 0
            if np.any(support & ~adj):
                raise DataError("positive weight outside the adjacency support")


class TriadSummary(NamedTuple):
    indicator: np.ndarray  # per-node {0,1}: starts an intransitive triad
    count: int  # ordered triples i -> j -> k with no i -> k


def row_sums(mat) -> np.ndarray:
    if sp.issparse(mat):
        return np.asarray(mat.sum(axis=1)).ravel()
    return np.asarray(mat).sum(axis=1)


def row_normalize(net: Network) -> InteractionMatrix:
    """Divide each row of the adjacency matrix by the out-degree.

    Rows of isolated nodes stay all-zero instead of being dropped, so the
    non-isolation indicator can switch the whole social term off downstream.
    """
    deg = net.degree.astype(np.float64)
    inv = np.zeros_like(deg)
    np.divide(1.0, deg, out=inv, where=deg > 0)
    adj = net.adjacency
    if sp.issparse(adj):
        weights = sp.diags_array(inv) @ adj
        weights = sp.csr_array(weights)
    else:
        weights = np.asarray(adj, dtype=np.float64) * inv[:, None]
    return InteractionMatrix(weights=weights)


def intransitive_start_indicator(net: Network) -> TriadSummary:
    """Flag nodes that start an intransitive triad i -> j -> k with i -/-> k.

    Also returns the number of such ordered triples in the network.
    """
    adj = net.adjacency
    if sp.issparse(adj):
        a = sp.csr_array(adj)
        two_hop = (a @ a).tocsr()
        n = a.shape[0]
        indicator = np.zeros(n, dtype=np.int8)
        count = 0
        direct = [set(a.indices[a.indptr[i]:a.indptr[i + 1]]) for i in range(n)]
        for i in range(n):
            row = two_hop
            start, stop = row.indptr[i], row.indptr[i + 1]
            for k, paths in zip(row.indices[start:stop], row.data[start:stop]):
                if k != i and k not in direct[i]:
                    count += int(paths)
                    indicator[i] = 1
        return TriadSummary(indicator=indicator, count=count)

    a = np.asarray(adj)
    two_hop = a @ a
    open_pair = (a == 0)
    np.fill_diagonal(open_pair, False)
    paths = two_hop * open_pair
    return TriadSummary(
        indicator=(paths.sum(axis=1) > 0).astype(np.int8),
        count=int(paths.sum()),
    )


def sigma_quadratic_form(g_row: np.ndarray, p: np.ndarray) -> float:
    """Quadratic form g_i' (p p' + diag(p o (1 - p))) g_i for one node.

    Equals pbar_i^2 + sum_j g_ij^2 p_j (1 - p_j); the second moment of the
    node's expected norm under independent Bernoulli plays.
    """
    g_row = np.asarray(g_row, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if g_row.shape != p.shape or g_row.ndim != 1:
        raise ValueError(f"dimension mismatch: g_row {g_row.shape} vs p {p.shape}")
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError("probabilities must lie in [0, 1]")
    pbar = g_row @ p
    return float(pbar * pbar + (g_row * g_row) @ (p * (1.0 - p)))


def sigma_profile(weights, p):
    """Vector of sigma_quadratic_form values for every row of a weight matrix.

    ``p`` may be a vector or an (n, S) matrix of belief columns.
    """
    pbar = weights @ p
    if sp.issparse(weights):
        w2 = weights.multiply(weights)
    else:
        w2 = weights * weights
    return pbar * pbar + w2 @ (p * (1.0 - p))
