"""Pooled many-network dataset container used by simulation and estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .graph import InteractionMatrix, Network, row_normalize
from .model import CovariateBundle


@dataclass
class NetworkBlock:
    """One network with its weights, covariates, and (optionally) outcomes."""

    net: Network
    G: InteractionMatrix
    cov: CovariateBundle
    y: np.ndarray | None = None
    node_ids: list = field(default_factory=list)

    def __post_init__(self):
        if not self.node_ids:
            self.node_ids = [str(i) for i in range(self.net.n)]
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.shape[0] != self.net.n:
                raise DataError(f"network {self.net.network_id}: outcome length mismatch")
            if not np.all((self.y == 0) | (self.y == 1)):
                raise DataError(f"network {self.net.network_id}: outcomes must be 0 or 1")

    @property
    def n(self) -> int:
        return self.net.n


@dataclass
class Dataset:
    """Blocks of per-network data sharing one covariate layout."""

    blocks: list
    x_names: tuple = ()

    def __post_init__(self):
        self.x_names = tuple(self.x_names)
        for block in self.blocks:
            if block.cov.X.shape[1] != len(self.x_names):
                raise DataError("covariate width does not match x_names")

    @property
    def n_networks(self) -> int:
        return len(self.blocks)

    @property
    def n_covariates(self) -> int:
        return len(self.x_names)

    @property
    def n_total(self) -> int:
        return sum(b.n for b in self.blocks)

    @property
    def network_ids(self) -> list:
        return [b.net.network_id for b in self.blocks]

    @property
    def has_outcomes(self) -> bool:
        return all(b.y is not None for b in self.blocks)

    def block_slices(self) -> list:
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.n))
            start += b.n
        return out

    def pooled_y(self) -> np.ndarray:
        if not self.has_outcomes:
            raise DataError("dataset has no outcomes")
        return np.concatenate([b.y for b in self.blocks]) if self.blocks else np.empty(0)

    def split(self, pooled: np.ndarray) -> list:
        return [np.asarray(pooled)[s] for s in self.block_slices()]

    def n_nonisolated(self) -> int:
        return int(sum((b.net.degree > 0).sum() for b in self.blocks))


def make_block(
    net: Network,
    X: np.ndarray,
    fe_index: int,
    n_networks: int,
    y: np.ndarray | None = None,
    node_ids: list | None = None,
) -> NetworkBlock:
    """Assemble a block, computing row-normalized weights and contextual averages."""
    G = row_normalize(net)
    cov = CovariateBundle.build(fe_index=fe_index, n_networks=n_networks, X=X, G=G)
    return NetworkBlock(net=net, G=G, cov=cov, y=y, node_ids=node_ids or [])


def build_dataset(networks, X_list, x_names, y_list=None, node_ids_list=None) -> Dataset:
    if y_list is None:
        y_list = [None] * len(networks)
    if node_ids_list is None:
        node_ids_list = [None] * len(networks)
    blocks = [
        make_block(net, X, m, len(networks), y=y, node_ids=ids)
        for m, (net, X, y, ids) in enumerate(zip(networks, X_list, y_list, node_ids_list))
    ]
    return Dataset(blocks=blocks, x_names=tuple(x_names))
