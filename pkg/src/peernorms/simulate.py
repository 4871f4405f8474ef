"""Synthetic many-network data from the structural generating process.

Random streams are pre-split per network (and per purpose) from the root
seed, so growing the number of networks never reshuffles earlier draws and
parallel generation matches serial generation bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, build_dataset
from .exceptions import DataError
from .graph import Network
from .model import LOGISTIC, LinkFunction, ModelFamily, Parameters, linear_predictor
from .equilibrium import solve_fixed_point

_STREAM_GRAPH = 0
_STREAM_COVARIATES = 1
_STREAM_OUTCOMES = 2
_STREAM_FIXED_EFFECTS = 3
_STREAM_ISOLATION = 4


def _network_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


@dataclass(frozen=True)
class EdgeRule:
    """Random graph rule: independent directed links or a fixed out-degree."""

    kind: str
    p_link: float | None = None
    out_degree: int | None = None

    def __post_init__(self):
        if self.kind not in ("erdos_renyi", "fixed_out_degree"):
            raise ValueError(f"unknown edge rule {self.kind!r}")
        if self.kind == "erdos_renyi" and self.p_link is None:
            raise ValueError("erdos_renyi requires p_link")
        if self.kind == "fixed_out_degree" and self.out_degree is None:
            raise ValueError("fixed_out_degree requires out_degree")

    @classmethod
    def erdos_renyi(cls, p_link: float) -> "EdgeRule":
        return cls(kind="erdos_renyi", p_link=float(p_link))

    @classmethod
    def fixed_out_degree(cls, d: int) -> "EdgeRule":
        return cls(kind="fixed_out_degree", out_degree=int(d))


def _draw_adjacency(rule: EdgeRule, n: int, rng: np.random.Generator) -> np.ndarray:
    if rule.kind == "erdos_renyi":
        adj = (rng.random((n, n)) < rule.p_link).astype(np.float64)
        np.fill_diagonal(adj, 0.0)
        return adj
    d = rule.out_degree
    if d >= n:
        raise DataError(f"infeasible degree request: out_degree {d} >= n {n}")
    adj = np.zeros((n, n))
    for i in range(n):
        others = np.delete(np.arange(n), i)
        adj[i, rng.choice(others, size=d, replace=False)] = 1.0
    return adj


def generate_networks(
    n_networks: int,
    nodes_per,
    edge_rule: EdgeRule,
    seed: int,
    isolate_frac: float = 0.0,
) -> list:
    """Draw reproducible random networks.

    ``nodes_per`` is either a fixed size or an inclusive (low, high) range.
    ``isolate_frac`` force-isolates a random share of nodes per network
    (all their in- and out-links removed), which keeps the standalone
    non-isolation regressor identified next to network fixed effects.
    """
    if n_networks < 1:
        raise DataError("n_networks must be at least 1")
    networks = []
    for m in range(n_networks):
        rng = _network_rng(seed, _STREAM_GRAPH, m)
        if isinstance(nodes_per, (tuple, list)):
            lo, hi = nodes_per
            n = int(rng.integers(lo, hi + 1))
        else:
            n = int(nodes_per)
        if n < 1:
            raise DataError("network size must be positive")
        adj = _draw_adjacency(edge_rule, n, rng)
        if isolate_frac > 0.0:
            iso_rng = _network_rng(seed, _STREAM_ISOLATION, m)
            k = int(round(isolate_frac * n))
            if k:
                idx = iso_rng.choice(n, size=k, replace=False)
                adj[idx, :] = 0.0
                adj[:, idx] = 0.0
        networks.append(Network(network_id=f"net{m:03d}", adjacency=adj))
    if not any(net.degree.max() >= 2 for net in networks if net.n):
        raise DataError(
            "no node with out-degree >= 2 in any network; "
            "the sigma regressor is collinear with the norm regressor"
        )
    return networks


def default_covariates(networks, seed: int, x1_scale: float = 3.0, x2_rate: float = 5.0):
    """One centered Gaussian column and one Poisson count column.

    The scales are package defaults chosen so equilibrium probabilities spread
    over most of (0, 1), which keeps the norm and curvature regressors apart.
    """
    X_list = []
    for m, net in enumerate(networks):
        rng = _network_rng(seed, _STREAM_COVARIATES, m)
        X_list.append(
            np.column_stack(
                [
                    x1_scale * rng.standard_normal(net.n),
                    rng.poisson(x2_rate, net.n).astype(np.float64),
                ]
            )
        )
    return X_list, ("x1", "x2")


def simulate_outcomes(
    params: Parameters,
    dataset: Dataset,
    seed: int,
    mechanism: str = "threshold",
    tol: float = 1e-10,
) -> tuple:
    """Solve the equilibrium and draw binary actions.

    ``threshold`` draws the taste shock eta and applies the decision rule
    y_i = 1{index_i - eta_i > 0}; ``bernoulli`` flips coins at the solved
    probabilities. The two mechanisms are distributionally identical and the
    second exists as a test oracle. Returns (pooled outcomes, profiles).
    """
    if mechanism not in ("threshold", "bernoulli"):
        raise ValueError(f"unknown mechanism {mechanism!r}")
    ys, profiles = [], []
    for m, block in enumerate(dataset.blocks):
        prof = solve_fixed_point(params, block.net, block.G, block.cov, tol=tol, auto_verify=False)
        if not prof.contraction_certificate.satisfied:
            warnings.warn(
                f"network {block.net.network_id}: simulating without a contraction "
                f"certificate (bound {prof.contraction_certificate.bound:.3f})",
                stacklevel=2,
            )
        rng = _network_rng(seed, _STREAM_OUTCOMES, m)
        if mechanism == "threshold":
            index = linear_predictor(prof.p_star, params, block.net, block.G, block.cov)
            eta = params.link.sample(rng, block.n)
            y = (index - eta > 0).astype(np.float64)
        else:
            y = (rng.random(block.n) < prof.p_star).astype(np.float64)
        ys.append(y)
        profiles.append(prof)
    pooled = np.concatenate(ys) if ys else np.empty(0)
    return pooled, profiles


def attach_outcomes(dataset: Dataset, pooled_y: np.ndarray) -> None:
    for block, y in zip(dataset.blocks, dataset.split(pooled_y)):
        block.y = np.asarray(y, dtype=np.float64)


@dataclass(frozen=True)
class SimulationConfig:
    """Full generating-process description for one synthetic dataset."""

    n_networks: int = 20
    nodes_per: object = 50  # int or (low, high)
    edge_rule: EdgeRule = field(default_factory=lambda: EdgeRule.erdos_renyi(0.07))
    seed: int = 0
    family: ModelFamily = field(default_factory=ModelFamily.het_conformity)
    link: LinkFunction = LOGISTIC
    beta_h: float = 1.0
    beta_l: float = 2.0
    gamma0: object = (-2.9, -2.3)  # scalar, per-network sequence, or (low, high) draw
    gamma1: tuple = (-0.4, 0.2)
    gamma2: tuple = (0.5, 0.3)
    x1_scale: float = 3.0
    x2_rate: float = 5.0
    isolate_frac: float = 0.0
    mechanism: str = "threshold"

    def peer_parameters(self, n_networks: int, gamma0: np.ndarray) -> Parameters:
        return Parameters(
            gamma0=gamma0,
            gamma1=np.asarray(self.gamma1, dtype=np.float64),
            gamma2=np.asarray(self.gamma2, dtype=np.float64),
            beta_h=self.beta_h,
            delta_beta=self.beta_l - self.beta_h,
            family=self.family,
            link=self.link,
        )


@dataclass
class SyntheticDataset:
    """Dataset plus the truth that generated it."""

    dataset: Dataset
    true_params: Parameters
    seed: int
    profiles: list = field(default_factory=list)


def _resolve_gamma0(spec, n_networks: int, seed: int) -> np.ndarray:
    if isinstance(spec, (int, float)):
        return np.full(n_networks, float(spec))
    spec = tuple(spec)
    if len(spec) == 2 and n_networks != 2:
        lo, hi = spec
        rng = _network_rng(seed, _STREAM_FIXED_EFFECTS, 0)
        return rng.uniform(lo, hi, size=n_networks)
    if len(spec) != n_networks:
        raise DataError("gamma0 sequence length must match the number of networks")
    return np.asarray(spec, dtype=np.float64)


def generate_dataset(config: SimulationConfig) -> SyntheticDataset:
    """Networks, covariates, equilibrium, and outcomes in one call."""
    networks = generate_networks(
        config.n_networks, config.nodes_per, config.edge_rule, config.seed, config.isolate_frac
    )
    X_list, x_names = default_covariates(
        networks, config.seed, x1_scale=config.x1_scale, x2_rate=config.x2_rate
    )
    dataset = build_dataset(networks, X_list, x_names)
    gamma0 = _resolve_gamma0(config.gamma0, config.n_networks, config.seed)
    params = config.peer_parameters(config.n_networks, gamma0)
    y, profiles = simulate_outcomes(params, dataset, config.seed, mechanism=config.mechanism)
    attach_outcomes(dataset, y)
    return SyntheticDataset(dataset=dataset, true_params=params, seed=config.seed, profiles=profiles)
