"""Model families, link functions, best-response indices, and their derivatives.

Every family maps a belief vector p into choice probabilities
F(alpha_i + social term), where the social term is switched off for isolated
nodes. The heterogeneous conformity family carries two penalties: beta_h for
playing above the local norm and beta_l = beta_h + delta_beta for playing
below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, ndtr

from .graph import InteractionMatrix, Network, sigma_profile

SQRT_2PI = math.sqrt(2.0 * math.pi)

FAMILY_TAGS = (
    "het_conformity",
    "hom_conformity",
    "spillover",
    "generalized",
    "aggregate_conformity",
    "linear_conformity",
)

LINK_TAGS = ("logistic", "standard_normal")


@dataclass(frozen=True)
class LinkFunction:
    """Distribution of the relative taste shock eta = eps(0) - eps(1)."""

    tag: str

    def __post_init__(self):
        if self.tag not in LINK_TAGS:
            raise ValueError(f"unknown link tag {self.tag!r}")

    def cdf(self, u):
        if self.tag == "logistic":
            return expit(u)
        return ndtr(u)

    def pdf(self, u):
        if self.tag == "logistic":
            f = expit(u)
            return f * (1.0 - f)
        u = np.asarray(u, dtype=np.float64)
        return np.exp(-0.5 * u * u) / SQRT_2PI

    def dpdf(self, u):
        """Derivative of the density."""
        if self.tag == "logistic":
            F = expit(u)
            return F * (1.0 - F) * (1.0 - 2.0 * F)
        u = np.asarray(u, dtype=np.float64)
        return -u * self.pdf(u)

    @property
    def max_density(self) -> float:
        return 0.25 if self.tag == "logistic" else 1.0 / SQRT_2PI

    @property
    def bound_threshold(self) -> float:
        """1 / max density; the certificate boundary for the conformity gauge."""
        return 4.0 if self.tag == "logistic" else SQRT_2PI

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.tag == "logistic":
            return rng.logistic(size=size)
        return rng.standard_normal(size=size)

    @classmethod
    def from_tag(cls, tag: str) -> "LinkFunction":
        return cls(tag=tag)


LOGISTIC = LinkFunction("logistic")
STANDARD_NORMAL = LinkFunction("standard_normal")


@dataclass(frozen=True)
class ModelFamily:
    """Tag plus family-specific peer coefficients.

    Only the generalized reduced form carries its own (beta1, beta2, beta3);
    all other families read (beta_h, delta_beta) from ``Parameters``. The
    aggregate family can weight peers by the row-normalized matrix
    (``weights="normalized"``) or by the raw adjacency (``weights="adjacency"``).
    """

    tag: str
    beta1: float | None = None
    beta2: float | None = None
    beta3: float | None = None
    weights: str = "normalized"

    def __post_init__(self):
        if self.tag not in FAMILY_TAGS:
            raise ValueError(f"unknown family tag {self.tag!r}")
        has_betas = any(b is not None for b in (self.beta1, self.beta2, self.beta3))
        if self.tag == "generalized":
            if None in (self.beta1, self.beta2, self.beta3):
                raise ValueError("generalized family requires beta1, beta2, beta3")
        elif has_betas:
            raise ValueError(f"family {self.tag!r} does not take beta1/beta2/beta3")
        if self.weights not in ("normalized", "adjacency"):
            raise ValueError(f"unknown weights option {self.weights!r}")
        if self.weights == "adjacency" and self.tag != "aggregate_conformity":
            raise ValueError("adjacency weights are only available for aggregate_conformity")

    @classmethod
    def het_conformity(cls) -> "ModelFamily":
        return cls(tag="het_conformity")

    @classmethod
    def hom_conformity(cls) -> "ModelFamily":
        return cls(tag="hom_conformity")

    @classmethod
    def spillover(cls) -> "ModelFamily":
        return cls(tag="spillover")

    @classmethod
    def generalized(cls, beta1: float, beta2: float, beta3: float) -> "ModelFamily":
        return cls(tag="generalized", beta1=float(beta1), beta2=float(beta2), beta3=float(beta3))

    @classmethod
    def aggregate_conformity(cls, weights: str = "normalized") -> "ModelFamily":
        return cls(tag="aggregate_conformity", weights=weights)

    @classmethod
    def linear_conformity(cls) -> "ModelFamily":
        return cls(tag="linear_conformity")


@dataclass(frozen=True)
class Parameters:
    """Structural parameter vector theta = (gamma0, gamma1, gamma2, peer terms).

    ``gamma0`` holds one fixed effect per network, ``gamma1``/``gamma2`` the
    own and contextual coefficients. ``beta_l`` is derived as
    beta_h + delta_beta, never stored.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    beta_h: float = 0.0
    delta_beta: float = 0.0
    family: ModelFamily = field(default_factory=ModelFamily.het_conformity)
    link: LinkFunction = LOGISTIC

    def __post_init__(self):
        for name in ("gamma0", "gamma1", "gamma2"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        object.__setattr__(self, "beta_h", float(self.beta_h))
        object.__setattr__(self, "delta_beta", float(self.delta_beta))
        if self.gamma1.shape != self.gamma2.shape:
            raise ValueError("gamma1 and gamma2 must have the same length")
        if self.family.tag == "hom_conformity" and self.delta_beta != 0.0:
            raise ValueError("hom_conformity fixes delta_beta = 0")

    @property
    def beta_l(self) -> float:
        return self.beta_h + self.delta_beta

    @property
    def n_networks(self) -> int:
        return self.gamma0.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.gamma1.shape[0]

    def replace(self, **changes) -> "Parameters":
        return replace(self, **changes)


@dataclass(frozen=True)
class CovariateBundle:
    """Per-node regressors z_i = (membership, own x_i, contextual xbar_i)."""

    membership: np.ndarray  # (n, M) one-hot network membership
    X: np.ndarray  # (n, K)
    Xbar: np.ndarray  # (n, K), equals G @ X

    def __post_init__(self):
        object.__setattr__(self, "membership", np.asarray(self.membership, dtype=np.float64))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "Xbar", np.asarray(self.Xbar, dtype=np.float64))

    @classmethod
    def build(cls, fe_index: int, n_networks: int, X: np.ndarray, G: InteractionMatrix) -> "CovariateBundle":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional (n, K)")
        n = X.shape[0]
        membership = np.zeros((n, n_networks))
        membership[:, fe_index] = 1.0
        return cls(membership=membership, X=X, Xbar=np.asarray(G.weights @ X))

    @property
    def n(self) -> int:
        return self.membership.shape[0]

    @property
    def fe_index(self) -> int:
        return int(np.argmax(self.membership[0])) if self.n else 0

    def validate(self, G: InteractionMatrix | None = None) -> None:
        if not np.allclose(self.membership.sum(axis=1), 1.0):
            raise ValueError("membership rows must be one-hot")
        if G is not None and not np.allclose(self.Xbar, np.asarray(G.weights @ self.X), atol=1e-12):
            raise ValueError("Xbar does not equal G @ X")


class Certificate(NamedTuple):
    bound: float
    satisfied: bool


def alpha(cov: CovariateBundle, params: Parameters) -> np.ndarray:
    """Non-strategic utility alpha_i = m_i' gamma0 + x_i' gamma1 + xbar_i' gamma2."""
    if cov.membership.shape[1] != params.n_networks:
        raise ValueError("membership width does not match gamma0 length")
    if cov.X.shape[1] != params.n_covariates:
        raise ValueError("covariate width does not match gamma1 length")
    out = cov.membership @ params.gamma0
    if params.n_covariates:
        out = out + cov.X @ params.gamma1 + cov.Xbar @ params.gamma2
    return out


def _peer_coefficients(params: Parameters) -> tuple:
    fam = params.family
    if fam.tag == "generalized":
        return (fam.beta1, fam.beta2, fam.beta3)
    if fam.tag == "hom_conformity":
        return (params.beta_h,)
    return (params.beta_h, params.delta_beta)


def _weight_matrix(params: Parameters, net: Network, G: InteractionMatrix):
    if params.family.tag == "aggregate_conformity" and params.family.weights == "adjacency":
        return net.adjacency
    return G.weights


def social_term(p, params: Parameters, net: Network, G: InteractionMatrix):
    """Family-specific social index, already multiplied by 1{d_i > 0}.

    ``p`` may be (n,) or (n, S); the output matches its shape.
    """
    p = np.asarray(p, dtype=np.float64)
    dpos = net.nonisolated()
    if p.ndim == 2:
        dpos = dpos[:, None]
    W = _weight_matrix(params, net, G)
    tag = params.family.tag
    bh, db = params.beta_h, params.delta_beta

    if tag == "het_conformity":
        pbar = G.weights @ p
        sig = sigma_profile(G.weights, p)
        return dpos * (bh * (pbar - 0.5) + 0.5 * db * sig)
    if tag == "hom_conformity":
        pbar = G.weights @ p
        return dpos * (bh * (pbar - 0.5))
    if tag == "spillover":
        pbar = G.weights @ p
        return dpos * ((2.0 * bh + db) * pbar - (bh + db))
    if tag == "generalized":
        b1, b2, b3 = params.family.beta1, params.family.beta2, params.family.beta3
        pbar = G.weights @ p
        sig = sigma_profile(G.weights, p)
        return dpos * (b1 * pbar + b2 + b3 * sig)
    if tag == "aggregate_conformity":
        wbar = W @ p
        return dpos * ((bh + 0.5 * db) * wbar - 0.5 * bh)
    if tag == "linear_conformity":
        pbar = G.weights @ p
        return dpos * ((2.0 * bh + db) * pbar - bh)
    raise ValueError(f"unknown family tag {tag!r}")


def linear_predictor(p, params: Parameters, net: Network, G: InteractionMatrix, cov: CovariateBundle):
    """Pre-link index alpha_i + social term."""
    a = alpha(cov, params)
    s = social_term(p, params, net, G)
    if np.ndim(s) == 2:
        a = a[:, None]
    return a + s


def best_response(p, params: Parameters, net: Network, G: InteractionMatrix, cov: CovariateBundle):
    """Map beliefs p into choice probabilities F(index). Isolated nodes get F(alpha)."""
    return params.link.cdf(linear_predictor(p, params, net, G, cov))


def index_jacobian(p, params: Parameters, net: Network, G: InteractionMatrix) -> np.ndarray:
    """Derivative of the pre-link index with respect to p (dense n x n)."""
    p = np.asarray(p, dtype=np.float64)
    Gd = np.asarray(G.weights.todense()) if sp.issparse(G.weights) else np.asarray(G.weights)
    dpos = net.nonisolated()[:, None]
    tag = params.family.tag
    bh, db = params.beta_h, params.delta_beta

    if tag in ("het_conformity", "generalized"):
        if tag == "het_conformity":
            slope, curve = bh, 0.5 * db
        else:
            slope, curve = params.family.beta1, params.family.beta3
        pbar = Gd @ p
        base = slope * Gd + curve * (2.0 * pbar[:, None] * Gd + (Gd * Gd) * (1.0 - 2.0 * p)[None, :])
        return dpos * base
    if tag == "hom_conformity":
        return dpos * (bh * Gd)
    if tag in ("spillover", "linear_conformity"):
        return dpos * ((2.0 * bh + db) * Gd)
    if tag == "aggregate_conformity":
        W = _weight_matrix(params, net, G)
        Wd = np.asarray(W.todense()) if sp.issparse(W) else np.asarray(W)
        return dpos * ((bh + 0.5 * db) * Wd)
    raise ValueError(f"unknown family tag {tag!r}")


def jacobian_wrt_p(p, params: Parameters, net: Network, G: InteractionMatrix, cov: CovariateBundle) -> np.ndarray:
    """Jacobian of the best response: diag(f(index)) times the index Jacobian."""
    f = params.link.pdf(linear_predictor(p, params, net, G, cov))
    return f[:, None] * index_jacobian(p, params, net, G)


def conformity_gauge(params: Parameters, weight_row_sum: float = 1.0) -> float:
    """Family-specific Lipschitz gauge; the certificate requires gauge < 1/max density."""
    tag = params.family.tag
    bh, db = params.beta_h, params.delta_beta
    if tag in ("het_conformity", "hom_conformity"):
        return abs(bh) + 1.5 * abs(db)
    if tag in ("spillover", "linear_conformity"):
        return abs(2.0 * bh + db)
    if tag == "aggregate_conformity":
        return 0.5 * abs(2.0 * bh + db) * weight_row_sum
    if tag == "generalized":
        return abs(params.family.beta1) + 3.0 * abs(params.family.beta3)
    raise ValueError(f"unknown family tag {tag!r}")


def contraction_bound(params: Parameters, link: LinkFunction | None = None, weight_row_sum: float = 1.0) -> Certificate:
    """Uniqueness certificate: gauge x max density, satisfied iff strictly below 1.

    For the conformity families the gauge is |beta_h| + 1.5 |delta_beta|.
    ``weight_row_sum`` rescales the bound when the aggregate family runs on the
    raw adjacency matrix (max row sum of the weight matrix).
    """
    link = link or params.link
    bound = conformity_gauge(params, weight_row_sum) / link.bound_threshold
    return Certificate(bound=float(bound), satisfied=bool(bound < 1.0))


def certificate_for(params: Parameters, net: Network | None = None) -> Certificate:
    """Certificate with the weight row sum resolved from the network when needed."""
    row_sum = 1.0
    if (
        params.family.tag == "aggregate_conformity"
        and params.family.weights == "adjacency"
        and net is not None
    ):
        row_sum = float(net.degree.max()) if net.n else 0.0
    return contraction_bound(params, params.link, weight_row_sum=row_sum)


def peer_columns(p, params_family: ModelFamily, net: Network, G: InteractionMatrix):
    """Design columns multiplying the peer coefficients, plus their names.

    The index of every family is linear in its peer coefficients; these are
    the corresponding regressors evaluated at beliefs p.
    """
    p = np.asarray(p, dtype=np.float64)
    dpos = net.nonisolated()
    tag = params_family.tag
    pbar = G.weights @ p
    if tag == "het_conformity":
        sig = sigma_profile(G.weights, p)
        return np.column_stack([dpos * (pbar - 0.5), 0.5 * sig * dpos]), ("beta_h", "delta_beta")
    if tag == "hom_conformity":
        return np.column_stack([dpos * (pbar - 0.5)]), ("beta",)
    if tag == "spillover":
        return np.column_stack([dpos * (2.0 * pbar - 1.0), dpos * (pbar - 1.0)]), ("beta_h", "delta_beta")
    if tag == "generalized":
        sig = sigma_profile(G.weights, p)
        return np.column_stack([dpos * pbar, dpos, dpos * sig]), ("beta1", "beta2", "beta3")
    if tag == "aggregate_conformity":
        W = net.adjacency if params_family.weights == "adjacency" else G.weights
        wbar = W @ p
        return np.column_stack([dpos * (wbar - 0.5), dpos * 0.5 * wbar]), ("beta_h", "delta_beta")
    if tag == "linear_conformity":
        return np.column_stack([dpos * (2.0 * pbar - 1.0), dpos * pbar]), ("beta_h", "delta_beta")
    raise ValueError(f"unknown family tag {tag!r}")


def peer_column_jacobians(p, params_family: ModelFamily, net: Network, G: InteractionMatrix):
    """Derivatives of each peer design column with respect to p (list of n x n).

    The index Jacobian equals the coefficient-weighted sum of these matrices.
    """
    p = np.asarray(p, dtype=np.float64)
    Gd = np.asarray(G.weights.todense()) if sp.issparse(G.weights) else np.asarray(G.weights)
    dpos = net.nonisolated()[:, None]
    tag = params_family.tag
    pbar = Gd @ p
    curve = dpos * (2.0 * pbar[:, None] * Gd + (Gd * Gd) * (1.0 - 2.0 * p)[None, :])
    base = dpos * Gd
    if tag == "het_conformity":
        return [base, 0.5 * curve]
    if tag == "hom_conformity":
        return [base]
    if tag == "spillover":
        return [2.0 * base, base]
    if tag == "generalized":
        return [base, np.zeros_like(base), curve]
    if tag == "aggregate_conformity":
        W = net.adjacency if params_family.weights == "adjacency" else G.weights
        Wd = np.asarray(W.todense()) if sp.issparse(W) else np.asarray(W)
        return [dpos * Wd, 0.5 * dpos * Wd]
    if tag == "linear_conformity":
        return [2.0 * base, base]
    raise ValueError(f"unknown family tag {tag!r}")


def regressor_matrix(p, net: Network, G: InteractionMatrix, cov: CovariateBundle) -> np.ndarray:
    """Canonical k_i rows (membership, x, xbar, norm term, sigma term).

    The norm term is 1{d_i>0}(pbar_i - 1/2) and the sigma term is half the
    quadratic form, so k_i' (gamma, beta_h, delta_beta) reproduces the
    heterogeneous conformity index.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[0] != cov.n:
        raise ValueError("belief vector length does not match node count")
    dpos = net.nonisolated()
    pbar = G.weights @ p
    sig = sigma_profile(G.weights, p)
    return np.column_stack([cov.membership, cov.X, cov.Xbar, dpos * (pbar - 0.5), 0.5 * sig])


def pm_one_coding_index(p, params: Parameters, net: Network, G: InteractionMatrix, cov: CovariateBundle):
    """Index implied by recoding the actions as {-1, 1} instead of {0, 1}.

    Kept as a diagnostic: with this coding the heterogeneous penalties enter
    only through beta_h + beta_l and an intercept-like shift, so they are not
    separately identified.
    """
    p = np.asarray(p, dtype=np.float64)
    dpos = net.nonisolated()
    pbar = G.weights @ p
    sig = sigma_profile(G.weights, p)
    bh, bl = params.beta_h, params.beta_l
    return (
        2.0 * alpha(cov, params)
        + dpos * (bh * (pbar - 0.5) + bl * (pbar + 0.5))
        + 0.5 * params.delta_beta * sig
    )
