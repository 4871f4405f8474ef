"""Fixed-point solver for the belief equilibrium, with a uniqueness certificate.

Plain Picard iteration: the certificate guarantees the best-response map is a
contraction in the sup norm, so convergence is geometric and damping is only
needed for uncertified parameter values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import CertificateError, ConvergenceError
from .graph import InteractionMatrix, Network
from .model import (
    Certificate,
    CovariateBundle,
    Parameters,
    alpha,
    best_response,
    certificate_for,
)


class UniquenessCheck(NamedTuple):
    agree: bool
    max_spread: float


@dataclass
class EquilibriumProfile:
    """Solved belief profile with convergence metadata."""

    p_star: np.ndarray
    residual: float
    iterations: int
    contraction_certificate: Certificate
    family: str
    converged: bool = True
    max_step_ratio: float | None = None
    uniqueness: UniquenessCheck | None = None


def _picard(gamma_map, p0, tol, max_iter, damping, certificate):
    """Iterate p <- Gamma(p); returns (p, residual, iterations, max step ratio).

    The residual is the exact map residual ||Gamma(p) - p||_inf at the
    returned point. Works column-wise when p0 is an (n, S) matrix.
    """
    p = np.asarray(p0, dtype=np.float64)
    g = gamma_map(p)
    res = float(np.max(np.abs(g - p))) if p.size else 0.0
    iters = 0
    max_ratio = None
    while res >= tol:
        if iters >= max_iter:
            raise ConvergenceError(
                f"fixed-point iteration exceeded {max_iter} iterations "
                f"(residual {res:.3e}; certificate "
                f"{'satisfied' if certificate.satisfied else 'NOT satisfied'}"
                f" at bound {certificate.bound:.3f})",
                residual=res,
                certificate=certificate,
            )
        p_new = g if damping == 0.0 else (1.0 - damping) * g + damping * p
        g_new = gamma_map(p_new)
        res_new = float(np.max(np.abs(g_new - p_new)))
        if damping == 0.0 and res > 1e-13:
            ratio = res_new / res
            max_ratio = ratio if max_ratio is None else max(max_ratio, ratio)
        p, g, res = p_new, g_new, res_new
        iters += 1
    return p, res, iters, max_ratio


def solve_fixed_point(
    params: Parameters,
    net: Network,
    G: InteractionMatrix,
    cov: CovariateBundle,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    p0: np.ndarray | None = None,
    damping: float = 0.0,
    auto_verify: bool = True,
    seed: int = 0,
) -> EquilibriumProfile:
    """Solve p = F(alpha + social term) by Picard iteration.

    When the contraction certificate fails the solve still runs but the
    result is labeled by the failed certificate, and a multi-start uniqueness
    check is attached (``auto_verify``).
    """
    cert = certificate_for(params, net)
    if p0 is None:
        p0 = np.full(net.n, 0.5)
    p0 = np.asarray(p0, dtype=np.float64)
    if np.any(p0 < 0) or np.any(p0 > 1):
        raise ValueError("p0 must lie in [0, 1]")

    gamma_map = lambda p: best_response(p, params, net, G, cov)
    p_star, res, iters, max_ratio = _picard(gamma_map, p0, tol, max_iter, damping, cert)

    uniq = None
    if not cert.satisfied and auto_verify:
        uniq = verify_uniqueness(params, net, G, cov, n_starts=20, seed=seed, tol=tol, max_iter=max_iter)
    return EquilibriumProfile(
        p_star=p_star,
        residual=res,
        iterations=iters,
        contraction_certificate=cert,
        family=params.family.tag,
        converged=True,
        max_step_ratio=max_ratio,
        uniqueness=uniq,
    )


def verify_uniqueness(
    params: Parameters,
    net: Network,
    G: InteractionMatrix,
    cov: CovariateBundle,
    n_starts: int = 100,
    seed: int = 0,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> UniquenessCheck:
    """Solve from random starts and report the max sup-distance between solutions."""
    rng = np.random.default_rng(seed)
    starts = rng.random((net.n, n_starts))
    cert = certificate_for(params, net)
    gamma_map = lambda P: best_response(P, params, net, G, cov)
    solved, _, _, _ = _picard(gamma_map, starts, tol, max_iter, 0.0, cert)
    spread = float(np.max(solved.max(axis=1) - solved.min(axis=1))) if net.n else 0.0
    return UniquenessCheck(agree=bool(spread < 1e-7), max_spread=spread)


@dataclass
class ComparativeStatics:
    """Signed equilibrium response to a parameter or norm perturbation."""

    perturbation: str
    delta: float
    p_base: np.ndarray
    p_new: np.ndarray
    diff: np.ndarray
    verdict: bool | None
    predicted_sign: np.ndarray | None = None
    observed_sign: np.ndarray | None = None
    interior: np.ndarray | None = None

    @property
    def match_fraction(self) -> float | None:
        if self.predicted_sign is None:
            return None
        mask = self.interior & (self.predicted_sign != 0)
        if not np.any(mask):
            return None
        return float(np.mean(self.predicted_sign[mask] == self.observed_sign[mask]))


def _require_certificate(params: Parameters, net: Network, label: str) -> Certificate:
    cert = certificate_for(params, net)
    if not cert.satisfied:
        raise CertificateError(
            f"{label}: contraction certificate fails (bound {cert.bound:.3f} >= 1)",
            certificate=cert,
        )
    return cert


def _sign(x, tol=1e-12):
    s = np.zeros_like(np.asarray(x, dtype=np.float64))
    s[np.asarray(x) > tol] = 1.0
    s[np.asarray(x) < -tol] = -1.0
    return s


def comparative_statics_check(
    params: Parameters,
    perturbation: str,
    net: Network,
    G: InteractionMatrix,
    cov: CovariateBundle,
    delta: float = 0.2,
    norm_delta: float = 0.01,
    tol: float = 1e-10,
) -> ComparativeStatics:
    """Compare equilibria before and after a perturbation.

    ``beta_l_up`` raises the below-norm penalty with beta_h fixed (every
    component of the equilibrium should weakly rise); ``beta_h_up`` raises the
    above-norm penalty with beta_l fixed (weak fall); ``norm_shift`` adds a
    constant to the norm argument and reports per-node signs without a global
    verdict.
    """
    _require_certificate(params, net, "baseline")
    base = solve_fixed_point(params, net, G, cov, tol=tol, auto_verify=False)

    if perturbation == "beta_l_up":
        bumped = params.replace(delta_beta=params.delta_beta + delta)
        _require_certificate(bumped, net, "perturbed")
        new = solve_fixed_point(bumped, net, G, cov, tol=tol, p0=base.p_star, auto_verify=False)
        diff = new.p_star - base.p_star
        return ComparativeStatics(
            perturbation=perturbation,
            delta=delta,
            p_base=base.p_star,
            p_new=new.p_star,
            diff=diff,
            verdict=bool(np.all(diff >= -1e-10)),
        )
    if perturbation == "beta_h_up":
        bumped = params.replace(beta_h=params.beta_h + delta, delta_beta=params.delta_beta - delta)
        _require_certificate(bumped, net, "perturbed")
        new = solve_fixed_point(bumped, net, G, cov, tol=tol, p0=base.p_star, auto_verify=False)
        diff = new.p_star - base.p_star
        return ComparativeStatics(
            perturbation=perturbation,
            delta=delta,
            p_base=base.p_star,
            p_new=new.p_star,
            diff=diff,
            verdict=bool(np.all(diff <= 1e-10)),
        )
    if perturbation == "norm_shift":
        shifted_map = _norm_shift_map(params, net, G, cov, norm_delta)
        cert = certificate_for(params, net)
        p_new, _, _, _ = _picard(shifted_map, base.p_star, tol, 10_000, 0.0, cert)
        diff = p_new - base.p_star
        pbar_base = np.asarray(G.weights @ base.p_star)
        realized = (np.asarray(G.weights @ p_new) + norm_delta) - pbar_base
        slope = params.beta_h + params.delta_beta * pbar_base
        dpos = net.nonisolated().astype(bool)
        interior = dpos & (pbar_base > 0.05) & (pbar_base < 0.95) & (np.abs(realized) > 1e-12)
        return ComparativeStatics(
            perturbation=perturbation,
            delta=norm_delta,
            p_base=base.p_star,
            p_new=p_new,
            diff=diff,
            verdict=None,
            predicted_sign=_sign(slope) * _sign(realized),
            observed_sign=_sign(diff, tol=1e-11),
            interior=interior,
        )
    raise ValueError(f"unknown perturbation {perturbation!r}")


def _norm_shift_map(params, net, G, cov, offset):
    """Best response with the norm argument shifted by a constant offset."""
    from .graph import sigma_profile
    import scipy.sparse as sp

    if params.family.tag not in ("het_conformity", "hom_conformity"):
        raise ValueError("norm_shift is defined for the conformity families")
    a = alpha(cov, params)
    dpos = net.nonisolated()
    Gw = G.weights
    if sp.issparse(Gw):
        G2 = Gw.multiply(Gw)
    else:
        G2 = Gw * Gw
    bh, db = params.beta_h, params.delta_beta

    def shifted(p):
        pbar = Gw @ p + offset
        sig = pbar * pbar + G2 @ (p * (1.0 - p))
        return params.link.cdf(a + dpos * (bh * (pbar - 0.5) + 0.5 * db * sig))

    return shifted


def export_rows(net: Network, node_ids, profile: EquilibriumProfile):
    """Rows (network_id, node_id, p_star) for the CLI export."""
    for node_id, value in zip(node_ids, profile.p_star):
        yield net.network_id, node_id, value
