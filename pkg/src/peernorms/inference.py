"""Likelihood-ratio and Wald tests, plus marginal effects of the social norm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .exceptions import DataError, IdentificationError
from .estimate import EstimationResult

SPILLOVER_CAVEAT = (
    "beta3 = 0 also holds for the linear and aggregate conformity variants; "
    "this test cannot distinguish among the three."
)


@dataclass
class TestResult:
    statistic: float
    dof: int
    p_value: float
    null_description: str
    alpha: float = 0.05

    @property
    def reject(self) -> bool:
        return self.p_value < self.alpha

    @property
    def stars(self) -> str:
        if self.p_value < 0.001:
            return "***"
        if self.p_value < 0.01:
            return "**"
        if self.p_value < 0.05:
            return "*"
        return ""


def chi_square_survival(x: float, dof: int) -> float:
    """P(X > x) for a chi-square variable with ``dof`` degrees of freedom."""
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"invalid degrees of freedom: {dof}")
    if x < 0:
        raise ValueError("chi-square statistic must be nonnegative")
    return float(chi2.sf(x, int(dof)))


def lr_test(
    loglik_restricted: float,
    loglik_full: float,
    dof: int,
    scale: float = 1.0,
    null_description: str = "restricted model",
    alpha: float = 0.05,
) -> TestResult:
    """Likelihood ratio test for nested fits.

    Pass total log likelihoods with ``scale=1``; pass per-network normalized
    values with ``scale=M``. A statistic below -1e-8 means the models were not
    nested (or not converged) and raises.
    """
    stat = 2.0 * scale * (loglik_full - loglik_restricted)
    if stat < -1e-8:
        raise DataError(
            f"negative LR statistic {stat:.3e}: the restricted model is not nested in the full model"
        )
    stat = max(stat, 0.0)
    return TestResult(
        statistic=float(stat),
        dof=int(dof),
        p_value=chi_square_survival(stat, dof),
        null_description=null_description,
        alpha=alpha,
    )


def wald_linear_restriction(
    theta_hat: np.ndarray,
    vcov: np.ndarray,
    R: np.ndarray,
    r: np.ndarray,
    null_description: str = "R theta = r",
    alpha: float = 0.05,
) -> TestResult:
    """Wald test of R theta = r with ``vcov`` the covariance of theta_hat."""
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=np.float64))
    vcov = np.atleast_2d(np.asarray(vcov, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    q = R.shape[0]
    if np.linalg.matrix_rank(R) < q:
        raise ValueError("restriction matrix R does not have full row rank")
    gap = R @ theta_hat - r
    rvr = R @ vcov @ R.T
    try:
        stat = float(gap @ np.linalg.solve(rvr, gap))
    except np.linalg.LinAlgError:
        raise IdentificationError(
            f"R V R' is singular for the restriction {null_description!r}; "
            "the restricted combination has no estimated variance"
        )
    stat = max(stat, 0.0)
    return TestResult(
        statistic=stat,
        dof=q,
        p_value=chi_square_survival(stat, q),
        null_description=null_description,
        alpha=alpha,
    )


def _generalized_indices(result: EstimationResult):
    if result.family.tag != "generalized":
        raise DataError("specification tests require a generalized-family fit")
    if result.vcov is None:
        raise DataError("fit has no covariance matrix; rerun with compute_vcov=True")
    names = result.coef_names
    return names.index("beta1"), names.index("beta2"), names.index("beta3")


def spillover_wald(result: EstimationResult, alpha: float = 0.05) -> TestResult:
    """H0: beta3 = 0 (a pure spillover model is consistent with the data)."""
    _, _, i3 = _generalized_indices(result)
    R = np.zeros((1, len(result.coef_names)))
    R[0, i3] = 1.0
    return wald_linear_restriction(
        result.theta, result.vcov, R, np.zeros(1),
        null_description="pure spillover model is consistent (beta3 = 0)",
        alpha=alpha,
    )


def conformity_wald(result: EstimationResult, alpha: float = 0.05) -> TestResult:
    """H0: beta1 = -2 beta2 (a pure conformity model is consistent with the data)."""
    i1, i2, _ = _generalized_indices(result)
    R = np.zeros((1, len(result.coef_names)))
    R[0, i1] = 1.0
    R[0, i2] = 2.0
    return wald_linear_restriction(
        result.theta, result.vcov, R, np.zeros(1),
        null_description="pure conformity model is consistent (beta1 + 2 beta2 = 0)",
        alpha=alpha,
    )


@dataclass
class MarginalEffects:
    """Norm marginal effects, logistic closed form."""

    per_node: np.ndarray
    one_friend_per_node: np.ndarray
    average: float
    one_friend_average: float
    average_se: float | None = None
    one_friend_average_se: float | None = None


def marginal_effect_of_norm(
    beta_h: float,
    delta_beta: float,
    p_star: np.ndarray,
    pbar: np.ndarray,
    degrees: np.ndarray,
    link_tag: str = "logistic",
    vcov_peer: np.ndarray | None = None,
) -> MarginalEffects:
    """Per-node dp*_i / dpbar_i = 1{d_i>0}(beta_h + delta_beta pbar_i) p_i (1 - p_i).

    The one-friend version divides by the degree (one friend switching moves
    the norm by 1/d_i); averages run over non-isolated nodes only. Standard
    errors, when a 2x2 covariance of (beta_h, delta_beta) is given, come from
    the delta method holding the fitted probabilities fixed.
    """
    if link_tag != "logistic":
        raise DataError("norm marginal effects use the logistic closed form; other links unsupported")
    p_star = np.asarray(p_star, dtype=np.float64)
    pbar = np.asarray(pbar, dtype=np.float64)
    degrees = np.asarray(degrees)
    dpos = degrees > 0
    slope = beta_h + delta_beta * pbar
    per_node = np.where(dpos, slope * p_star * (1.0 - p_star), 0.0)
    inv_deg = np.zeros_like(p_star)
    np.divide(1.0, degrees, out=inv_deg, where=dpos)
    one_friend = per_node * inv_deg
    if not np.any(dpos):
        raise DataError("no non-isolated nodes; the norm marginal effect is undefined")
    avg = float(per_node[dpos].mean())
    avg_one = float(one_friend[dpos].mean())

    avg_se = one_se = None
    if vcov_peer is not None:
        base = p_star * (1.0 - p_star)
        g_avg = np.array([float(base[dpos].mean()), float((pbar * base)[dpos].mean())])
        g_one = np.array(
            [float((base * inv_deg)[dpos].mean()), float((pbar * base * inv_deg)[dpos].mean())]
        )
        vcov_peer = np.asarray(vcov_peer, dtype=np.float64)
        avg_se = float(np.sqrt(max(g_avg @ vcov_peer @ g_avg, 0.0)))
        one_se = float(np.sqrt(max(g_one @ vcov_peer @ g_one, 0.0)))
    return MarginalEffects(
        per_node=per_node,
        one_friend_per_node=one_friend,
        average=avg,
        one_friend_average=avg_one,
        average_se=avg_se,
        one_friend_average_se=one_se,
    )


def norm_marginal_effects(result: EstimationResult, data) -> MarginalEffects:
    """Dataset-level wrapper reading the fitted heterogeneous conformity run."""
    if result.family.tag not in ("het_conformity", "hom_conformity"):
        raise DataError("norm marginal effects are defined for the conformity families")
    if result.link.tag != "logistic":
        raise DataError("norm marginal effects use the logistic closed form; other links unsupported")
    pbar = np.concatenate(
        [np.asarray(b.G.weights @ p) for b, p in zip(data.blocks, data.split(result.p_hat))]
    )
    degrees = np.concatenate([b.net.degree for b in data.blocks])
    beta_h = result.coef("beta") if result.family.tag == "hom_conformity" else result.coef("beta_h")
    delta = 0.0 if result.family.tag == "hom_conformity" else result.coef("delta_beta")
    vcov_peer = None
    if result.vcov is not None:
        if result.family.tag == "hom_conformity":
            i = result.coef_names.index("beta")
            vcov_peer = np.array([[result.vcov[i, i], 0.0], [0.0, 0.0]])
        else:
            i = result.coef_names.index("beta_h")
            j = result.coef_names.index("delta_beta")
            vcov_peer = result.vcov[np.ix_([i, j], [i, j])]
    return marginal_effect_of_norm(
        beta_h, delta, result.p_hat, pbar, degrees, link_tag=result.link.tag, vcov_peer=vcov_peer
    )
