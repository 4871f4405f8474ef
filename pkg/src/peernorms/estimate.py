"""Maximum pseudo-likelihood machinery: NPL and NFXP estimators with the
sandwich variance and identification diagnostics.

The pseudo log-likelihood holds beliefs fixed and evaluates the best-response
probabilities at candidate coefficients; NPL alternates one Newton fit with
one best-response update of the beliefs, NFXP re-solves the equilibrium at
every candidate inside a reparameterized search region where the contraction
certificate always holds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .data import Dataset
from .exceptions import CertificateError, ConvergenceError, DataError, IdentificationError
from .graph import intransitive_start_indicator
from .model import (
    LOGISTIC,
    LinkFunction,
    ModelFamily,
    Parameters,
    certificate_for,
    peer_columns,
    regressor_matrix,
)

PROB_CLAMP = 1e-12
_SQUASH_MARGIN = 0.98


@dataclass
class IdentificationReport:
    """Rank and triad diagnostics behind the identification conditions."""

    regressor_rank: int
    n_params: int
    min_singular_value: float
    full_rank: bool
    triad_counts: dict
    condition3: dict | None
    n_isolated: int
    n_nonisolated: int
    notes: list = field(default_factory=list)


@dataclass
class EstimationResult:
    """Fitted coefficients, beliefs, variance, and convergence record."""

    theta_hat: Parameters
    theta: np.ndarray
    coef_names: list
    p_hat: np.ndarray
    loglik: float
    loglik_total: float
    vcov: np.ndarray | None
    se: np.ndarray | None
    beta_l_hat: float | None
    beta_l_se: float | None
    outer_iterations: int
    converged: bool
    residual: float
    trace: list
    diagnostics: IdentificationReport | None
    method: str
    family: ModelFamily
    link: LinkFunction

    def coef(self, name: str) -> float:
        return float(self.theta[self.coef_names.index(name)])

    def coef_se(self, name: str) -> float:
        if self.se is None:
            return float("nan")
        return float(self.se[self.coef_names.index(name)])

    @property
    def loglik_per_obs(self) -> float:
        return self.loglik_total / max(1, len(self.p_hat))


class _CoefLayout:
    """Name and slice bookkeeping for the stacked coefficient vector."""

    def __init__(self, data: Dataset, family: ModelFamily, peer_active: bool):
        self.family = family
        self.peer_active = peer_active
        M, K = data.n_networks, data.n_covariates
        names = [f"gamma0:{nid}" for nid in data.network_ids]
        names += [f"gamma1:{x}" for x in data.x_names]
        names += [f"gamma2:{x}" for x in data.x_names]
        self.s_gamma0 = slice(0, M)
        self.s_gamma1 = slice(M, M + K)
        self.s_gamma2 = slice(M + K, M + 2 * K)
        if peer_active:
            _, peer_names = _peer_names(family)
            self.peer_names = peer_names
            self.s_peer = slice(M + 2 * K, M + 2 * K + len(peer_names))
            names += list(peer_names)
        else:
            self.peer_names = ()
            self.s_peer = slice(M + 2 * K, M + 2 * K)
        self.names = names
        self.size = len(names)

    def to_parameters(self, vec: np.ndarray, link: LinkFunction) -> Parameters:
        vec = np.asarray(vec, dtype=np.float64)
        peer = vec[self.s_peer]
        family = self.family
        beta_h, delta_beta = 0.0, 0.0
        if self.peer_active:
            if family.tag == "generalized":
                family = ModelFamily.generalized(*peer)
            elif family.tag == "hom_conformity":
                beta_h = float(peer[0])
            else:
                beta_h, delta_beta = float(peer[0]), float(peer[1])
        return Parameters(
            gamma0=vec[self.s_gamma0],
            gamma1=vec[self.s_gamma1],
            gamma2=vec[self.s_gamma2],
            beta_h=beta_h,
            delta_beta=delta_beta,
            family=family,
            link=link,
        )

    def from_parameters(self, params: Parameters) -> np.ndarray:
        vec = np.concatenate([params.gamma0, params.gamma1, params.gamma2])
        if self.peer_active:
            if self.family.tag == "generalized":
                peer = [params.family.beta1, params.family.beta2, params.family.beta3]
            elif self.family.tag == "hom_conformity":
                peer = [params.beta_h]
            else:
                peer = [params.beta_h, params.delta_beta]
            vec = np.concatenate([vec, np.asarray(peer, dtype=np.float64)])
        return vec


def _peer_names(family: ModelFamily):
    if family.tag == "generalized":
        return 3, ("beta1", "beta2", "beta3")
    if family.tag == "hom_conformity":
        return 1, ("beta",)
    return 2, ("beta_h", "delta_beta")


class _Pooled:
    """Cached per-block arrays plus pooled design and likelihood kernels."""

    def __init__(self, data: Dataset, family: ModelFamily, link: LinkFunction):
        if data.n_networks == 0:
            raise DataError("dataset is empty")
        self.data = data
        self.family = family
        self.link = link
        self.slices = data.block_slices()
        self.y = data.pooled_y() if data.has_outcomes else None
        self.M = data.n_networks
        self.N = data.n_total
        self.peer_active = data.n_nonisolated() > 0
        self.layout = _CoefLayout(data, family, self.peer_active)
        self._cache = []
        for block in data.blocks:
            Gw = block.G.weights
            G2 = Gw.multiply(Gw) if sp.issparse(Gw) else Gw * Gw
            W = None
            if family.tag == "aggregate_conformity":
                W = block.net.adjacency if family.weights == "adjacency" else Gw
            self._cache.append((Gw, G2, block.net.nonisolated(), W))

    def design(self, p: np.ndarray) -> np.ndarray:
        """Stacked design matrix at beliefs p: FE block, X, Xbar, peer columns."""
        M, K = self.M, self.data.n_covariates
        P = self.layout.size
        out = np.zeros((self.N, P))
        for m, (block, s) in enumerate(zip(self.data.blocks, self.slices)):
            out[s, m] = 1.0
            if K:
                out[s, self.layout.s_gamma1] = block.cov.X
                out[s, self.layout.s_gamma2] = block.cov.Xbar
            if self.peer_active:
                cols, _ = peer_columns(p[s], self.family, block.net, block.G)
                out[s, self.layout.s_peer] = cols
        return out

    def probs(self, theta: np.ndarray, design: np.ndarray) -> np.ndarray:
        return self.link.cdf(design @ theta)

    def loglik(self, theta: np.ndarray, design: np.ndarray) -> float:
        pi = np.clip(self.probs(theta, design), PROB_CLAMP, 1.0 - PROB_CLAMP)
        return float(np.sum(self.y * np.log(pi) + (1.0 - self.y) * np.log(1.0 - pi)) / self.M)

    def score_weights(self, theta: np.ndarray, design: np.ndarray):
        """Per-node dloglik/dindex and Fisher weights at the given design."""
        u = design @ theta
        F = np.clip(self.link.cdf(u), PROB_CLAMP, 1.0 - PROB_CLAMP)
        f = self.link.pdf(u)
        denom = F * (1.0 - F)
        dldu = (self.y - F) * f / denom
        w = f * f / denom
        return dldu, w, F, f

    def _grad(self, theta, design):
        dldu, _, _, _ = self.score_weights(theta, design)
        return design.T @ dldu / self.M

    def newton(self, design, theta0, gtol=1e-8, max_iter=100):
        """Maximize the fixed-belief pseudo likelihood in the coefficients.

        Concave single-index problem; Fisher scoring with step halving. Near
        the optimum the likelihood improvements fall below double-precision
        noise on flat ridges, so steps there are accepted on a gradient-norm
        decrease instead (damped Newton root-finding on the score).
        """
        theta = np.asarray(theta0, dtype=np.float64).copy()
        ll = self.loglik(theta, design)
        grad = self._grad(theta, design)
        ll_noise = 1e-11 * max(1.0, abs(ll))
        for _ in range(max_iter):
            gnorm = float(np.max(np.abs(grad)))
            if gnorm < gtol:
                return theta, ll, True
            dldu, w, _, _ = self.score_weights(theta, design)
            H = (design * w[:, None]).T @ design / self.M
            try:
                step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), grad)
            except scipy.linalg.LinAlgError:
                raise self._rank_error(design)
            gs = float(grad @ step)  # positive for an ascent direction
            t = 1.0
            accepted = False
            while t > 1e-10:
                cand = theta + t * step
                ll_cand = self.loglik(cand, design)
                if ll_cand >= ll + 1e-4 * t * gs - ll_noise:
                    grad_cand = self._grad(cand, design)
                    if ll_cand > ll + ll_noise or np.max(np.abs(grad_cand)) < 0.9 * gnorm:
                        theta, ll, grad, accepted = cand, ll_cand, grad_cand, True
                        break
                t *= 0.5
            if not accepted:
                raise ConvergenceError("inner Newton line search stalled")
        if float(np.max(np.abs(grad))) < gtol:
            return theta, ll, True
        raise ConvergenceError(
            f"inner maximization did not reach gradient tolerance (|grad| {np.max(np.abs(grad)):.2e})"
        )

    def _rank_error(self, design) -> IdentificationError:
        gram = design.T @ design / self.M
        eigs = np.linalg.eigvalsh(gram)
        rank = int(np.sum(eigs > 1e-8 * max(eigs.max(), 0.0)))
        report = identification_diagnostics(self.data, np.full(self.N, 0.5))
        return IdentificationError(
            f"regressor matrix is rank deficient: rank {rank} < {self.layout.size} parameters "
            f"(min eigenvalue {eigs.min():.3e}); see diagnostics",
            report=report,
        )

    def check_rank(self, design) -> None:
        gram = design.T @ design / self.M
        eigs = np.linalg.eigvalsh(gram)
        if np.sum(eigs > 1e-8 * max(eigs.max(), 0.0)) < self.layout.size:
            raise self._rank_error(design)

    def index_jacobian_block(self, theta: np.ndarray, p_block: np.ndarray, m: int) -> np.ndarray:
        params = self.layout.to_parameters(theta, self.link)
        block = self.data.blocks[m]
        from .model import index_jacobian

        return index_jacobian(p_block, params, block.net, block.G)

    def score_curvature(self, theta: np.ndarray, design: np.ndarray) -> np.ndarray:
        """d(dloglik/dindex)/dindex per node."""
        u = design @ theta
        F = np.clip(self.link.cdf(u), PROB_CLAMP, 1.0 - PROB_CLAMP)
        f = self.link.pdf(u)
        fp = self.link.dpdf(u)
        D = F * (1.0 - F)
        Dp = f * (1.0 - 2.0 * F)
        r = self.y - F
        return (-f * f * D + r * (fp * D - f * Dp)) / (D * D)

    def stationarity_refine(self, theta, p, eq_tol=1e-12, tol=1e-10, max_steps=10):
        """Newton corrector on the joint system: score = 0 at exact equilibrium beliefs.

        Both estimators' alternations creep along nearly flat ridges (per-step
        changes understate the distance to the root); a few Newton steps on
        the stationarity system land on the root to machine precision.
        """
        theta = np.asarray(theta, dtype=np.float64).copy()
        p = np.asarray(p, dtype=np.float64).copy()
        layout = self.layout
        from .model import peer_column_jacobians

        best = None
        for _ in range(max_steps):
            for m, s in enumerate(self.slices):
                p[s], _ = self.equilibrium_block(theta, m, p[s], tol=eq_tol)
            design = self.design(p)
            dldu, w, _, f = self.score_weights(theta, design)
            score = design.T @ dldu / self.M
            fnorm = float(np.max(np.abs(score)))
            if best is None or fnorm < best[0]:
                best = (fnorm, theta.copy(), p.copy())
            if fnorm < tol:
                break
            curv = self.score_curvature(theta, design)
            dF = (design * curv[:, None]).T @ design
            params = layout.to_parameters(theta, self.link)
            for m, s in enumerate(self.slices):
                block = self.data.blocks[m]
                Bs = peer_column_jacobians(p[s], self.family, block.net, block.G)
                Ju = np.zeros((block.n, block.n))
                for coef, B in zip(theta[layout.s_peer], Bs):
                    Ju += coef * B
                f_m = f[s]
                K_m = design[s]
                dpdtheta = np.linalg.solve(np.eye(block.n) - f_m[:, None] * Ju, f_m[:, None] * K_m)
                dSdp = K_m.T @ (curv[s][:, None] * Ju)
                for c, B in enumerate(Bs):
                    dSdp[layout.s_peer.start + c] += dldu[s] @ B
                dF += dSdp @ dpdtheta
            dF /= self.M
            try:
                step = np.linalg.solve(dF, score)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(dF, score, rcond=None)[0]
            norm = float(np.max(np.abs(step)))
            if norm > 0.5:
                step *= 0.5 / norm
            theta = theta - step
        fnorm, theta, p = best
        return theta, p, fnorm

    def _peer_index(self, m: int, peer: np.ndarray, p: np.ndarray) -> np.ndarray:
        Gw, G2, dpos, W = self._cache[m]
        tag = self.family.tag
        if tag == "aggregate_conformity":
            wbar = W @ p
            return dpos * (peer[0] * (wbar - 0.5) + peer[1] * 0.5 * wbar)
        pbar = Gw @ p
        if tag == "hom_conformity":
            return dpos * (peer[0] * (pbar - 0.5))
        if tag == "spillover":
            return dpos * (peer[0] * (2.0 * pbar - 1.0) + peer[1] * (pbar - 1.0))
        if tag == "linear_conformity":
            return dpos * (peer[0] * (2.0 * pbar - 1.0) + peer[1] * pbar)
        sig = pbar * pbar + G2 @ (p * (1.0 - p))
        if tag == "het_conformity":
            return dpos * (peer[0] * (pbar - 0.5) + 0.5 * peer[1] * sig)
        return dpos * (peer[0] * pbar + peer[1] + peer[2] * sig)  # generalized

    def equilibrium_block(self, theta, m, p0, tol=1e-10, max_iter=20_000):
        """Exact per-network fixed point of the best response at coefficients theta."""
        block = self.data.blocks[m]
        base = theta[m]
        K = self.data.n_covariates
        if K:
            base = base + block.cov.X @ theta[self.layout.s_gamma1] + block.cov.Xbar @ theta[self.layout.s_gamma2]
        else:
            base = np.full(block.n, base)
        peer = theta[self.layout.s_peer]

        p = np.asarray(p0, dtype=np.float64)
        res = np.inf
        for _ in range(max_iter):
            u = base + self._peer_index(m, peer, p) if self.peer_active else base
            g = self.link.cdf(u)
            res = float(np.max(np.abs(g - p))) if block.n else 0.0
            if res < tol:
                return g, res
            p = g
        raise ConvergenceError(
            f"equilibrium solve for network {block.net.network_id} hit {max_iter} iterations",
            residual=res,
        )


def pseudo_loglik(params: Parameters, p: np.ndarray, data: Dataset) -> float:
    """Pseudo log-likelihood (1/M) sum_i [y ln Gamma_i + (1-y) ln(1-Gamma_i)].

    Beliefs p are held fixed; the probabilities are the best responses at the
    supplied coefficients. Probabilities are clamped at 1e-12 before logs.
    """
    pooled = _Pooled(data, params.family, params.link)
    theta = pooled.layout.from_parameters(params)
    return pooled.loglik(theta, pooled.design(np.asarray(p, dtype=np.float64)))


def inner_maximize(
    p_fixed: np.ndarray,
    data: Dataset,
    theta0: Parameters,
    gtol: float = 1e-8,
    max_iter: int = 100,
    check_rank: bool = True,
) -> Parameters:
    """Maximize the pseudo likelihood in the coefficients at fixed beliefs."""
    pooled = _Pooled(data, theta0.family, theta0.link)
    design = pooled.design(np.asarray(p_fixed, dtype=np.float64))
    if check_rank:
        pooled.check_rank(design)
    vec, _, _ = pooled.newton(design, pooled.layout.from_parameters(theta0), gtol=gtol, max_iter=max_iter)
    return pooled.layout.to_parameters(vec, theta0.link)


def _initial_beliefs(data: Dataset, p0) -> np.ndarray:
    if p0 is None or (isinstance(p0, str) and p0 == "observed"):
        vals = []
        for block in data.blocks:
            mean = float(np.mean(block.y)) if block.y is not None and block.n else 0.5
            vals.append(np.full(block.n, np.clip(mean, 0.01, 0.99)))
        return np.concatenate(vals) if vals else np.empty(0)
    if isinstance(p0, str) and p0 == "half":
        return np.full(data.n_total, 0.5)
    arr = np.asarray(p0, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(data.n_total, float(arr))
    if arr.shape[0] != data.n_total:
        raise DataError("p0 length does not match the dataset")
    return arr


def npl_estimate(
    data: Dataset,
    family: ModelFamily | None = None,
    link: LinkFunction = LOGISTIC,
    p0=None,
    outer_tol: float = 1e-6,
    max_outer: int = 500,
    inner_gtol: float = 1e-8,
    theta0: np.ndarray | None = None,
    refine: bool = True,
    compute_vcov: bool = True,
) -> EstimationResult:
    """Nested pseudo-likelihood estimator.

    Alternates an inner coefficient fit at fixed beliefs with a single
    best-response update of the beliefs, until the belief (or coefficient)
    change drops below ``outer_tol`` in the sup norm. With ``refine`` the
    converged pair is polished into an exact joint fixed point by a Newton
    corrector on the stationarity system. Hitting ``max_outer`` returns
    ``converged=False`` with the trace instead of raising.
    """
    family = family or ModelFamily.het_conformity()
    pooled = _Pooled(data, family, link)
    if not pooled.peer_active:
        warnings.warn("no non-isolated nodes: peer coefficients dropped, fitting plain logit")
    p = _initial_beliefs(data, p0)
    theta = np.zeros(pooled.layout.size) if theta0 is None else np.asarray(theta0, dtype=np.float64)

    trace = []
    converged = False
    design = pooled.design(p)
    pooled.check_rank(design)
    iterations = 0
    for k in range(max_outer):
        theta_new, ll, _ = pooled.newton(design, theta, gtol=inner_gtol)
        p_new = pooled.probs(theta_new, design)
        dp = float(np.max(np.abs(p_new - p)))
        dtheta = float(np.max(np.abs(theta_new - theta)))
        trace.append({"iteration": k + 1, "dp": dp, "dtheta": dtheta, "loglik": ll})
        theta, p = theta_new, p_new
        iterations = k + 1
        if dp < outer_tol or dtheta < outer_tol:
            converged = True
            break
        design = pooled.design(p)

    if converged and refine and pooled.peer_active:
        theta, p, _ = pooled.stationarity_refine(theta, p)
    design = pooled.design(p)
    if converged:
        theta, _, _ = pooled.newton(design, theta, gtol=inner_gtol)
    residual = float(np.max(np.abs(pooled.probs(theta, design) - p))) if pooled.N else 0.0

    return _assemble_result(
        pooled, theta, p, residual, iterations, converged, trace, "npl", compute_vcov
    )


def _assemble_result(pooled, theta, p, residual, iterations, converged, trace, method, compute_vcov):
    layout = pooled.layout
    params = layout.to_parameters(theta, pooled.link)
    design = pooled.design(p)
    ll = pooled.loglik(theta, design)
    vcov = se = None
    if compute_vcov:
        try:
            V = _sandwich_variance(pooled, theta, p)
            vcov = V / pooled.M
            se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        except (CertificateError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"variance computation failed: {exc}")

    beta_l_hat = beta_l_se = None
    if layout.peer_active and layout.family.tag in (
        "het_conformity",
        "spillover",
        "aggregate_conformity",
        "linear_conformity",
    ):
        beta_l_hat = params.beta_l
        if vcov is not None:
            i, j = layout.names.index("beta_h"), layout.names.index("delta_beta")
            beta_l_se = float(np.sqrt(max(vcov[i, i] + vcov[j, j] + 2.0 * vcov[i, j], 0.0)))
    elif layout.peer_active and layout.family.tag == "hom_conformity":
        beta_l_hat = params.beta_h
        if vcov is not None:
            i = layout.names.index("beta")
            beta_l_se = float(np.sqrt(vcov[i, i]))

    diagnostics = identification_diagnostics(pooled.data, p, params)
    if not layout.peer_active:
        diagnostics.notes.append("no non-isolated nodes; peer parameters unidentified and dropped")

    return EstimationResult(
        theta_hat=params,
        theta=np.asarray(theta, dtype=np.float64),
        coef_names=list(layout.names),
        p_hat=np.asarray(p, dtype=np.float64),
        loglik=ll,
        loglik_total=ll * pooled.M,
        vcov=vcov,
        se=se,
        beta_l_hat=beta_l_hat,
        beta_l_se=beta_l_se,
        outer_iterations=iterations,
        converged=converged,
        residual=residual,
        trace=trace,
        diagnostics=diagnostics,
        method=method,
        family=layout.family,
        link=pooled.link,
    )


def _sandwich_variance(pooled: _Pooled, theta: np.ndarray, p_hat: np.ndarray, include_belief_term: bool = True) -> np.ndarray:
    """Asymptotic covariance of sqrt(M)(theta_hat - theta0) for the NPL pair.

    Score outer products are accumulated per node: actions are conditionally
    independent given characteristics and the network, so node-level products
    estimate the same moments as network-level ones while staying full rank
    in the presence of per-network fixed effects.
    """
    design = pooled.design(p_hat)
    dldu, _, _, f = pooled.score_weights(theta, design)
    g_nodes = design * dldu[:, None]
    omega_tt = g_nodes.T @ g_nodes / pooled.M

    C = np.zeros_like(omega_tt)
    if include_belief_term and pooled.peer_active:
        for m, s in enumerate(pooled.slices):
            block_n = pooled.data.blocks[m].n
            J = pooled.index_jacobian_block(theta, p_hat[s], m)
            f_m = f[s]
            K_m = design[s]
            dGp = f_m[:, None] * J
            dGt = f_m[:, None] * K_m
            A_m = np.eye(block_n) - dGp
            B_m = (K_m * (dldu[s] ** 2)[:, None]).T @ J
            try:
                C += B_m @ np.linalg.solve(A_m.T, dGt)
            except np.linalg.LinAlgError:
                raise CertificateError(
                    f"(I - dGamma/dp) is singular for network {pooled.data.blocks[m].net.network_id}; "
                    "the contraction certificate is violated"
                )
        C /= pooled.M

    A = omega_tt + C
    A_inv = np.linalg.inv(A)
    V = A_inv @ omega_tt @ A_inv.T
    asym = np.max(np.abs(V - V.T))
    scale = max(np.max(np.abs(V)), 1.0)
    if asym > 1e-8 * scale:
        warnings.warn(f"variance asymmetry {asym:.2e} before symmetrization")
    return 0.5 * (V + V.T)


def npl_variance(
    theta_hat: Parameters,
    p_hat: np.ndarray,
    data: Dataset,
    include_belief_term: bool = True,
) -> np.ndarray:
    """Sandwich covariance; standard errors are sqrt(diag) / sqrt(M)."""
    pooled = _Pooled(data, theta_hat.family, theta_hat.link)
    theta = pooled.layout.from_parameters(theta_hat)
    return _sandwich_variance(pooled, theta, np.asarray(p_hat, dtype=np.float64), include_belief_term)


def identification_diagnostics(data: Dataset, p_hat: np.ndarray, params: Parameters | None = None) -> IdentificationReport:
    """Rank of the pooled regressor moment matrix plus triad and sign conditions.

    Diagnostics never raise; they report.
    """
    p_hat = np.asarray(p_hat, dtype=np.float64)
    rows = []
    for block, s in zip(data.blocks, data.block_slices()):
        rows.append(regressor_matrix(p_hat[s], block.net, block.G, block.cov))
    K = np.vstack(rows) if rows else np.empty((0, 0))
    gram = K.T @ K / max(1, data.n_networks)
    eigs = np.linalg.eigvalsh(gram) if gram.size else np.empty(0)
    max_eig = float(eigs.max()) if eigs.size else 0.0
    rank = int(np.sum(eigs > 1e-8 * max_eig)) if eigs.size else 0
    n_params = data.n_networks + 2 * data.n_covariates + 2

    triads = {b.net.network_id: intransitive_start_indicator(b.net).count for b in data.blocks}
    condition3 = None
    if params is not None and data.n_covariates:
        condition3 = {}
        for k, name in enumerate(data.x_names):
            g1, g2 = float(params.gamma1[k]), float(params.gamma2[k])
            condition3[name] = bool(g1 * g2 >= 0.0 and g2 != 0.0)

    n_iso = data.n_total - data.n_nonisolated()
    notes = []
    if rank < n_params:
        notes.append("regressor moment matrix is rank deficient")
    if all(c == 0 for c in triads.values()):
        notes.append("no intransitive triads in any network")
    return IdentificationReport(
        regressor_rank=rank,
        n_params=n_params,
        min_singular_value=float(eigs.min()) if eigs.size else 0.0,
        full_rank=bool(rank >= n_params),
        triad_counts=triads,
        condition3=condition3,
        n_isolated=int(n_iso),
        n_nonisolated=int(data.n_nonisolated()),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# NFXP: exact-equilibrium likelihood over a reparameterized certified region.


def _peer_raw_dim(family: ModelFamily) -> int:
    return {"het_conformity": 2, "hom_conformity": 1, "spillover": 2, "generalized": 3,
            "aggregate_conformity": 2, "linear_conformity": 2}[family.tag]


def _region_scale(pooled: _Pooled) -> float:
    B = pooled.link.bound_threshold * _SQUASH_MARGIN
    if pooled.family.tag == "aggregate_conformity" and pooled.family.weights == "adjacency":
        row = max((float(b.net.degree.max()) for b in pooled.data.blocks if b.n), default=1.0)
        return B / max(row, 1.0)
    return B


def _raw_to_peer(family: ModelFamily, raw: np.ndarray, B: float):
    """Smooth bijection from unconstrained raw values into the certified region."""
    tag = family.tag
    if tag in ("het_conformity", "generalized"):
        s, t = np.tanh(raw[0]), np.tanh(raw[1])
        cs, ct = 1.0 - s * s, 1.0 - t * t
        if tag == "het_conformity":
            x, y = (s + t) * B / 2.0, (s - t) * B / 3.0
            jac = np.array([[B / 2.0 * cs, B / 2.0 * ct], [B / 3.0 * cs, -B / 3.0 * ct]])
            return np.array([x, y]), jac
        x, y = (s + t) * B / 2.0, (s - t) * B / 6.0
        jac = np.zeros((3, 3))
        jac[0, 0], jac[0, 1] = B / 2.0 * cs, B / 2.0 * ct
        jac[2, 0], jac[2, 1] = B / 6.0 * cs, -B / 6.0 * ct
        jac[1, 2] = 1.0
        return np.array([x, float(raw[2]), y]), jac
    if tag == "hom_conformity":
        s = np.tanh(raw[0])
        return np.array([B * s]), np.array([[B * (1.0 - s * s)]])
    # spillover / linear / aggregate: only beta_h + beta_l is bounded
    s = np.tanh(raw[0])
    total = B * s  # 2 beta_h + delta_beta
    db = float(raw[1])
    bh = 0.5 * (total - db)
    jac = np.array([[0.5 * B * (1.0 - s * s), -0.5], [0.0, 1.0]])
    return np.array([bh, db]), jac


def _peer_to_raw(family: ModelFamily, peer: np.ndarray, B: float) -> np.ndarray:
    def _atanh(x):
        return float(np.arctanh(np.clip(x, -0.999999, 0.999999)))

    tag = family.tag
    if tag == "het_conformity":
        x, y = peer
        return np.array([_atanh((2 * x + 3 * y) / (2 * B)), _atanh((2 * x - 3 * y) / (2 * B))])
    if tag == "generalized":
        x, v, y = peer
        return np.array([_atanh((x + 3 * y) / B), _atanh((x - 3 * y) / B), v])
    if tag == "hom_conformity":
        return np.array([_atanh(peer[0] / B)])
    bh, db = peer
    return np.array([_atanh((2 * bh + db) / B), db])


def _constrained_inner(pooled: _Pooled, design: np.ndarray, theta_start: np.ndarray, B: float):
    """Maximize the fixed-belief pseudo likelihood with the peer coefficients
    squashed into the interior of the certificate region."""
    layout = pooled.layout
    n_gamma = layout.s_peer.start
    family = pooled.family
    raw0 = np.concatenate([theta_start[:n_gamma], _peer_to_raw(family, theta_start[layout.s_peer], B)])

    def unpack(raw):
        peer, jac = _raw_to_peer(family, raw[n_gamma:], B)
        return np.concatenate([raw[:n_gamma], peer]), jac

    def objective(raw):
        theta, peer_jac = unpack(raw)
        ll = pooled.loglik(theta, design)
        dldu, _, _, _ = pooled.score_weights(theta, design)
        grad = design.T @ dldu / pooled.M
        grad_raw = np.concatenate([grad[:n_gamma], grad[layout.s_peer] @ peer_jac])
        return -ll, -grad_raw

    res = scipy.optimize.minimize(
        objective, raw0, jac=True, method="L-BFGS-B",
        options={"maxiter": 80, "gtol": 1e-9, "ftol": 1e-13},
    )
    theta, _ = unpack(res.x)
    return theta


def nfxp_estimate(
    data: Dataset,
    family: ModelFamily | None = None,
    link: LinkFunction = LOGISTIC,
    p0=None,
    theta0: np.ndarray | None = None,
    eq_tol: float = 1e-10,
    outer_tol: float = 1e-8,
    max_outer: int = 200,
    inner_gtol: float = 1e-10,
    refine: bool = True,
    compute_vcov: bool = True,
) -> EstimationResult:
    """Nested fixed-point estimator: a full equilibrium solve at every candidate.

    Alternates a pseudo-likelihood maximization at the current beliefs with an
    exact (tolerance ``eq_tol``) equilibrium solve at the new coefficients; at
    convergence the coefficients maximize the pseudo likelihood evaluated at
    their own equilibrium. Inner candidates that leave the certificate region,
    where "the" equilibrium is ill-defined, are replaced by a constrained fit
    squashed into the region's interior.
    """
    family = family or ModelFamily.het_conformity()
    pooled = _Pooled(data, family, link)
    layout = pooled.layout
    B = _region_scale(pooled)

    p = _initial_beliefs(data, p0)
    theta = np.zeros(layout.size) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    design = pooled.design(p)
    pooled.check_rank(design)
    if not pooled.peer_active:
        vec, _, _ = pooled.newton(design, theta)
        p_hat = pooled.probs(vec, design)
        return _assemble_result(pooled, vec, p_hat, 0.0, 1, True, [], "nfxp", compute_vcov)

    trace = []
    converged = False
    iterations = 0
    dtheta = np.inf
    constrained_streak = 0
    for k in range(max_outer):
        theta_new, ll, _ = pooled.newton(design, theta, gtol=inner_gtol)
        params_new = layout.to_parameters(theta_new, link)
        if not certificate_for(params_new).satisfied:
            theta_new = _constrained_inner(pooled, design, theta, B)
            ll = pooled.loglik(theta_new, design)
            constrained_streak += 1
        else:
            constrained_streak = 0
        # early candidates may sit near the certificate boundary where Picard
        # crawls; solve loosely until the coefficients settle
        tol_k = float(np.clip(0.05 * dtheta, eq_tol, 1e-4))
        p_new = np.empty(pooled.N)
        for m, s in enumerate(pooled.slices):
            p_new[s], _ = pooled.equilibrium_block(theta_new, m, p[s], tol=tol_k)
        dp = float(np.max(np.abs(p_new - p)))
        dtheta = float(np.max(np.abs(theta_new - theta)))
        trace.append({"iteration": k + 1, "dp": dp, "dtheta": dtheta, "loglik": ll})
        theta, p = theta_new, p_new
        iterations = k + 1
        design = pooled.design(p)
        if dtheta < outer_tol:
            converged = True
            break
        if constrained_streak >= 3 and refine:
            # the data pull the fit against the certificate boundary; hand over
            # to the stationarity corrector instead of grinding along it
            break
    fnorm = np.inf
    if refine and pooled.peer_active:
        theta, p, fnorm = pooled.stationarity_refine(theta, p)
        design = pooled.design(p)
        converged = converged or fnorm < 1e-8
    if converged:
        theta, _, _ = pooled.newton(design, theta, gtol=inner_gtol)
    residual = float(np.max(np.abs(pooled.probs(theta, design) - p)))
    return _assemble_result(
        pooled, theta, p, residual, iterations, converged, trace, "nfxp", compute_vcov
    )
