import numpy as np
import pytest
from scipy.special import expit

from peernorms.equilibrium import (
    comparative_statics_check,
    solve_fixed_point,
    verify_uniqueness,
)
from peernorms.exceptions import CertificateError, ConvergenceError
from peernorms.graph import Network, row_normalize
from peernorms.model import CovariateBundle, ModelFamily, Parameters


def build(edges, n, gamma0=0.0, beta_h=1.0, delta_beta=1.0, symmetrize=False, alpha_vec=None, K=0, seed=0):
    net = Network.from_edges("t", n, edges, symmetrize=symmetrize)
    G = row_normalize(net)
    if alpha_vec is None:
        cov = CovariateBundle.build(0, 1, np.zeros((n, K)), G)
        params = Parameters(gamma0=[gamma0], gamma1=np.zeros(K), gamma2=np.zeros(K),
                            beta_h=beta_h, delta_beta=delta_beta)
    else:
        X = np.asarray(alpha_vec)[:, None]
        cov = CovariateBundle.build(0, 1, X, G)
        params = Parameters(gamma0=[0.0], gamma1=[1.0], gamma2=[0.0],
                            beta_h=beta_h, delta_beta=delta_beta)
    return net, G, cov, params


def triangle_oracle(beta_h, delta_beta, tol=1e-14):
    """Bisection on the symmetric scalar equation for the complete triangle."""
    def f(c):
        sig = c * c + 0.5 * c * (1 - c)
        return expit(beta_h * (c - 0.5) + 0.5 * delta_beta * sig) - c

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestSolveFixedPoint:
    def test_all_isolated_one_effective_iteration(self):
        net, G, cov, params = build([], 4, gamma0=0.3)
        prof = solve_fixed_point(params, net, G, cov)
        assert prof.iterations == 1
        assert np.allclose(prof.p_star, expit(0.3), atol=1e-15)

    def test_zero_betas_give_cdf_alpha(self):
        rng = np.random.default_rng(8)
        alpha_vec = rng.standard_normal(10)
        net, G, cov, params = build(
            [(i, (i + 1) % 10) for i in range(10)], 10,
            beta_h=0.0, delta_beta=0.0, alpha_vec=alpha_vec,
        )
        prof = solve_fixed_point(params, net, G, cov)
        assert np.allclose(prof.p_star, expit(alpha_vec), atol=1e-12)

    def test_triangle_matches_bisection_oracle(self):
        net, G, cov, params = build(
            [(0, 1), (0, 2), (1, 2)], 3, beta_h=1.0, delta_beta=1.0, symmetrize=True,
        )
        prof = solve_fixed_point(params, net, G, cov, tol=1e-12)
        c = triangle_oracle(1.0, 1.0)
        assert np.max(np.abs(prof.p_star - c)) < 1e-8

    def test_residual_below_tolerance(self):
        rng = np.random.default_rng(4)
        alpha_vec = rng.standard_normal(20)
        net = Network("r", (rng.random((20, 20)) < 0.2).astype(float) * (1 - np.eye(20)))
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, alpha_vec[:, None], G)
        params = Parameters(gamma0=[0.0], gamma1=[1.0], gamma2=[0.0], beta_h=1.2, delta_beta=0.8)
        prof = solve_fixed_point(params, net, G, cov, tol=1e-10)
        assert prof.residual < 1e-10
        assert np.all(prof.p_star > 0) and np.all(prof.p_star < 1)

    def test_max_iter_error_reports_residual(self):
        net, G, cov, params = build([(0, 1), (1, 0)], 2, beta_h=1.0, delta_beta=1.0)
        with pytest.raises(ConvergenceError) as err:
            solve_fixed_point(params, net, G, cov, max_iter=2)
        assert err.value.residual is not None
        assert err.value.certificate.satisfied

    def test_invalid_p0(self):
        net, G, cov, params = build([(0, 1), (1, 0)], 2)
        with pytest.raises(ValueError):
            solve_fixed_point(params, net, G, cov, p0=np.array([1.5, 0.2]))

    def test_uncertified_gets_uniqueness_check(self):
        net, G, cov, params = build([(0, 1), (1, 0)], 2, beta_h=3.0, delta_beta=1.0)
        prof = solve_fixed_point(params, net, G, cov)
        assert not prof.contraction_certificate.satisfied
        assert prof.uniqueness is not None

    def test_step_ratios_bounded_by_certificate(self):
        rng = np.random.default_rng(11)
        for seed in range(5):
            n = int(rng.integers(10, 40))
            adj = (rng.random((n, n)) < 0.15).astype(float)
            np.fill_diagonal(adj, 0.0)
            net = Network(f"s{seed}", adj)
            G = row_normalize(net)
            cov = CovariateBundle.build(0, 1, rng.standard_normal((n, 1)), G)
            params = Parameters(gamma0=[0.0], gamma1=[1.0], gamma2=[0.0], beta_h=1.4, delta_beta=1.2)
            prof = solve_fixed_point(params, net, G, cov, p0=rng.random(n))
            cert = prof.contraction_certificate
            assert cert.satisfied
            if prof.max_step_ratio is not None:
                assert prof.max_step_ratio <= cert.bound + 1e-9

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        n = 15
        adj = (rng.random((n, n)) < 0.25).astype(float)
        np.fill_diagonal(adj, 0.0)
        alpha_vec = rng.standard_normal(n)
        perm = rng.permutation(n)
        net = Network("a", adj)
        net_p = Network("b", adj[np.ix_(perm, perm)])
        for net_i, a_i in ((net, alpha_vec), (net_p, alpha_vec[perm])):
            G_i = row_normalize(net_i)
            cov_i = CovariateBundle.build(0, 1, a_i[:, None], G_i)
            params = Parameters(gamma0=[0.0], gamma1=[1.0], gamma2=[0.0], beta_h=1.0, delta_beta=0.7)
            prof = solve_fixed_point(params, net_i, G_i, cov_i, tol=1e-12)
            if net_i is net:
                base = prof.p_star
            else:
                assert np.allclose(prof.p_star, base[perm], atol=1e-10)

    def test_complete_graph_symmetric_solution(self):
        n = 8
        adj = 1.0 - np.eye(n)
        net = Network("c", adj)
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((n, 0)), G)
        params = Parameters(gamma0=[0.4], gamma1=[], gamma2=[], beta_h=1.1, delta_beta=0.9)
        prof = solve_fixed_point(params, net, G, cov, p0=np.random.default_rng(0).random(n), tol=1e-12)
        assert np.max(prof.p_star) - np.min(prof.p_star) < 1e-10


class TestVerifyUniqueness:
    def test_certified_instance_agrees(self):
        rng = np.random.default_rng(17)
        n = 30
        adj = (rng.random((n, n)) < 0.12).astype(float)
        np.fill_diagonal(adj, 0.0)
        net = Network("u", adj)
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, rng.standard_normal((n, 1)), G)
        params = Parameters(gamma0=[0.0], gamma1=[1.0], gamma2=[0.0], beta_h=1.3, delta_beta=1.0)
        check = verify_uniqueness(params, net, G, cov, n_starts=100, seed=5)
        assert check.agree
        assert check.max_spread < 1e-7

    def test_constant_map_zero_spread(self):
        net, G, cov, params = build([(0, 1), (1, 0)], 2, beta_h=0.0, delta_beta=0.0, gamma0=0.2)
        check = verify_uniqueness(params, net, G, cov, n_starts=20, seed=1)
        assert check.max_spread == 0.0


class TestComparativeStatics:
    def setup_method(self):
        rng = np.random.default_rng(23)
        n = 20
        adj = (rng.random((n, n)) < 0.15).astype(float)
        np.fill_diagonal(adj, 0.0)
        self.net = Network("cs", adj)
        self.G = row_normalize(self.net)
        self.cov = CovariateBundle.build(0, 1, rng.standard_normal((n, 1)), self.G)
        self.params = Parameters(gamma0=[0.0], gamma1=[0.8], gamma2=[0.0], beta_h=1.0, delta_beta=0.0)

    def test_beta_l_up_raises_everywhere(self):
        res = comparative_statics_check(self.params, "beta_l_up", self.net, self.G, self.cov, delta=0.2)
        assert res.verdict
        assert np.all(res.diff >= -1e-10)

    def test_beta_h_up_lowers_everywhere(self):
        res = comparative_statics_check(self.params, "beta_h_up", self.net, self.G, self.cov, delta=0.2)
        assert res.verdict
        assert np.all(res.diff <= 1e-10)

    def test_zero_perturbation_zero_difference(self):
        res = comparative_statics_check(self.params, "beta_l_up", self.net, self.G, self.cov, delta=0.0)
        assert np.allclose(res.diff, 0.0, atol=1e-12)

    def test_norm_shift_signs_on_interior(self):
        params = Parameters(gamma0=[0.0], gamma1=[0.8], gamma2=[0.0], beta_h=0.9, delta_beta=0.6)
        for delta in (0.01, -0.01):
            res = comparative_statics_check(
                params, "norm_shift", self.net, self.G, self.cov, norm_delta=delta,
            )
            assert res.verdict is None
            assert res.match_fraction == 1.0

    def test_certificate_failure_raises(self):
        bad = self.params.replace(beta_h=3.9)
        with pytest.raises(CertificateError):
            comparative_statics_check(bad, "beta_l_up", self.net, self.G, self.cov)

    def test_unknown_perturbation(self):
        with pytest.raises(ValueError):
            comparative_statics_check(self.params, "sideways", self.net, self.G, self.cov)
