import math

import numpy as np
import pytest
from scipy.special import expit

from peernorms.graph import Network, row_normalize, sigma_profile
from peernorms.model import (
    LOGISTIC,
    STANDARD_NORMAL,
    CovariateBundle,
    ModelFamily,
    Parameters,
    alpha,
    best_response,
    certificate_for,
    contraction_bound,
    index_jacobian,
    jacobian_wrt_p,
    linear_predictor,
    peer_column_jacobians,
    peer_columns,
    pm_one_coding_index,
    regressor_matrix,
)

ALL_FAMILIES = (
    ModelFamily.het_conformity(),
    ModelFamily.hom_conformity(),
    ModelFamily.spillover(),
    ModelFamily.generalized(0.8, -0.4, 0.3),
    ModelFamily.aggregate_conformity(),
    ModelFamily.aggregate_conformity(weights="adjacency"),
    ModelFamily.linear_conformity(),
)


def make_instance(seed=0, n=12, p_link=0.3, K=2, M=1):
    rng = np.random.default_rng(seed)
    adj = (rng.random((n, n)) < p_link).astype(float)
    np.fill_diagonal(adj, 0.0)
    net = Network(f"net{seed}", adj)
    G = row_normalize(net)
    X = rng.standard_normal((n, K))
    cov = CovariateBundle.build(0, M, X, G)
    return net, G, cov, rng


def params_for(family, gamma0=(0.1,), gamma1=(0.3, -0.2), gamma2=(0.1, 0.2), beta_h=0.6, delta_beta=0.4):
    if family.tag == "hom_conformity":
        delta_beta = 0.0
    return Parameters(
        gamma0=np.asarray(gamma0), gamma1=np.asarray(gamma1), gamma2=np.asarray(gamma2),
        beta_h=beta_h, delta_beta=delta_beta, family=family,
    )


class TestLinks:
    def test_max_densities(self):
        assert LOGISTIC.max_density == 0.25
        assert STANDARD_NORMAL.max_density == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-16)

    def test_pdf_positive_and_cdf_increasing(self):
        u = np.linspace(-8, 8, 201)
        for link in (LOGISTIC, STANDARD_NORMAL):
            assert np.all(link.pdf(u) > 0)
            assert np.all(np.diff(link.cdf(u)) > 0)

    def test_dpdf_matches_finite_difference(self):
        u = np.linspace(-3, 3, 41)
        h = 1e-6
        for link in (LOGISTIC, STANDARD_NORMAL):
            fd = (link.pdf(u + h) - link.pdf(u - h)) / (2 * h)
            assert np.allclose(link.dpdf(u), fd, atol=1e-8)


class TestParameters:
    def test_beta_l_is_derived(self):
        p = params_for(ModelFamily.het_conformity(), beta_h=1.0, delta_beta=2.0)
        assert p.beta_l == 3.0

    def test_hom_requires_zero_delta(self):
        with pytest.raises(ValueError):
            Parameters(gamma0=[0.0], gamma1=[], gamma2=[], beta_h=1.0, delta_beta=0.5,
                       family=ModelFamily.hom_conformity())

    def test_generalized_requires_betas(self):
        with pytest.raises(ValueError):
            ModelFamily(tag="generalized")

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            ModelFamily(tag="mystery")


class TestAlpha:
    def test_all_zero(self):
        net, G, cov, _ = make_instance()
        p = params_for(ModelFamily.het_conformity(), gamma0=(0.0,), gamma1=(0.0, 0.0), gamma2=(0.0, 0.0))
        assert np.allclose(alpha(cov, p), 0.0)

    def test_intercept_only(self):
        net, G, cov, _ = make_instance(K=2)
        p = params_for(ModelFamily.het_conformity(), gamma0=(1.3,), gamma1=(0.0, 0.0), gamma2=(0.0, 0.0))
        assert np.allclose(alpha(cov, p), 1.3)

    def test_hand_arithmetic(self):
        net = Network.from_edges("two", 2, [(0, 1), (1, 0)])
        G = row_normalize(net)
        X = np.array([[2.0], [-1.0]])
        cov = CovariateBundle.build(0, 1, X, G)
        p = Parameters(gamma0=[0.0], gamma1=[0.5], gamma2=[0.3])
        assert np.allclose(alpha(cov, p), [0.7, 0.1], atol=1e-15)

    def test_dimension_mismatch(self):
        net, G, cov, _ = make_instance(K=2)
        bad = Parameters(gamma0=[0.0], gamma1=[0.5], gamma2=[0.3])
        with pytest.raises(ValueError):
            alpha(cov, bad)


class TestBestResponse:
    def test_isolated_node_gets_cdf_alpha(self):
        net = Network.from_edges("iso", 1, [])
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((1, 0)), G)
        for family in ALL_FAMILIES:
            p = Parameters(gamma0=[0.0], gamma1=[], gamma2=[], beta_h=0.9, delta_beta=0.2
                           if family.tag != "hom_conformity" else 0.0, family=family)
            out = best_response(np.array([0.3]), p, net, G, cov)
            assert out[0] == pytest.approx(0.5, abs=1e-15)

    def test_single_friend_values(self):
        net = Network.from_edges("pair", 2, [(0, 1)])
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((2, 0)), G)
        beliefs = np.array([0.0, 1.0])
        p1 = Parameters(gamma0=[0.0], gamma1=[], gamma2=[], beta_h=1.0, delta_beta=0.0)
        out = best_response(beliefs, p1, net, G, cov)
        assert out[0] == pytest.approx(expit(0.5), abs=1e-12)
        assert out[0] == pytest.approx(0.62246, abs=5e-6)
        p2 = Parameters(gamma0=[0.0], gamma1=[], gamma2=[], beta_h=1.0, delta_beta=2.0)
        out = best_response(beliefs, p2, net, G, cov)
        assert out[0] == pytest.approx(expit(1.5), abs=1e-12)
        assert out[0] == pytest.approx(0.81757, abs=5e-6)

    def test_output_strictly_interior(self):
        net, G, cov, rng = make_instance(seed=4)
        for family in ALL_FAMILIES:
            p = params_for(family)
            out = best_response(rng.random(net.n), p, net, G, cov)
            assert np.all(out > 0) and np.all(out < 1)

    def test_matrix_beliefs_match_columns(self):
        net, G, cov, rng = make_instance(seed=9)
        params = params_for(ModelFamily.het_conformity())
        P = rng.random((net.n, 4))
        out = best_response(P, params, net, G, cov)
        for k in range(4):
            col = best_response(P[:, k], params, net, G, cov)
            assert np.allclose(out[:, k], col, atol=1e-15)


class TestJacobian:
    @pytest.mark.parametrize("family", ALL_FAMILIES, ids=lambda f: f.tag + ("_adj" if f.weights == "adjacency" else ""))
    @pytest.mark.parametrize("link", [LOGISTIC, STANDARD_NORMAL], ids=lambda l: l.tag)
    def test_matches_finite_differences(self, family, link):
        net, G, cov, rng = make_instance(seed=7, n=10)
        params = params_for(family).replace(link=link)
        p = rng.random(net.n)
        J = jacobian_wrt_p(p, params, net, G, cov)
        h = 1e-6
        for j in range(net.n):
            e = np.zeros(net.n)
            e[j] = h
            fd = (best_response(p + e, params, net, G, cov) - best_response(p - e, params, net, G, cov)) / (2 * h)
            assert np.max(np.abs(J[:, j] - fd)) < 1e-6

    def test_delta_zero_reduces_to_norm_slope(self):
        net, G, cov, rng = make_instance(seed=2)
        params = params_for(ModelFamily.het_conformity(), beta_h=0.8, delta_beta=0.0)
        p = rng.random(net.n)
        J = jacobian_wrt_p(p, params, net, G, cov)
        f = params.link.pdf(linear_predictor(p, params, net, G, cov))
        expected = f[:, None] * (0.8 * np.asarray(G.weights)) * net.nonisolated()[:, None]
        assert np.allclose(J, expected, atol=1e-14)

    def test_single_friend_entry_independent_of_belief(self):
        net = Network.from_edges("pair", 2, [(0, 1)])
        G = row_normalize(net)
        params = params_for(ModelFamily.het_conformity(), beta_h=0.7, delta_beta=0.5)
        for pj in (0.1, 0.5, 0.9):
            J_idx = index_jacobian(np.array([0.0, pj]), params, net, G)
            assert J_idx[0, 1] == pytest.approx(0.7 + 0.5 / 2.0, abs=1e-14)

    def test_isolated_row_is_zero(self):
        net = Network.from_edges("mix", 3, [(0, 1)])
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((3, 0)), G)
        params = Parameters(gamma0=[0.2], gamma1=[], gamma2=[], beta_h=1.0, delta_beta=0.5)
        J = jacobian_wrt_p(np.array([0.4, 0.6, 0.3]), params, net, G, cov)
        assert np.allclose(J[1], 0.0) and np.allclose(J[2], 0.0)

    def test_index_jacobian_is_coefficient_sum_of_column_jacobians(self):
        net, G, cov, rng = make_instance(seed=13)
        p = rng.random(net.n)
        for family in ALL_FAMILIES:
            params = params_for(family)
            Bs = peer_column_jacobians(p, family, net, G)
            if family.tag == "generalized":
                coefs = (family.beta1, family.beta2, family.beta3)
            elif family.tag == "hom_conformity":
                coefs = (params.beta_h,)
            else:
                coefs = (params.beta_h, params.delta_beta)
            combo = sum(c * B for c, B in zip(coefs, Bs))
            assert np.allclose(index_jacobian(p, params, net, G), combo, atol=1e-13)


class TestContractionBound:
    def test_paper_logistic_example(self):
        p = Parameters(gamma0=[0.0], gamma1=[], gamma2=[], beta_h=1.0, delta_beta=1.0)
        cert = contraction_bound(p, LOGISTIC)
        assert cert.bound == pytest.approx(0.625, abs=1e-15)
        assert cert.satisfied

    def test_normal_boundary_not_satisfied(self):
        p = Parameters(
            gamma0=[0.0], gamma1=[], gamma2=[],
            beta_h=STANDARD_NORMAL.bound_threshold, delta_beta=0.0, link=STANDARD_NORMAL,
        )
        cert = contraction_bound(p, STANDARD_NORMAL)
        assert cert.bound == pytest.approx(1.0, abs=1e-15)
        assert not cert.satisfied

    def test_zero_parameters(self):
        p = Parameters(gamma0=[0.0], gamma1=[], gamma2=[])
        cert = contraction_bound(p, LOGISTIC)
        assert cert.bound == 0.0 and cert.satisfied

    @pytest.mark.parametrize("family", ALL_FAMILIES, ids=lambda f: f.tag + ("_adj" if f.weights == "adjacency" else ""))
    def test_jacobian_norm_below_bound(self, family):
        net, G, cov, rng = make_instance(seed=21, n=14)
        params = params_for(family, beta_h=0.5, delta_beta=0.3)
        cert = certificate_for(params, net)
        for _ in range(5):
            p = rng.random(net.n)
            J = jacobian_wrt_p(p, params, net, G, cov)
            assert np.max(np.abs(J).sum(axis=1)) <= cert.bound + 1e-12


class TestRegressorMatrix:
    def test_isolated_rows(self):
        net = Network.from_edges("mix", 3, [(0, 1)])
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((3, 0)), G)
        K = regressor_matrix(np.full(3, 0.4), net, G, cov)
        assert K[1, -2] == 0.0 and K[1, -1] == 0.0

    def test_single_friend_columns(self):
        net = Network.from_edges("pair", 2, [(0, 1)])
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((2, 0)), G)
        K = regressor_matrix(np.array([0.9, 0.5]), net, G, cov)
        assert K[0, -2] == pytest.approx(0.0, abs=1e-15)  # norm term at pbar = 1/2
        assert K[0, -1] == pytest.approx(0.25, abs=1e-15)  # half of sigma = p(1-p) + p^2

    def test_index_identity_on_random_instances(self):
        for seed in range(5):
            net, G, cov, rng = make_instance(seed=seed)
            params = params_for(ModelFamily.het_conformity(), beta_h=0.7, delta_beta=0.9)
            p = rng.random(net.n)
            K = regressor_matrix(p, net, G, cov)
            theta = np.concatenate([params.gamma0, params.gamma1, params.gamma2,
                                    [params.beta_h, params.delta_beta]])
            assert np.allclose(K @ theta, linear_predictor(p, params, net, G, cov), atol=1e-12)

    def test_shape(self):
        net, G, cov, _ = make_instance(K=2, M=1)
        K = regressor_matrix(np.full(net.n, 0.5), net, G, cov)
        assert K.shape == (net.n, 1 + 2 * 2 + 2)


class TestFamilyAlgebra:
    def test_het_with_zero_delta_equals_hom(self):
        net, G, cov, rng = make_instance(seed=30)
        p = rng.random(net.n)
        het = params_for(ModelFamily.het_conformity(), beta_h=0.9, delta_beta=0.0)
        hom = params_for(ModelFamily.hom_conformity(), beta_h=0.9)
        assert np.allclose(
            linear_predictor(p, het, net, G, cov),
            linear_predictor(p, hom, net, G, cov),
            atol=1e-12,
        )

    def test_generalized_reproduces_het(self):
        net, G, cov, rng = make_instance(seed=31)
        p = rng.random(net.n)
        bh, db = 0.8, 0.6
        het = params_for(ModelFamily.het_conformity(), beta_h=bh, delta_beta=db)
        gen = params_for(ModelFamily.generalized(bh, -bh / 2.0, db / 2.0), beta_h=0.0, delta_beta=0.0)
        assert np.allclose(
            linear_predictor(p, het, net, G, cov),
            linear_predictor(p, gen, net, G, cov),
            atol=1e-14,
        )

    def test_generalized_reproduces_spillover(self):
        net, G, cov, rng = make_instance(seed=32)
        p = rng.random(net.n)
        bh, bl = 0.4, 0.9
        spill = params_for(ModelFamily.spillover(), beta_h=bh, delta_beta=bl - bh)
        gen = params_for(ModelFamily.generalized(bl + bh, -bl, 0.0), beta_h=0.0, delta_beta=0.0)
        assert np.allclose(
            linear_predictor(p, spill, net, G, cov),
            linear_predictor(p, gen, net, G, cov),
            atol=1e-14,
        )

    def test_homogeneous_conformity_vs_spillover_slope_equality(self):
        # with beta_conf = 2 beta_spill the two indices differ by a constant in pbar
        net, G, cov, rng = make_instance(seed=33, n=16, p_link=0.5)
        beta_spill = 0.45
        conf = params_for(ModelFamily.hom_conformity(), beta_h=2 * beta_spill)
        spill = params_for(ModelFamily.spillover(), beta_h=beta_spill, delta_beta=0.0)
        nonisolated = net.nonisolated().astype(bool)
        diffs = []
        for _ in range(6):
            p = rng.random(net.n)
            diff = (
                linear_predictor(p, conf, net, G, cov) - linear_predictor(p, spill, net, G, cov)
            )[nonisolated]
            diffs.append(diff)
        stacked = np.concatenate(diffs)
        assert np.max(np.abs(stacked - stacked[0])) < 1e-12

    def test_heterogeneous_counterexample_on_path(self):
        # no spillover reparameterization can match the heterogeneous conformity
        # index on an undirected 3-node path once delta_beta != 0
        net = Network.from_edges("path", 3, [(0, 1), (1, 2)], symmetrize=True)
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((3, 0)), G)
        conf = Parameters(gamma0=[0.0], gamma1=[], gamma2=[], beta_h=0.5, delta_beta=1.0)
        grid = [np.array([a, 0.5, b]) for a in np.linspace(0.05, 0.95, 7) for b in np.linspace(0.05, 0.95, 7)]
        conf_idx = np.array([linear_predictor(p, conf, net, G, cov)[1] for p in grid])
        best = np.inf
        for b1 in np.linspace(-2.0, 2.0, 41):
            for b2 in np.linspace(-2.0, 2.0, 41):
                pbar = np.array([0.5 * (p[0] + p[2]) for p in grid])
                spill_idx = b1 * pbar + b2
                best = min(best, np.max(np.abs(conf_idx - spill_idx)))
        assert best > 1e-6

    def test_pm_one_coding_not_identified(self):
        # equal beta_h + beta_l plus a compensating intercept gives identical
        # indices on a symmetric instance: the pair is not separately identified
        net = Network.from_edges("tri", 3, [(0, 1), (0, 2), (1, 2)], symmetrize=True)
        G = row_normalize(net)
        cov = CovariateBundle.build(0, 1, np.zeros((3, 0)), G)
        c = 0.4
        p = np.full(3, c)
        sig = sigma_profile(np.asarray(G.weights), p)[0]
        pair_a = Parameters(gamma0=[0.3], gamma1=[], gamma2=[], beta_h=0.8, delta_beta=0.4)
        pair_b_bh, pair_b_bl = 0.5, 1.5  # same sum 2.0, different split
        shift = 0.5 * ((pair_a.beta_l - pair_a.beta_h) - (pair_b_bl - pair_b_bh)) * (1.0 + sig)
        pair_b = Parameters(
            gamma0=[0.3 + shift / 2.0], gamma1=[], gamma2=[],
            beta_h=pair_b_bh, delta_beta=pair_b_bl - pair_b_bh,
        )
        idx_a = pm_one_coding_index(p, pair_a, net, G, cov)
        idx_b = pm_one_coding_index(p, pair_b, net, G, cov)
        assert pair_a.beta_h != pair_b.beta_h
        assert np.allclose(idx_a, idx_b, atol=1e-12)

    def test_peer_columns_reproduce_social_term(self):
        net, G, cov, rng = make_instance(seed=34)
        p = rng.random(net.n)
        for family in ALL_FAMILIES:
            params = params_for(family)
            cols, names = peer_columns(p, family, net, G)
            if family.tag == "generalized":
                coefs = np.array([family.beta1, family.beta2, family.beta3])
            elif family.tag == "hom_conformity":
                coefs = np.array([params.beta_h])
            else:
                coefs = np.array([params.beta_h, params.delta_beta])
            social = linear_predictor(p, params, net, G, cov) - alpha(cov, params)
            assert np.allclose(cols @ coefs, social, atol=1e-13), family.tag
