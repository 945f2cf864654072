import math

import numpy as np
import pytest
from scipy import stats

from rbcml.breaking import expected_kappa, kappa_stats, position_k_breaking, uniform_breaking, weighted_union
from rbcml.model import CustomSymmetric, Gaussian, PlackettLuce, Profile
from rbcml.objective import (
    DivergenceError,
    cll,
    cll_grad,
    cll_hessian,
    maximize_cll,
    uniform_weights,
    weights_from_text,
    weights_to_text,
    wg_product,
)

PL = PlackettLuce()
GAUSS = Gaussian()
CUSTOM = CustomSymmetric(stats.norm.pdf, stats.norm.cdf)

EXAMPLE_W = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]])


def example_kappa():
    g = weighted_union([(1 / 3, position_k_breaking(3, 1)), (1 / 2, position_k_breaking(3, 2))])
    return kappa_stats(g, Profile.from_rankings([[0, 1, 2], [2, 1, 0]]))


def random_instance(rng, m):
    kappa = rng.uniform(0.05, 1.0, (m, m))
    np.fill_diagonal(kappa, 0.0)
    w = rng.uniform(0.1, 2.0, (m, m))
    np.fill_diagonal(w, 0.0)
    return kappa, w, rng.uniform(-3, 3, m)


def fd_grad(family, kappa, w, theta, h=1e-5):
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.size - 1)
    for i in range(theta.size - 1):
        e = np.zeros(theta.size)
        e[i] = h
        out[i] = (cll(family, kappa, w, theta + e) - cll(family, kappa, w, theta - e)) / (2 * h)
    return out


class TestCll:
    def test_example_value(self):
        value = cll(PL, example_kappa(), EXAMPLE_W, np.zeros(3))
        assert value == pytest.approx(-1.25 * math.log(2), abs=1e-12)
        assert value == pytest.approx(-0.866434, abs=1e-6)

    def test_empty_sum(self):
        kappa = np.zeros((3, 3))
        kappa[0, 2] = 0.7
        w = uniform_weights(3)
        w[0, 2] = 0.0
        assert cll(PL, kappa, w, [1.0, 2.0, 0.0]) == 0.0

    def test_gauge_shift(self):
        kappa, w, theta = random_instance(np.random.default_rng(1), 4)
        for fam in (PL, GAUSS):
            assert cll(fam, kappa, w, theta + 2.5) == pytest.approx(cll(fam, kappa, w, theta), abs=1e-12)

    def test_pl_fast_path_matches_generic(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            kappa, w, theta = random_instance(rng, int(rng.integers(2, 7)))
            assert cll(PL, kappa, w, theta) == pytest.approx(cll(PL, kappa, w, theta, generic=True), abs=1e-10)
            np.testing.assert_allclose(cll_grad(PL, kappa, w, theta), cll_grad(PL, kappa, w, theta, generic=True),
                                       atol=1e-10)

    def test_concave_along_segments(self):
        rng = np.random.default_rng(3)
        for fam in (PL, GAUSS):
            for _ in range(30):
                kappa, w, a = random_instance(rng, 4)
                b = rng.uniform(-3, 3, 4)
                lam = rng.uniform(0.01, 0.99)
                mid = cll(fam, kappa, w, lam * a + (1 - lam) * b)
                assert mid >= lam * cll(fam, kappa, w, a) + (1 - lam) * cll(fam, kappa, w, b) - 1e-12


class TestGradient:
    def test_example_first_order_conditions(self):
        grad = cll_grad(PL, example_kappa(), EXAMPLE_W, [0.0, math.log(1.5), 0.0])
        np.testing.assert_allclose(grad, 0.0, atol=1e-10)

    def test_symmetric_situation(self):
        kappa = np.full((4, 4), 0.3)
        np.fill_diagonal(kappa, 0.0)
        for fam in (PL, GAUSS, CUSTOM):
            np.testing.assert_allclose(cll_grad(fam, kappa, uniform_weights(4), np.zeros(4)), 0.0, atol=1e-12)

    @pytest.mark.parametrize("family", [PL, GAUSS, CUSTOM], ids=["pl", "gaussian", "custom"])
    def test_finite_differences(self, family):
        rng = np.random.default_rng(4)
        for _ in range(20):
            kappa, w, theta = random_instance(rng, 4)
            an = cll_grad(family, kappa, w, theta)
            fd = fd_grad(family, kappa, w, theta)
            assert np.max(np.abs(an - fd)) <= 1e-6 * np.max(np.abs(an))


class TestHessian:
    def test_two_alternatives(self):
        kappa = np.array([[0.0, 0.5], [0.5, 0.0]])
        h = cll_hessian(PL, kappa, uniform_weights(2), np.zeros(2))
        assert h.shape == (1, 1)
        assert h[0, 0] == pytest.approx(-0.25, abs=1e-15)

    @pytest.mark.parametrize("family", [PL, GAUSS, CUSTOM], ids=["pl", "gaussian", "custom"])
    def test_symmetric_negative_definite(self, family):
        rng = np.random.default_rng(5)
        for _ in range(10):
            kappa, w, theta = random_instance(rng, 4)
            h = cll_hessian(family, kappa, w, theta)
            np.testing.assert_allclose(h, h.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(h) < 0)

    def test_full_rows_sum_to_zero(self):
        kappa, w, theta = random_instance(np.random.default_rng(6), 5)
        for fam in (PL, GAUSS):
            h = cll_hessian(fam, kappa, w, theta, full=True)
            np.testing.assert_allclose(h.sum(axis=1), 0.0, atol=1e-12)

    @pytest.mark.parametrize("family", [PL, GAUSS], ids=["pl", "gaussian"])
    def test_analytic_matches_gradient_differences(self, family):
        kappa, w, theta = random_instance(np.random.default_rng(7), 4)
        h = cll_hessian(family, kappa, w, theta)
        step = 1e-5
        fd = np.zeros_like(h)
        for l in range(3):
            e = np.zeros(4)
            e[l] = step
            fd[:, l] = (cll_grad(family, kappa, w, theta + e) - cll_grad(family, kappa, w, theta - e)) / (2 * step)
        np.testing.assert_allclose(h, fd, rtol=1e-6, atol=1e-9)


class TestConnectivity:
    def test_example(self):
        rep = wg_product(EXAMPLE_W, example_kappa())
        assert rep.weakly_connected and rep.strongly_connected

    def test_isolated_alternative(self):
        w = uniform_weights(3)
        w[:, 2] = w[2, :] = 0.0
        rep = wg_product(w, example_kappa())
        assert not rep.weakly_connected
        assert rep.components == [[0, 1], [2]]

    def test_dominant_alternative(self):
        kappa = kappa_stats(uniform_breaking(3), Profile.from_rankings([[0, 1, 2]]))
        rep = wg_product(uniform_weights(3), kappa)
        assert rep.weakly_connected and not rep.strongly_connected


class TestMaximize:
    def test_example(self):
        fit = maximize_cll(PL, example_kappa(), EXAMPLE_W)
        assert fit.converged and fit.gradient_norm <= 1e-8
        np.testing.assert_allclose(fit.theta, [0.0, math.log(1.5), 0.0], atol=1e-8)

    def test_two_alternatives_balanced(self):
        kappa = kappa_stats(uniform_breaking(2), Profile.from_rankings([[0, 1], [1, 0]] * 3))
        fit = maximize_cll(PL, kappa, uniform_weights(2))
        np.testing.assert_allclose(fit.theta, 0.0, atol=1e-12)

    def test_population_recovery(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            theta0 = np.append(rng.uniform(-2, 2, 3), 0.0)
            kbar = expected_kappa(uniform_breaking(4), PL, theta0)
            fit = maximize_cll(PL, kbar, uniform_weights(4))
            np.testing.assert_allclose(fit.theta, theta0, atol=1e-6)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(9)
        kappa, w, _ = random_instance(rng, 4)
        for fam in (PL, GAUSS):
            base = maximize_cll(fam, kappa, w)
            scaled = maximize_cll(fam, 3.0 * kappa, 0.2 * w)
            np.testing.assert_allclose(scaled.theta, base.theta, atol=1e-8)
            assert scaled.objective == pytest.approx(0.6 * base.objective, rel=1e-10)

    def test_component_shift_invariance(self):
        kappa, w, theta = random_instance(np.random.default_rng(10), 4)
        w[:2, 2:] = w[2:, :2] = 0.0
        assert wg_product(w, kappa).components == [[0, 1], [2, 3]]
        shifted = theta.copy()
        shifted[:2] += 1.7
        for fam in (PL, GAUSS):
            assert cll(fam, kappa, w, shifted) == pytest.approx(cll(fam, kappa, w, theta), abs=1e-10)

    def test_unbounded_detected(self):
        kappa = kappa_stats(uniform_breaking(3), Profile.from_rankings([[0, 1, 2]]))
        with pytest.warns(RuntimeWarning, match="strongly connected"):
            with pytest.raises(DivergenceError):
                maximize_cll(PL, kappa, uniform_weights(3))

    def test_non_convergence_is_reported(self):
        kappa, w, _ = random_instance(np.random.default_rng(11), 4)
        fit = maximize_cll(GAUSS, kappa, w, max_iter=1)
        assert not fit.converged and fit.iterations == 1


def test_weights_text_round_trip():
    text = weights_to_text(EXAMPLE_W)
    assert text.splitlines()[0] == "3"
    np.testing.assert_array_equal(weights_from_text(text), EXAMPLE_W)
    with pytest.raises(ValueError):
        weights_from_text("3\n1 1 2.0\n")
