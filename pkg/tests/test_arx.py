import warnings
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from arxmix.arx import (
    ArxMode,
    RidgeFallbackWarning,
    VariancePrior,
    map_variance,
    mode_log_density,
    pooled_mle_variance,
    predict,
    weighted_least_squares,
)


def solve_normal_equations_exact(Phi, y, w):
    """Independent WLS oracle: exact rational Gaussian elimination on the
    normal equations, no numpy linear algebra involved."""
    n, r = Phi.shape
    P = [[Fraction(Phi[i, j]) for j in range(r)] for i in range(n)]
    Y = [Fraction(v) for v in y]
    W = [Fraction(v) for v in w]
    A = [
        [sum(W[k] * P[k][i] * P[k][j] for k in range(n)) for j in range(r)]
        for i in range(r)
    ]
    b = [sum(W[k] * P[k][i] * Y[k] for k in range(n)) for i in range(r)]
    for col in range(r):
        piv = max(range(col, r), key=lambda i: abs(A[i][col]))
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        for i in range(r):
            if i != col and A[i][col] != 0:
                f = A[i][col] / A[col][col]
                A[i] = [a - f * c for a, c in zip(A[i], A[col])]
                b[i] = b[i] - f * b[col]
    return np.array([float(b[i] / A[i][i]) for i in range(r)])


class TestPredict:
    def test_dynamics_a_intercept(self):
        # coefficients on [y_prev, u_prev, 1]; at the origin only the
        # intercept survives
        mode = ArxMode(theta=np.array([-0.4, 1.0, 1.5]), sigma=1.0)
        assert predict(mode, np.array([0.0, 0.0, 1.0])) == pytest.approx(1.5)

    def test_zero_map(self):
        mode = ArxMode(theta=np.zeros(3), sigma=1.0)
        assert predict(mode, np.array([3.0, -7.0, 1.0])) == 0.0

    def test_dynamics_b_point(self):
        mode = ArxMode(theta=np.array([0.5, -1.0, -0.5]), sigma=1.0)
        assert predict(mode, np.array([1.0, 1.0, 1.0])) == pytest.approx(-1.0)

    def test_dimension_mismatch(self):
        mode = ArxMode(theta=np.zeros(3), sigma=1.0)
        with pytest.raises(ValueError):
            predict(mode, np.array([1.0, 2.0]))

    def test_batch(self):
        mode = ArxMode(theta=np.array([2.0, 1.0]), sigma=1.0)
        out = predict(mode, np.array([[1.0, 1.0], [0.0, 1.0]]))
        np.testing.assert_allclose(out, [3.0, 1.0])


class TestModeLogDensity:
    def test_zero_residual_unit_sigma(self):
        mode = ArxMode(theta=np.array([1.0, 0.5]), sigma=1.0)
        phi = np.array([2.0, 1.0])
        ld = mode_log_density(mode, phi, y=2.5)
        assert ld == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)

    def test_one_sigma_point(self):
        sigma = 0.7
        mode = ArxMode(theta=np.array([0.0, 0.0]), sigma=sigma)
        ld = mode_log_density(mode, np.array([1.0, 1.0]), y=sigma)
        expected = -0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5
        assert ld == pytest.approx(expected, abs=1e-12)

    def test_against_direct_formula(self):
        # brute-force density evaluated at 50 decimal digits
        rng = np.random.default_rng(11)
        mpmath.mp.dps = 50
        for _ in range(100):
            r = rng.integers(1, 5)
            theta = rng.normal(size=r)
            sigma = float(rng.uniform(0.05, 3.0))
            phi = rng.normal(size=r)
            y = float(rng.normal(scale=2.0))
            mode = ArxMode(theta=theta, sigma=sigma)
            ours = float(np.exp(mode_log_density(mode, phi, y)))
            mu = mpmath.fsum(mpmath.mpf(t) * mpmath.mpf(p) for t, p in zip(theta, phi))
            dens = mpmath.exp(
                -((mpmath.mpf(y) - mu) ** 2) / (2 * mpmath.mpf(sigma) ** 2)
            ) / (mpmath.sqrt(2 * mpmath.pi) * mpmath.mpf(sigma))
            assert abs(ours - float(dens)) <= 1e-12 * max(float(dens), 1e-300)


class TestWeightedLeastSquares:
    def test_square_system_interpolates(self):
        rng = np.random.default_rng(0)
        Phi = rng.normal(size=(3, 3)) + np.eye(3) * 3
        y = rng.normal(size=3)
        theta = weighted_least_squares(Phi, y, np.ones(3))
        np.testing.assert_allclose(Phi @ theta, y, atol=1e-9)

    def test_one_hot_weight_fits_that_sample(self):
        rng = np.random.default_rng(1)
        Phi = rng.normal(size=(6, 2))
        y = rng.normal(size=6)
        w = np.zeros(6)
        w[3] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RidgeFallbackWarning)
            theta = weighted_least_squares(Phi, y, w)
        assert Phi[3] @ theta == pytest.approx(y[3], abs=1e-6)

    def test_matches_exact_normal_equations(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            Phi = rng.normal(size=(10, 3))
            y = rng.normal(size=10)
            w = rng.uniform(0.01, 2.0, size=10)
            ours = weighted_least_squares(Phi, y, w)
            exact = solve_normal_equations_exact(Phi, y, w)
            assert np.abs(ours - exact).max() < 1e-8

    def test_optimality_residual_orthogonality(self):
        rng = np.random.default_rng(5)
        Phi = rng.normal(size=(40, 4))
        y = rng.normal(size=40)
        w = rng.uniform(0, 1, size=40)
        theta = weighted_least_squares(Phi, y, w)
        grad = Phi.T @ (w * (y - Phi @ theta))
        scale = max(np.abs(Phi.T @ (w * y)).max(), 1.0)
        assert np.abs(grad).max() < 1e-6 * scale

    def test_is_exact_maximizer_of_weighted_loglik(self):
        # perturbing theta must never raise the weighted log-likelihood term
        rng = np.random.default_rng(9)
        Phi = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        w = rng.uniform(0, 1, size=30)
        sigma = 0.8
        theta = weighted_least_squares(Phi, y, w)

        def q_term(th):
            resid = y - Phi @ th
            return float(np.sum(w * (-0.5 * resid**2 / sigma**2)))

        base = q_term(theta)
        for _ in range(20):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            assert q_term(theta + 1e-3 * direction) <= base + 1e-12

    def test_rank_deficient_warns_and_solves(self):
        Phi = np.ones((5, 2))
        Phi[:, 1] = 2.0  # second column collinear with first
        y = np.arange(5.0)
        with pytest.warns(RidgeFallbackWarning):
            theta = weighted_least_squares(Phi, y, np.ones(5))
        assert np.isfinite(theta).all()

    def test_rejects_zero_weights(self):
        with pytest.raises(ValueError):
            weighted_least_squares(np.ones((3, 1)), np.ones(3), np.zeros(3))

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            weighted_least_squares(
                np.ones((3, 1)), np.ones(3), np.array([1.0, -0.5, 0.2])
            )


class TestMapVariance:
    def test_prior_only_value(self):
        prior = VariancePrior(v2=1.0, ybar=0.0, dim=1, strength=3.0)
        out = map_variance(np.zeros(4), np.zeros(4), prior, n_modes=1)
        assert out == pytest.approx(1.0 / 6.0)

    def test_strictly_positive_under_any_weights(self):
        rng = np.random.default_rng(2)
        prior = VariancePrior(v2=0.5, ybar=0.1)
        for _ in range(50):
            res = rng.normal(size=20)
            w = rng.uniform(0, 1, size=20)
            assert map_variance(res, w, prior, n_modes=3) > 0

    def test_against_direct_formula(self):
        rng = np.random.default_rng(3)
        mpmath.mp.dps = 50
        for _ in range(50):
            n = rng.integers(2, 30)
            res = rng.normal(size=n)
            w = rng.uniform(0, 1, size=n)
            v2 = float(rng.uniform(0.01, 4.0))
            n_modes = int(rng.integers(1, 5))
            dim = int(rng.integers(1, 4))
            prior = VariancePrior(v2=v2, ybar=0.0, dim=dim)
            ours = map_variance(res, w, prior, n_modes)
            v_s = mpmath.fsum(
                mpmath.mpf(wi) * mpmath.mpf(ri) ** 2 for wi, ri in zip(w, res)
            )
            denom = (
                mpmath.mpf(dim + 2)
                + mpmath.fsum(mpmath.mpf(wi) for wi in w)
                + dim
                + 2
            )
            expected = float((mpmath.mpf(v2) / n_modes + v_s) / denom)
            assert ours == pytest.approx(expected, rel=1e-12)

    def test_default_prior_strength_is_weakest(self):
        prior = VariancePrior(v2=1.0, ybar=0.0, dim=3)
        assert prior.strength == 5


class TestPooledMleVariance:
    def test_single_mode_is_mean_square(self):
        res = np.array([[1.0], [2.0], [3.0]])
        resp = np.ones((3, 1))
        assert pooled_mle_variance(res, resp) == pytest.approx(
            np.mean(res**2)
        )

    def test_constant_residual(self):
        c = 0.37
        res = np.full((10, 3), c)
        resp = np.random.default_rng(0).dirichlet(np.ones(3), size=10)
        assert pooled_mle_variance(res, resp) == pytest.approx(c**2)

    def test_against_direct_formula(self):
        rng = np.random.default_rng(4)
        mpmath.mp.dps = 50
        for _ in range(50):
            n, s = int(rng.integers(2, 20)), int(rng.integers(1, 4))
            res = rng.normal(size=(n, s))
            resp = rng.dirichlet(np.ones(s), size=n)
            ours = pooled_mle_variance(res, resp)
            num = mpmath.fsum(
                mpmath.mpf(resp[k, j]) * mpmath.mpf(res[k, j]) ** 2
                for k in range(n)
                for j in range(s)
            )
            den = mpmath.fsum(
                mpmath.mpf(resp[k, j]) for k in range(n) for j in range(s)
            )
            assert ours == pytest.approx(float(num / den), rel=1e-12)

    def test_normalized_responsibilities_denominator_is_n(self):
        rng = np.random.default_rng(5)
        n, s = 100, 3
        resp = rng.dirichlet(np.ones(s), size=n)
        assert abs(resp.sum() - n) < 1e-9
        res = np.ones((n, s)) * 2.0
        assert pooled_mle_variance(res, resp) == pytest.approx(4.0, abs=1e-9)


def test_arx_mode_validation():
    with pytest.raises(ValueError):
        ArxMode(theta=np.array([1.0, np.inf]), sigma=1.0)
    with pytest.raises(ValueError):
        ArxMode(theta=np.array([1.0]), sigma=0.0)
