"""Penalized logistic solver checked against a standalone IRLS and KKT conditions."""

import numpy as np
import pytest

from sgsdesign.metrics import auc_wilcoxon
from sgsdesign.pglm import (
    PenaltySpec,
    coefficient_covariance,
    cv_select_lambda,
    fit,
    fit_cv,
    fit_path,
    kkt_residuals,
    lambda_grid,
    lambda_max,
    model_from_json,
    model_to_json,
    negative_log_likelihood,
    nll_gradient,
    predict_probabilities,
    stratified_folds,
)


def irls(X, y, iters=100):
    """Plain Newton-Raphson for unpenalized logistic regression."""
    D = np.column_stack([np.ones(len(y)), X])
    theta = np.zeros(D.shape[1])
    for _ in range(iters):
        mu = 1 / (1 + np.exp(-D @ theta))
        H = D.T @ (D * (mu * (1 - mu))[:, None])
        step = np.linalg.solve(H, D.T @ (y - mu))
        theta += step
        if np.max(np.abs(step)) < 1e-13:
            break
    return theta


def logistic_data(n, p, seed, density=0.5, shift=-1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p) * (rng.random(p) < density)
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ beta + shift)))).astype(int)
    return X, y, beta


class TestIRLSOracle:
    def test_two_point_hand_fit(self):
        # one x=0 row per class and one x=1 row per class with counts 1:3
        X = np.array([[0.0], [0.0], [1.0], [1.0], [1.0], [1.0]])
        y = np.array([1, 0, 1, 1, 1, 0])
        theta = irls(X, y)
        assert theta[0] == pytest.approx(0.0, abs=1e-12)
        assert theta[1] == pytest.approx(np.log(3.0), abs=1e-12)

    @pytest.mark.parametrize("norm", ["L1", "L2"])
    @pytest.mark.parametrize("seed", range(5))
    def test_lambda_zero_matches(self, norm, seed):
        X, y, _ = logistic_data(300, 6, seed)
        oracle = irls(X, y)
        r = fit(X, y, PenaltySpec(norm, 0.0))
        assert r.converged
        assert r.intercept == pytest.approx(oracle[0], abs=1e-6)
        np.testing.assert_allclose(r.coefficients, oracle[1:], atol=1e-6)

    def test_unstandardized_matches(self):
        X, y, _ = logistic_data(250, 4, 11)
        X = X * [1, 10, 0.1, 3]
        oracle = irls(X, y)
        r = fit(X, y, PenaltySpec("L1", 0.0), standardize=False)
        np.testing.assert_allclose(np.r_[r.intercept, r.coefficients], oracle, atol=1e-6)


class TestKKT:
    @pytest.mark.parametrize("seed", range(8))
    def test_lasso_kkt(self, seed):
        X, y, _ = logistic_data(200 + 30 * seed, 5 + 3 * seed, seed)
        lmax = lambda_max(X, y)
        for frac in (0.7, 0.2, 0.03):
            r = fit(X, y, PenaltySpec("L1", frac * lmax))
            g0, viol = kkt_residuals(r, X, y)
            assert g0 < 1e-5 and viol.max() < 1e-5

    def test_lambda_max_zeroes_everything(self):
        X, y, _ = logistic_data(300, 8, 2)
        lmax = lambda_max(X, y)
        r = fit(X, y, PenaltySpec("L1", lmax * 1.0001))
        assert np.all(r.coefficients == 0)
        assert r.intercept == pytest.approx(np.log(y.mean() / (1 - y.mean())), abs=1e-6)
        r = fit(X, y, PenaltySpec("L1", lmax * 0.95))
        assert np.any(r.coefficients != 0)

    def test_unpenalized_column_survives(self):
        rng = np.random.default_rng(3)
        n = 400
        z = rng.integers(0, 2, n).astype(float)
        X = np.column_stack([rng.normal(size=(n, 5)), z])
        y = (rng.random(n) < np.where(z == 1, 0.6, 0.1)).astype(int)
        pf = np.r_[np.ones(5), 0.0]
        lmax = lambda_max(X, y, pf)
        for lam in (10 * lmax, lmax, 0.3 * lmax):
            r = fit(X, y, PenaltySpec("L1", lam, pf))
            assert r.coefficients[-1] > 0.5
            g0, viol = kkt_residuals(r, X, y)
            assert viol.max() < 1e-5
        big = fit(X, y, PenaltySpec("L1", 10 * lmax, pf))
        assert np.all(big.coefficients[:5] == 0)

    def test_ridge_large_lambda_shrinks(self):
        X, y, _ = logistic_data(300, 4, 4)
        r = fit(X, y, PenaltySpec("L2", 1e9))
        assert np.max(np.abs(r.coefficients)) < 1e-5
        assert r.intercept == pytest.approx(np.log(y.mean() / (1 - y.mean())), abs=1e-4)


class TestGradient:
    def test_finite_differences_50_instances(self):
        rng = np.random.default_rng(7)
        h = 1e-5
        worst = 0.0
        for _ in range(50):
            n, p = int(rng.integers(5, 40)), int(rng.integers(1, 6))
            X = rng.normal(size=(n, p))
            y = rng.integers(0, 2, n)
            b0, beta = float(rng.normal()), rng.normal(size=p)
            g0, g = nll_gradient(X, y, b0, beta)
            f = lambda a, b: negative_log_likelihood(X, y, a, b)
            fd0 = (f(b0 + h, beta) - f(b0 - h, beta)) / (2 * h)
            fd = np.array([(f(b0, beta + h * e) - f(b0, beta - h * e)) / (2 * h)
                           for e in np.eye(p)])
            analytic = np.r_[g0, g]
            numeric = np.r_[fd0, fd]
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1.0)
            worst = max(worst, rel.max())
        assert worst < 1e-6

    def test_objective_reported(self):
        X, y, _ = logistic_data(200, 5, 5)
        lam = 0.1 * lambda_max(X, y)
        r = fit(X, y, PenaltySpec("L1", lam))
        Xs = (X - r.center) / r.scale
        bs = r.coefficients * r.scale
        b0s = r.intercept + r.coefficients @ r.center
        expected = negative_log_likelihood(Xs, y, b0s, bs) + lam * np.abs(bs).sum()
        assert r.objective == pytest.approx(expected, rel=1e-9)


class TestPath:
    def test_continuity(self):
        X, y, _ = logistic_data(500, 6, 8, density=1.0)
        lmax = lambda_max(X, y)
        lams = lambda_grid(lmax, 200, 1e-3)
        path = np.array([r.coefficients for r in fit_path(X, y, lams)])
        steps = np.abs(np.diff(path, axis=0)).max(axis=1)
        for k in range(1, steps.size - 1):
            neighbours = max(steps[k - 1], steps[k + 1], 1e-3)
            assert steps[k] <= 10 * neighbours

    def test_path_matches_cold_fits(self):
        X, y, _ = logistic_data(300, 5, 9)
        lams = lambda_grid(lambda_max(X, y), 8, 1e-2)
        for lam, warm in zip(lams, fit_path(X, y, lams)):
            cold = fit(X, y, PenaltySpec("L1", lam))
            np.testing.assert_allclose(warm.coefficients, cold.coefficients, atol=1e-5)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            fit(np.ones((5, 2)), np.zeros(5))

    def test_bad_penalty(self):
        with pytest.raises(ValueError):
            PenaltySpec("L3")
        with pytest.raises(ValueError):
            PenaltySpec("L1", -1.0)
        with pytest.raises(ValueError):
            fit(np.ones((4, 2)), [0, 1, 0, 1], PenaltySpec("L1", 0.1, [1, 1, 1]))


class TestPrediction:
    def test_zero_model(self):
        X, y, _ = logistic_data(50, 3, 1)
        r = fit(X, y, PenaltySpec("L1", 10 * lambda_max(X, y)))
        r.intercept = 0.0
        assert np.all(predict_probabilities(r, X) == 0.5)

    def test_offset_columns_flagged_not_thrown(self):
        # a large column offset makes cyclic updates crawl; the fit reports it
        X, y, _ = logistic_data(250, 4, 11)
        X = X * [1, 10, 0.1, 3] + [0, 5, -2, 1]
        r = fit(X, y, PenaltySpec("L1", 0.0), standardize=False, max_iter=50)
        assert not r.converged
        assert np.all(np.isfinite(r.coefficients))

    def test_monotone_in_positive_feature(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 3))
        y = (rng.random(300) < 1 / (1 + np.exp(-1.5 * X[:, 1]))).astype(int)
        r = fit(X, y)
        j = 1
        assert r.coefficients[j] > 0
        lo, hi = X[:1].copy(), X[:1].copy()
        hi[0, j] += 1.0
        assert predict_probabilities(r, hi)[0] > predict_probabilities(r, lo)[0]

    def test_strong_signal_training_auc(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(200, 1))
        y = (x[:, 0] > 0).astype(int)
        r = fit(x, y, PenaltySpec("L2", 1.0))
        assert auc_wilcoxon(y, predict_probabilities(r, x)) > 0.95

    def test_column_mismatch(self):
        X, y, _ = logistic_data(50, 3, 1)
        with pytest.raises(ValueError):
            predict_probabilities(fit(X, y), X[:, :2])


class TestCrossValidation:
    def test_folds_stratified(self):
        y = np.r_[np.ones(23), np.zeros(77)].astype(int)
        ids = stratified_folds(y, 10, seed=0)
        counts = np.bincount(ids[y == 1], minlength=10)
        assert counts.max() - counts.min() <= 1
        assert np.bincount(ids, minlength=10).max() - np.bincount(ids, minlength=10).min() <= 1

    def test_deterministic(self):
        X, y, _ = logistic_data(300, 10, 3)
        a = cv_select_lambda(X, y, seed=42)
        b = cv_select_lambda(X, y, seed=42)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1].folds, b[1].folds)
        np.testing.assert_array_equal(a[1].mean, b[1].mean)

    def test_noise_near_null(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(400, 10))
        y = rng.integers(0, 2, 400)
        r, _ = fit_cv(X, y, seed=1)
        Xt = rng.normal(size=(4000, 10))
        yt = rng.integers(0, 2, 4000)
        score = predict_probabilities(r, Xt)
        if np.ptp(score) > 0:
            assert abs(auc_wilcoxon(yt, score) - 0.5) < 0.05

    def test_strong_signal_retained(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(300, 8))
        y = (rng.random(300) < 1 / (1 + np.exp(-2.5 * X[:, 3]))).astype(int)
        r, curve = fit_cv(X, y, seed=2)
        assert r.coefficients[3] > 0
        assert curve.mean[curve.best_index] == np.nanmax(curve.mean)

    def test_patience_truncates(self):
        X, y, _ = logistic_data(300, 10, 4)
        _, full = cv_select_lambda(X, y, seed=3)
        lam, short = cv_select_lambda(X, y, seed=3, patience=5)
        assert np.all(np.isfinite(full.mean))
        visited = np.isfinite(short.mean)
        np.testing.assert_array_equal(short.mean[visited], full.mean[visited])
        if not visited.all():
            last = np.flatnonzero(visited)[-1]
            assert last - short.best_index == 5

    def test_fold_without_class(self):
        X = np.random.default_rng(0).normal(size=(30, 2))
        y = np.r_[np.ones(3), np.zeros(27)].astype(int)
        with pytest.raises(ValueError, match="fold"):
            cv_select_lambda(X, y, folds=10, seed=0)

    def test_too_few_units(self):
        with pytest.raises(ValueError):
            cv_select_lambda(np.ones((5, 1)), [0, 1, 0, 1, 0], folds=10)


class TestCovariance:
    def test_intercept_only_four_over_n(self):
        n = 400
        y = np.r_[np.ones(n // 2), np.zeros(n // 2)].astype(int)
        X = np.random.default_rng(0).normal(size=(n, 1))
        r = fit(X, y, PenaltySpec("L1", 1e6))
        cov = coefficient_covariance(r, X)
        assert cov.matrix.shape == (1, 1)
        assert cov.matrix[0, 0] == pytest.approx(4 / n, rel=1e-6)

    def test_parametric_bootstrap_intercept(self):
        rng = np.random.default_rng(1)
        n = 400
        est = []
        for _ in range(1000):
            ybar = rng.binomial(n, 0.5) / n
            est.append(np.log(ybar / (1 - ybar)))
        assert np.var(est) == pytest.approx(4 / n, rel=0.1)

    def test_replication_halves(self):
        X, y, _ = logistic_data(300, 4, 2)
        r = fit(X, y, PenaltySpec("L2", 0.0))
        r2 = fit(np.vstack([X, X]), np.r_[y, y], PenaltySpec("L2", 0.0))
        c1 = coefficient_covariance(r, X).matrix
        c2 = coefficient_covariance(r2, np.vstack([X, X])).matrix
        np.testing.assert_allclose(c2, c1 / 2, rtol=1e-6)

    def test_symmetric_psd(self):
        X, y, _ = logistic_data(300, 6, 3)
        c = coefficient_covariance(fit(X, y, PenaltySpec("L1", 0.05 * lambda_max(X, y))), X)
        assert np.allclose(c.matrix, c.matrix.T)
        assert np.linalg.eigvalsh(c.matrix).min() > -1e-8
        assert c.slopes(6).shape == (6, 6)

    def test_matches_parametric_bootstrap(self):
        rng = np.random.default_rng(4)
        n, p = 2000, 5
        X = rng.normal(size=(n, p))
        beta = np.array([0.8, -0.5, 0.3, 0.0, 0.4])
        prob = 1 / (1 + np.exp(-(X @ beta - 1.0)))
        y0 = (rng.random(n) < prob).astype(int)
        model = coefficient_covariance(fit(X, y0, PenaltySpec("L2", 0.0)), X)
        draws = []
        for _ in range(1000):
            yb = (rng.random(n) < prob).astype(int)
            r = fit(X, yb, PenaltySpec("L2", 0.0))
            draws.append(np.r_[r.intercept, r.coefficients])
        emp = np.cov(np.asarray(draws).T)
        np.testing.assert_allclose(np.diag(model.matrix), np.diag(emp), rtol=0.15)

    def test_singular_suggests_ridge(self):
        X, y, _ = logistic_data(100, 2, 5)
        X = np.column_stack([X, X[:, 0]])
        r = fit(X, y, PenaltySpec("L2", 1.0))
        with pytest.raises(np.linalg.LinAlgError, match="L2"):
            coefficient_covariance(r, X)


class TestSerialization:
    def test_round_trip(self):
        X, y, _ = logistic_data(200, 6, 6)
        pf = np.r_[np.ones(5), 0.0]
        r = fit(X, y, PenaltySpec("L1", 0.2 * lambda_max(X, y, pf), pf),
                feature_names=list("abcdef"))
        back = model_from_json(model_to_json(r))
        np.testing.assert_array_equal(back.coefficients, r.coefficients)
        assert back.intercept == r.intercept
        assert back.feature_names == list("abcdef")
        np.testing.assert_array_equal(predict_probabilities(back, X),
                                      predict_probabilities(r, X))
