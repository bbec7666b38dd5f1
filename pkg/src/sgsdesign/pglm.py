"""Penalized logistic regression: lasso and ridge with per-coefficient penalty factors.

Objective, on internally standardized columns::

    sum_i [log(1 + exp(eta_i)) - y_i * eta_i] + lambda * sum_j f_j * pen(b_j)

with ``pen(b) = |b|`` for L1 and ``pen(b) = b**2 / 2`` for L2. A factor
``f_j = 0`` leaves column ``j`` unpenalized; the intercept is never
penalized. Coefficients are reported on the original column scale.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _cd
from .metrics import auc_wilcoxon

log = logging.getLogger(__name__)

__all__ = [
    "PenaltySpec",
    "FitResult",
    "CovarianceApprox",
    "CVCurve",
    "fit",
    "fit_path",
    "lambda_max",
    "lambda_grid",
    "predict_linear",
    "predict_probabilities",
    "stratified_folds",
    "cv_select_lambda",
    "fit_cv",
    "coefficient_covariance",
    "negative_log_likelihood",
    "nll_gradient",
    "kkt_residuals",
    "model_to_json",
    "model_from_json",
]

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000
# ridge has no lambda that zeroes coefficients; start its grid this far above
# the lasso lambda_max
_RIDGE_GRID_SCALE = 1e3
# (min relative gain in deviance explained, max deviance explained) at which
# a lasso path is truncated; remaining lambdas reuse the last solution
EARLY_STOP = (1e-5, 0.999)
# convergence tolerance for the fold paths inside cross-validation; only the
# AUC ranking of the held-out scores matters there, so a looser tolerance
# buys a large speedup without moving the selected lambda in practice
CV_TOL = 1e-4


@dataclass
class PenaltySpec:
    norm: str = "L1"
    lam: float = 0.0
    factors: np.ndarray | None = None

    def __post_init__(self):
        self.norm = self.norm.upper()
        if self.norm not in ("L1", "L2"):
            raise ValueError(f"norm must be 'L1' or 'L2', got {self.norm!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.factors is not None:
            self.factors = np.asarray(self.factors, dtype=float)
            if np.any(self.factors < 0):
                raise ValueError("penalty factors must be nonnegative")

    def factors_for(self, p):
        if self.factors is None:
            return np.ones(p)
        if self.factors.shape != (p,):
            raise ValueError(f"expected {p} penalty factors, got {self.factors.shape}")
        return self.factors

    def with_lambda(self, lam):
        return PenaltySpec(self.norm, float(lam), self.factors)


@dataclass
class FitResult:
    intercept: float
    coefficients: np.ndarray
    penalty: PenaltySpec
    converged: bool
    n_iter: int
    objective: float
    center: np.ndarray
    scale: np.ndarray
    feature_names: list | None = None

    @property
    def active(self):
        """Columns kept by the fit: nonzero or unpenalized."""
        pf = self.penalty.factors_for(self.coefficients.size)
        return np.flatnonzero((self.coefficients != 0) | (pf == 0))


@dataclass
class CovarianceApprox:
    """``(D' W D)^-1`` for the design ``D = [1, X_A]``.

    ``columns`` maps rows of ``matrix`` to original column indices, with
    ``-1`` for the intercept.
    """

    matrix: np.ndarray
    columns: np.ndarray

    def slopes(self, p):
        """Coefficient block embedded in a dense ``p x p`` matrix."""
        out = np.zeros((p, p))
        idx = self.columns[1:]
        out[np.ix_(idx, idx)] = self.matrix[1:, 1:]
        return out


@dataclass
class CVCurve:
    lambdas: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    folds: np.ndarray = field(repr=False)
    best_index: int = 0


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be n x p and y length n")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary")
    y = y.astype(float)
    if X.shape[0] < 2 or y.min() == y.max():
        raise ValueError("y must contain both classes")
    return X, y


def _standardize(X, standardize):
    n, p = X.shape
    if not standardize:
        return np.ascontiguousarray(X), np.zeros(p), np.ones(p)
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    const = scale == 0
    scale[const] = 1.0
    Xs = (X - center) / scale
    Xs[:, const] = 0.0
    return np.ascontiguousarray(Xs), center, scale


def _unstandardize(b0, beta, center, scale):
    coef = beta / scale
    return b0 - float(coef @ center), coef


def _null_fit(Xs, y, pf, tol, max_iter):
    """Fit with every penalized coefficient held at zero."""
    p = Xs.shape[1]
    beta = np.zeros(p)
    ybar = y.mean()
    b0 = float(np.log(ybar / (1 - ybar)))
    if np.any(pf == 0):
        b0, *_ = _cd.solve_one(Xs, y, pf, 1e300, b0, beta, tol, max_iter,
                               _inner_tol(tol, y.size))
    return b0, beta


def _inner_tol(tol, n):
    return (0.1 * tol) ** 2 * 0.25 * n


def lambda_max(X, y, factors=None, *, standardize=True, tol=DEFAULT_TOL):
    """Smallest lambda at which every fully penalized L1 coefficient is zero."""
    X, y = _check_xy(X, y)
    Xs, _, _ = _standardize(X, standardize)
    pf = PenaltySpec(factors=factors).factors_for(X.shape[1])
    return _lambda_max_std(Xs, y, pf, tol)


def _lambda_max_std(Xs, y, pf, tol):
    b0, beta = _null_fit(Xs, y, pf, tol, DEFAULT_MAX_ITER)
    resid = y - expit(b0 + Xs @ beta)
    grad = np.abs(Xs.T @ resid)
    pen = pf > 0
    if not np.any(pen):
        return 1.0
    return float(np.max(grad[pen] / pf[pen]))


def lambda_grid(lam_max, n_lambda=50, ratio=1e-4):
    return np.geomspace(lam_max, lam_max * ratio, n_lambda)


def _ridge_step(D, y, pen, theta, tol, max_iter):
    """Newton/IRLS at one lambda from ``theta`` (updated in place)."""
    converged = False
    it = 0
    eta = D @ theta
    obj = _cd._nll(eta, y) + 0.5 * float(pen @ theta**2)
    while it < max_iter:
        it += 1
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-10)
        grad = D.T @ (y - mu) - pen * theta
        H = (D * w[:, None]).T @ D + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            eta_c = D @ cand
            obj_c = _cd._nll(eta_c, y) + 0.5 * float(pen @ cand**2)
            if obj_c <= obj or t < 1e-10:
                break
            t *= 0.5
        if obj_c > obj:
            converged = True
            break
        change = np.max(np.abs(cand - theta))
        theta[:] = cand
        eta, obj = eta_c, obj_c
        if change < tol:
            converged = True
            break
    return it, converged, obj


def _null_deviance(y):
    ybar = y.mean()
    return -2.0 * y.size * (ybar * np.log(ybar) + (1 - ybar) * np.log(1 - ybar))


class _PathSolver:
    """Warm-started solves along a descending lambda sequence.

    With ``early_stop`` the path is frozen once the fraction of null
    deviance explained exceeds ``EARLY_STOP[1]`` or improves by less than
    ``EARLY_STOP[0]`` (relative) between consecutive lambdas; later calls
    return the frozen fit.
    """

    def __init__(self, Xs, y, pf, norm, tol, max_iter, early_stop=False):
        self.Xs, self.y, self.pf, self.norm = Xs, y, pf, norm
        self.tol, self.max_iter, self.early_stop = tol, max_iter, early_stop
        self.null_dev = _null_deviance(y)
        self.prev_ratio = None
        self.frozen = None
        if norm == "L2":
            n = Xs.shape[0]
            self.D = np.hstack([np.ones((n, 1)), Xs])
            self.theta = np.zeros(Xs.shape[1] + 1)
            self.theta[0] = np.log(y.mean() / (1 - y.mean()))
        else:
            self.b0, self.beta = _null_fit(Xs, y, pf, tol, max_iter)
            self.inner_tol = _inner_tol(tol, y.size)

    def step(self, lam):
        if self.frozen is not None:
            return self.frozen
        if self.norm == "L2":
            it, conv, obj = _ridge_step(self.D, self.y, np.r_[0.0, lam * self.pf],
                                        self.theta, self.tol, self.max_iter)
            b0, beta = float(self.theta[0]), self.theta[1:].copy()
        else:
            self.b0, it, conv, obj = _cd.solve_one(
                self.Xs, self.y, self.pf, lam, self.b0, self.beta, self.tol,
                self.max_iter, self.inner_tol)
            b0, beta = float(self.b0), self.beta.copy()
        out = (b0, beta, int(it), bool(conv), float(obj))
        if self.early_stop and self.null_dev > 0:
            fdev, devmax = EARLY_STOP
            eta = b0 + self.Xs @ beta
            ratio = 1.0 - 2.0 * _cd._nll(eta, self.y) / self.null_dev
            prev = self.prev_ratio
            if ratio > devmax or (prev is not None and ratio - prev < fdev * ratio):
                self.frozen = out
            self.prev_ratio = ratio
        return out


def _path_std(Xs, y, pf, norm, lambdas, tol, max_iter, early_stop=False):
    solver = _PathSolver(Xs, y, pf, norm, tol, max_iter, early_stop)
    return [solver.step(lam) for lam in lambdas]


def fit_path(X, y, lambdas, penalty: PenaltySpec | None = None, *, standardize=True,
             tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, feature_names=None,
             early_stop=False):
    """Fit along ``lambdas`` (sorted descending) with warm starts.

    With ``early_stop`` a lasso path stops once the deviance explained
    saturates (see ``EARLY_STOP``) and the remaining entries repeat the
    last solution.
    """
    penalty = penalty or PenaltySpec()
    X, y = _check_xy(X, y)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    Xs, center, scale = _standardize(X, standardize)
    pf = penalty.factors_for(X.shape[1])
    results = []
    for lam, (b0, beta, it, conv, obj) in zip(
            lambdas, _path_std(Xs, y, pf, penalty.norm, lambdas, tol, max_iter, early_stop)):
        icpt, coef = _unstandardize(b0, beta, center, scale)
        if not conv:
            log.warning("fit at lambda=%g did not converge in %d iterations", lam, it)
        results.append(FitResult(icpt, coef, penalty.with_lambda(lam), conv, it, obj,
                                 center, scale, feature_names))
    return results


def fit(X, y, penalty: PenaltySpec | None = None, *, standardize=True, tol=DEFAULT_TOL,
        max_iter=DEFAULT_MAX_ITER, feature_names=None) -> FitResult:
    """Minimize the penalized negative log-likelihood at ``penalty.lam``.

    L1 uses proximal-Newton coordinate descent, L2 uses IRLS. Convergence is
    declared when no coefficient moves more than ``tol`` in an outer step;
    a fit that hits ``max_iter`` is returned with ``converged=False``.
    """
    penalty = penalty or PenaltySpec()
    return fit_path(X, y, [penalty.lam], penalty, standardize=standardize, tol=tol,
                    max_iter=max_iter, feature_names=feature_names)[0]


def predict_linear(result: FitResult, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != result.coefficients.size:
        raise ValueError(
            f"X has {X.shape[-1]} columns, model has {result.coefficients.size}")
    return result.intercept + X @ result.coefficients


def predict_probabilities(result: FitResult, X):
    return expit(predict_linear(result, X))


def stratified_folds(y, folds=10, seed=None):
    """Assign fold ids so each class is spread as evenly as possible."""
    y = np.asarray(y).astype(bool)
    rng = np.random.default_rng(seed)
    ids = np.empty(y.size, dtype=np.int64)
    offset = 0
    for cls in (True, False):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        ids[idx] = (np.arange(idx.size) + offset) % folds
        offset = (offset + idx.size) % folds
    return ids


def cv_select_lambda(X, y, penalty_template: PenaltySpec | None = None, *, folds=10,
                     n_lambda=50, ratio=1e-4, seed=None, standardize=True,
                     tol=CV_TOL, max_iter=DEFAULT_MAX_ITER, patience=None):
    """Pick lambda maximizing mean held-out AUC over stratified folds.

    The grid is ``n_lambda`` log-spaced values from the full-data lambda_max
    down to ``ratio * lambda_max``. All folds advance down the grid together;
    fold paths stop early as in :func:`fit_path` and are solved to ``tol``
    (default ``CV_TOL``). With ``patience=k`` the sweep ends once the best
    mean AUC has not improved for ``k`` consecutive lambdas; unvisited grid
    points get NaN in the curve. Ties go to the larger lambda.
    Returns ``(lambda_star, CVCurve)``.
    """
    penalty = penalty_template or PenaltySpec()
    X, y = _check_xy(X, y)
    n, p = X.shape
    if n < folds:
        raise ValueError(f"need at least {folds} units for {folds}-fold CV, got {n}")
    fold_ids = stratified_folds(y, folds, seed)
    for k in range(folds):
        held = y[fold_ids == k]
        if held.min() == held.max():
            raise ValueError(
                f"fold {k} lacks a class after stratification "
                f"({int(y.sum())} cases among {n} units)")
    pf = penalty.factors_for(p)
    Xs_full, _, _ = _standardize(X, standardize)
    lam_max = _lambda_max_std(Xs_full, y, pf, tol)
    if penalty.norm == "L2":
        lam_max *= _RIDGE_GRID_SCALE
    lambdas = lambda_grid(lam_max, n_lambda, ratio)

    solvers, held_out = [], []
    for k in range(folds):
        train = fold_ids != k
        Xs, center, scale = _standardize(X[train], standardize)
        solvers.append(_PathSolver(Xs, y[train], pf, penalty.norm, tol, max_iter,
                                   early_stop=True))
        held_out.append(((X[~train] - center) / scale, y[~train]))

    scores = np.full((folds, n_lambda), np.nan)
    best, best_mean = 0, -np.inf
    for m, lam in enumerate(lambdas):
        for k, (solver, (Xt, yt)) in enumerate(zip(solvers, held_out)):
            b0, beta, *_ = solver.step(lam)
            scores[k, m] = auc_wilcoxon(yt, Xt @ beta)
        mean_m = scores[:, m].mean()
        if mean_m > best_mean:
            best, best_mean = m, mean_m
        elif patience is not None and m - best >= patience:
            break
    mean = scores.mean(axis=0)
    if folds > 1:
        se = scores.std(axis=0, ddof=1) / np.sqrt(folds)
    else:
        se = np.where(np.isnan(mean), np.nan, 0.0)
    return float(lambdas[best]), CVCurve(lambdas, mean, se, fold_ids, best)


def fit_cv(X, y, penalty_template: PenaltySpec | None = None, *, folds=10, n_lambda=50,
           ratio=1e-4, seed=None, standardize=True, tol=DEFAULT_TOL,
           max_iter=DEFAULT_MAX_ITER, feature_names=None, cv_tol=CV_TOL, patience=None):
    """Cross-validate lambda, then refit on all rows along the grid prefix.

    Fold paths use ``cv_tol``; the final refit is solved to ``tol``.
    """
    penalty = penalty_template or PenaltySpec()
    lam, curve = cv_select_lambda(X, y, penalty, folds=folds, n_lambda=n_lambda,
                                  ratio=ratio, seed=seed, standardize=standardize,
                                  tol=cv_tol, max_iter=max_iter, patience=patience)
    grid = curve.lambdas[: curve.best_index + 1]
    result = fit_path(X, y, grid, penalty, standardize=standardize, tol=tol,
                      max_iter=max_iter, feature_names=feature_names)[-1]
    return result, curve


def coefficient_covariance(result: FitResult, X) -> CovarianceApprox:
    """``(D' W D)^-1`` at the fitted probabilities, ``W = diag(p(1-p))``.

    L1 fits use the active set only; zeroed coordinates have no meaningful
    variance under this approximation.
    """
    X = np.asarray(X, dtype=float)
    p = result.coefficients.size
    cols = result.active if result.penalty.norm == "L1" else np.arange(p)
    mu = predict_probabilities(result, X)
    w = mu * (1 - mu)
    D = np.hstack([np.ones((X.shape[0], 1)), X[:, cols]])
    info = (D * w[:, None]).T @ D
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "X'WX is singular on the active set; refit with an L2 penalty") from None
    if np.linalg.cond(info) > 1e12:
        raise np.linalg.LinAlgError(
            "X'WX is numerically singular on the active set; refit with an L2 penalty")
    inv_chol = np.linalg.inv(chol)
    cov = inv_chol.T @ inv_chol
    return CovarianceApprox(0.5 * (cov + cov.T), np.r_[-1, cols])


def negative_log_likelihood(X, y, intercept, coefficients) -> float:
    """Unpenalized logistic negative log-likelihood, summed over rows."""
    eta = intercept + np.asarray(X, dtype=float) @ np.asarray(coefficients, dtype=float)
    return float(np.sum(np.logaddexp(0.0, eta) - np.asarray(y) * eta))


def nll_gradient(X, y, intercept, coefficients):
    """Gradient of :func:`negative_log_likelihood`: ``(d/d b0, d/d beta)``."""
    X = np.asarray(X, dtype=float)
    resid = expit(intercept + X @ np.asarray(coefficients, dtype=float)) - np.asarray(y)
    return float(resid.sum()), X.T @ resid


def kkt_residuals(result: FitResult, X, y):
    """Per-coordinate KKT violations of an L1 fit, on the standardized scale.

    Zero coefficients violate by ``max(|g_j| - lam f_j, 0)``; nonzero ones by
    ``|g_j + lam f_j sign(b_j)|``. The intercept entry is ``|g_0|``.
    Returns ``(intercept_violation, violations)``.
    """
    X, y = _check_xy(X, y)
    Xs = (X - result.center) / result.scale
    beta_s = result.coefficients * result.scale
    b0_s = result.intercept + float(result.coefficients @ result.center)
    g0, g = nll_gradient(Xs, y, b0_s, beta_s)
    pen = result.penalty.lam * result.penalty.factors_for(beta_s.size)
    viol = np.where(beta_s == 0, np.maximum(np.abs(g) - pen, 0.0),
                    np.abs(g + pen * np.sign(beta_s)))
    return abs(g0), viol


def model_to_json(result: FitResult) -> str:
    names = result.feature_names or [f"x{j + 1}" for j in range(result.coefficients.size)]
    doc = {
        "intercept": result.intercept,
        "coefficients": {str(j): float(v) for j, v in enumerate(result.coefficients) if v != 0},
        "n_features": int(result.coefficients.size),
        "penalty": {
            "norm": result.penalty.norm,
            "lambda": result.penalty.lam,
            "factors": None if result.penalty.factors is None
            else result.penalty.factors.tolist(),
        },
        "feature_names": list(names),
        "standardization": {"center": result.center.tolist(), "scale": result.scale.tolist()},
        "converged": result.converged,
        "n_iter": result.n_iter,
        "objective": result.objective,
    }
    return json.dumps(doc, indent=2)


def model_from_json(text) -> FitResult:
    doc = json.loads(text)
    p = doc["n_features"]
    coef = np.zeros(p)
    for j, v in doc["coefficients"].items():
        coef[int(j)] = v
    pen = doc["penalty"]
    std = doc["standardization"]
    return FitResult(doc["intercept"], coef,
                     PenaltySpec(pen["norm"], pen["lambda"], pen["factors"]),
                     doc["converged"], doc["n_iter"], doc["objective"],
                     np.asarray(std["center"]), np.asarray(std["scale"]),
                     doc["feature_names"])
