"""Compiled kernels for L1-penalized logistic regression.

Problem solved for each lambda (columns already standardized):

    min_{b0, b}  sum_i [log(1 + exp(eta_i)) - y_i eta_i] + lam * sum_j pf_j |b_j|

by proximal Newton: a weighted least-squares model of the likelihood is
minimized with cyclic coordinate descent (active-set cycling), then a
backtracking step on the true objective keeps it non-increasing.

For moderate p the quadratic model is held as its Gram matrix (covariance
updates), so a coordinate update costs O(p) rather than O(n).
"""

import numpy as np
from numba import njit

_W_MIN = 1e-9


@njit(cache=True)
def _nll(eta, y):
    total = 0.0
    for i in range(eta.shape[0]):
        e = eta[i]
        if e > 0:
            total += e + np.log1p(np.exp(-e)) - y[i] * e
        else:
            total += np.log1p(np.exp(e)) - y[i] * e
    return total


@njit(cache=True)
def _penalty(beta, pf, lam):
    total = 0.0
    for j in range(beta.shape[0]):
        if pf[j] > 0:
            total += pf[j] * abs(beta[j])
    return lam * total


@njit(cache=True)
def _linpred(X, b0, beta, out):
    n, p = X.shape
    for i in range(n):
        s = b0
        for j in range(p):
            s += X[i, j] * beta[j]
        out[i] = s


@njit(cache=True)
def _sweep(X, w, r, beta, b0_arr, xv, pf, lam, active, only_active):
    """One coordinate pass; returns the largest weighted squared change."""
    n, p = X.shape
    maxch = 0.0
    for j in range(p):
        if only_active and not active[j]:
            continue
        if xv[j] <= 0.0:
            continue
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        g += xv[j] * beta[j]
        thr = lam * pf[j]
        if g > thr:
            new = (g - thr) / xv[j]
        elif g < -thr:
            new = (g + thr) / xv[j]
        else:
            new = 0.0
        d = new - beta[j]
        if d != 0.0:
            for i in range(n):
                r[i] -= d * w[i] * X[i, j]
            beta[j] = new
            if new != 0.0:
                active[j] = True
            ch = xv[j] * d * d
            if ch > maxch:
                maxch = ch
    # intercept
    sr = 0.0
    sw = 0.0
    for i in range(n):
        sr += r[i]
        sw += w[i]
    d0 = sr / sw
    if d0 != 0.0:
        for i in range(n):
            r[i] -= d0 * w[i]
        b0_arr[0] += d0
        ch = sw * d0 * d0
        if ch > maxch:
            maxch = ch
    return maxch


@njit(cache=True)
def _gram_base(Xt, w, Xw, G, have):
    """Start a lazily filled G = D' W D for D = [1, X].

    Fills the intercept row and the diagonal; row ``j + 1`` (slope j) is
    computed on first use by :func:`_gram_row`. ``Xt`` is X transposed.
    """
    p, n = Xt.shape
    s0 = 0.0
    for i in range(n):
        s0 += w[i]
    G[0, 0] = s0
    for j in range(p):
        s = 0.0
        h = 0.0
        for i in range(n):
            v = Xt[j, i] * w[i]
            Xw[j, i] = v
            s += v
            h += v * Xt[j, i]
        G[0, j + 1] = s
        G[j + 1, 0] = s
        G[j + 1, j + 1] = h
        have[j] = False


@njit(cache=True)
def _gram_full(X, Xw, G, have):
    """Fill every slope row of G at once (one matrix product)."""
    G[1:, 1:] = Xw @ X
    for j in range(have.shape[0]):
        have[j] = True


@njit(cache=True)
def _gram_row(Xt, Xw, G, have, j):
    row = Xt @ Xw[j]
    G[j + 1, 1:] = row
    have[j] = True


@njit(cache=True)
def _sweep_gram(Xt, Xw, G, have, grad, beta, b0_arr, pf, lam, active, only_active):
    """Coordinate pass on the quadratic model held as a Gram matrix.

    ``grad`` is the model gradient at the current point, indexed like G
    (0 = intercept); it is kept current after every update. G is
    symmetric, so row ``j + 1`` serves as column ``j + 1``.
    """
    q = G.shape[0]
    maxch = 0.0
    for j in range(q - 1):
        if only_active and not active[j]:
            continue
        hj = G[j + 1, j + 1]
        if hj <= 0.0:
            continue
        g = grad[j + 1] + hj * beta[j]
        thr = lam * pf[j]
        if g > thr:
            new = (g - thr) / hj
        elif g < -thr:
            new = (g + thr) / hj
        else:
            new = 0.0
        d = new - beta[j]
        if d != 0.0:
            if not have[j]:
                _gram_row(Xt, Xw, G, have, j)
            for k in range(q):
                grad[k] -= G[j + 1, k] * d
            beta[j] = new
            if new != 0.0:
                active[j] = True
            ch = hj * d * d
            if ch > maxch:
                maxch = ch
    d0 = grad[0] / G[0, 0]
    if d0 != 0.0:
        for k in range(q):
            grad[k] -= G[0, k] * d0
        b0_arr[0] += d0
        ch = G[0, 0] * d0 * d0
        if ch > maxch:
            maxch = ch
    return maxch


# above this many columns the Gram matrix costs more than it saves
GRAM_MAX_P = 500
# build the whole Gram matrix in one product once more than 1/FRAC of the
# columns are active; below that, rows are computed on first use
GRAM_FULL_FRAC = 8


@njit(cache=True)
def solve_one(X, y, pf, lam, b0, beta, tol, max_iter, inner_tol):
    """Fit at a single lambda starting from (b0, beta), modified in place.

    Returns (b0, n_iter, converged, objective).
    """
    n, p = X.shape
    eta = np.empty(n)
    eta_new = np.empty(n)
    w = np.empty(n)
    r = np.empty(n)
    xv = np.empty(p)
    beta_old = np.empty(p)
    active = np.zeros(p, dtype=np.bool_)
    b0_arr = np.empty(1)
    use_gram = p <= GRAM_MAX_P
    if use_gram:
        Xt = np.ascontiguousarray(X.T)
        Xw = np.empty((p, n))
        G = np.empty((p + 1, p + 1))
        have = np.zeros(p, dtype=np.bool_)
        grad = np.empty(p + 1)
    else:
        Xt = np.empty((0, 0))
        Xw = np.empty((0, 0))
        G = np.empty((0, 0))
        have = np.zeros(0, dtype=np.bool_)
        grad = np.empty(0)

    _linpred(X, b0, beta, eta)
    obj = _nll(eta, y) + _penalty(beta, pf, lam)
    sweeps = 0
    converged = False
    n_outer = 0
    while sweeps < max_iter:
        n_outer += 1
        for i in range(n):
            e = eta[i]
            if e >= 0:
                q = 1.0 / (1.0 + np.exp(-e))
            else:
                ez = np.exp(e)
                q = ez / (1.0 + ez)
            wi = q * (1.0 - q)
            if wi < _W_MIN:
                wi = _W_MIN
            w[i] = wi
            r[i] = y[i] - q
        for j in range(p):
            beta_old[j] = beta[j]
            active[j] = beta[j] != 0.0 or pf[j] == 0.0
        b0_old = b0
        b0_arr[0] = b0

        # coordinate descent on the quadratic model
        if use_gram:
            _gram_base(Xt, w, Xw, G, have)
            n_active = 0
            for j in range(p):
                if active[j]:
                    n_active += 1
            if n_active * GRAM_FULL_FRAC > p:
                _gram_full(X, Xw, G, have)
            s = 0.0
            for i in range(n):
                s += r[i]
            grad[0] = s
            for j in range(p):
                s = 0.0
                for i in range(n):
                    s += Xt[j, i] * r[i]
                grad[j + 1] = s
            while sweeps < max_iter:
                sweeps += 1
                maxch = _sweep_gram(Xt, Xw, G, have, grad, beta, b0_arr, pf, lam,
                                    active, False)
                if maxch < inner_tol:
                    break
                while sweeps < max_iter:
                    sweeps += 1
                    maxch = _sweep_gram(Xt, Xw, G, have, grad, beta, b0_arr, pf,
                                        lam, active, True)
                    if maxch < inner_tol:
                        break
        else:
            for j in range(p):
                s = 0.0
                for i in range(n):
                    s += w[i] * X[i, j] * X[i, j]
                xv[j] = s
            while sweeps < max_iter:
                sweeps += 1
                maxch = _sweep(X, w, r, beta, b0_arr, xv, pf, lam, active, False)
                if maxch < inner_tol:
                    break
                while sweeps < max_iter:
                    sweeps += 1
                    maxch = _sweep(X, w, r, beta, b0_arr, xv, pf, lam, active, True)
                    if maxch < inner_tol:
                        break

        # backtracking on the true objective
        b0_new = b0_arr[0]
        _linpred(X, b0_new, beta, eta_new)
        obj_new = _nll(eta_new, y) + _penalty(beta, pf, lam)
        t = 1.0
        while obj_new > obj and t > 1e-10:
            t *= 0.5
            for j in range(p):
                beta[j] = beta_old[j] + 0.5 * (beta[j] - beta_old[j])
            b0_new = b0_old + 0.5 * (b0_new - b0_old)
            _linpred(X, b0_new, beta, eta_new)
            obj_new = _nll(eta_new, y) + _penalty(beta, pf, lam)
        if obj_new > obj:
            # no descent possible at this precision: keep the old point
            for j in range(p):
                beta[j] = beta_old[j]
            b0_new = b0_old
            converged = True
            break
        b0 = b0_new
        for i in range(n):
            eta[i] = eta_new[i]
        obj = obj_new

        maxdiff = abs(b0 - b0_old)
        for j in range(p):
            dj = abs(beta[j] - beta_old[j])
            if dj > maxdiff:
                maxdiff = dj
        if maxdiff < tol:
            converged = True
            break
    return b0, sweeps, converged, obj
