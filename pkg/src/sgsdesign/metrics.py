"""AUC estimators, inverse-probability-weighted rates and bootstrap intervals.

Inputs are parallel arrays: binary ``y``, real ``scores`` and optional
positive ``weights`` (inverse inclusion probabilities). Ties between a case
and a control count one half unless ``strict=True``.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.stats import rankdata

from .exceptions import UndefinedAUCError

__all__ = [
    "auc_wilcoxon",
    "auc_ipw",
    "ipw_rate",
    "auc_binary_predictor",
    "bootstrap_ci",
    "evaluation_report",
]


def _as_arrays(y, scores, weights=None):
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=float)
    if y.shape != scores.shape or y.ndim != 1:
        raise ValueError("y and scores must be 1-d arrays of equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    y = y.astype(bool)
    if weights is None:
        return y, scores, None
    weights = np.asarray(weights, dtype=float)
    if weights.shape != y.shape:
        raise ValueError("weights must match y in length")
    if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and positive")
    return y, scores, weights


def auc_wilcoxon(y, scores, *, strict=False) -> float:
    """Mann-Whitney AUC via the rank-sum statistic, O(n log n)."""
    y, scores, _ = _as_arrays(y, scores)
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedAUCError("AUC needs at least one case and one control")
    if strict:
        return auc_ipw(y, scores, np.ones(y.size), strict=True)
    ranks = rankdata(scores)  # midranks
    u = ranks[y].sum() - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def _weighted_concordance(y, scores, weights, strict):
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    w = weights[order]
    case = y[order]
    wc = np.where(case, 0.0, w)  # control weight
    # group tied scores
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ctrl_per_group = np.add.reduceat(wc, starts)
    case_per_group = np.add.reduceat(np.where(case, w, 0.0), starts)
    ctrl_below = np.cumsum(ctrl_per_group) - ctrl_per_group
    tie_credit = 0.0 if strict else 0.5
    return float(np.sum(case_per_group * (ctrl_below + tie_credit * ctrl_per_group)))


def auc_ipw(y, scores, weights, *, strict=False) -> float:
    """IPW-corrected AUC.

    Each case/control pair is weighted by the product of the two inverse
    inclusion probabilities. Weights are rescaled by their maximum first,
    which leaves the ratio unchanged and makes uniform weights reproduce
    :func:`auc_wilcoxon` exactly.
    """
    y, scores, weights = _as_arrays(y, scores, weights)
    weights = weights / weights.max()
    w1 = weights[y].sum()
    w0 = weights[~y].sum()
    den = w1 * w0
    if den == 0.0:
        raise UndefinedAUCError("AUC needs at least one case and one control")
    return _weighted_concordance(y, scores, weights, strict) / den


def ipw_rate(y, scores, weights=None, *, kind="sensitivity", threshold=0.5) -> float:
    """Horvitz-Thompson (ratio form) rates.

    ``sensitivity`` and ``specificity`` classify ``score >= threshold`` as
    positive. ``prevalence`` is the weighted outcome rate and ignores the
    scores.
    """
    y, scores, weights = _as_arrays(y, scores, weights)
    if weights is None:
        weights = np.ones(y.size)
    positive = scores >= threshold
    if kind == "sensitivity":
        mask, hit = y, positive
    elif kind == "specificity":
        mask, hit = ~y, ~positive
    elif kind == "prevalence":
        mask, hit = np.ones_like(y), y
    else:
        raise ValueError(f"unknown rate kind {kind!r}")
    total = weights[mask].sum()
    if total == 0:
        raise UndefinedAUCError(f"{kind} undefined: empty reference group")
    return float(weights[mask & hit].sum() / total)


def auc_binary_predictor(sensitivity, specificity) -> float:
    """Trapezoidal AUC of a binary test: (sens + spec) / 2."""
    for name, v in (("sensitivity", sensitivity), ("specificity", specificity)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return (sensitivity + specificity) / 2.0


def bootstrap_ci(statistic, y, scores, weights=None, *, B=1000, level=0.95,
                 seed=None, max_retries=10):
    """Percentile bootstrap interval for ``statistic(y, scores, weights)``.

    Resamples missing a class are redrawn up to ``max_retries`` times.
    Returns ``(estimate, lower, upper)`` where ``estimate`` is the statistic
    on the original data.
    """
    y, scores, weights = _as_arrays(y, scores, weights)
    y = y.astype(int)
    estimate = statistic(y, scores, weights)
    rng = np.random.default_rng(seed)
    n = y.size
    reps = np.empty(B)
    for b in range(B):
        for _ in range(max_retries + 1):
            idx = rng.integers(0, n, size=n)
            yb = y[idx]
            if 0 < yb.sum() < n:
                break
        else:
            raise UndefinedAUCError(
                f"bootstrap resample lacked a class after {max_retries} retries"
            )
        reps[b] = statistic(yb, scores[idx], None if weights is None else weights[idx])
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(reps, [alpha, 1.0 - alpha])
    return float(estimate), float(lower), float(upper)


def _auc_stat(y, s, w):
    return auc_wilcoxon(y, s)


def _auc_ipw_stat(y, s, w):
    return auc_ipw(y, s, np.ones(len(y)) if w is None else w)


def evaluation_report(y, scores, weights=None, *, threshold=0.5, B=1000,
                      level=0.95, seed=None) -> dict:
    """Report dict with AUCs, weighted rates and bootstrap intervals.

    ``B=0`` skips the intervals.
    """
    y, scores, weights = _as_arrays(y, scores, weights)
    y = y.astype(int)
    w = np.ones(y.size) if weights is None else weights
    report = {
        "n": int(y.size),
        "auc": auc_wilcoxon(y, scores),
        "auc_ipw": auc_ipw(y, scores, w),
        "sens": ipw_rate(y, scores, w, kind="sensitivity", threshold=threshold),
        "spec": ipw_rate(y, scores, w, kind="specificity", threshold=threshold),
        "prevalence_ipw": ipw_rate(y, scores, w, kind="prevalence"),
        "threshold": threshold,
        "B": int(B),
        "seed": seed,
    }
    if B > 0:
        seeds = np.random.SeedSequence(seed).spawn(2)
        _, lo, hi = bootstrap_ci(_auc_stat, y, scores, None, B=B, level=level,
                                 seed=seeds[0])
        report["auc_ci"] = [lo, hi]
        _, lo, hi = bootstrap_ci(_auc_ipw_stat, y, scores, w, B=B, level=level,
                                 seed=seeds[1])
        report["auc_ipw_ci"] = [lo, hi]
        report["level"] = level
    return report


def dumps_report(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
