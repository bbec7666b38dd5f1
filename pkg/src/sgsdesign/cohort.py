"""Synthetic EMR-like cohorts with long-tail binary features and binary surrogates.

Data-generating process:

* feature frequencies ``p_j ~ Exponential(mean)``, clamped to [0.001, 0.999];
  ``X_ij ~ Bernoulli(p_j)`` independently;
* the 20 most frequent features get coefficients cycling through
  (-0.75, -0.5, 0.25), the 10 features with frequency closest to the
  target prevalence get 1, all others 0;
* ``logit P(Y=1) = b0 + sum_k bz_k Z_k + X beta`` with ``b0`` found by
  bisection so the expected prevalence matches the target.

Surrogates are attached in one of two ways. ``CONDITIONAL_Z_GIVEN_Y`` draws
``Z | Y`` with the exact target sensitivity and specificity and leaves the
outcome model free of surrogate terms. ``PAPER_Y_GIVEN_Z`` draws ``Z``
first and then ``Y | X, Z`` with surrogate coefficients calibrated so the
expected operating characteristics hit the targets.

Randomness is split into independent substreams derived from the master
seed (one per feature column, one per surrogate, one for outcomes), so the
cohort is identical however the columns are generated.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, logit

from .exceptions import CalibrationError

log = logging.getLogger(__name__)

__all__ = [
    "SurrogateMode",
    "CohortConfig",
    "Cohort",
    "generate_features",
    "assign_coefficients",
    "calibrate_intercept",
    "attach_surrogates",
    "generate_outcomes",
    "simulate_cohort",
    "simulate_outcome_surrogate",
    "binormal_cohort",
    "save_cohort",
    "load_cohort",
]

COEF_PATTERN = (-0.75, -0.5, 0.25)
N_FREQUENT = 20
N_PREVALENT = 10
FREQ_CLAMP = (0.001, 0.999)

# substream keys
_FEATURE_FREQS, _FEATURES, _SURROGATES, _OUTCOMES = 0, 1, 2, 3


class SurrogateMode(str, enum.Enum):
    CONDITIONAL_Z_GIVEN_Y = "CONDITIONAL_Z_GIVEN_Y"
    PAPER_Y_GIVEN_Z = "PAPER_Y_GIVEN_Z"


@dataclass
class CohortConfig:
    N: int = 100_000
    p: int = 250
    prevalence: float = 0.05
    feature_freq_mean: float = 1 / 6
    surrogates: list = field(default_factory=lambda: [(0.40, 0.95), (0.67, 0.66)])
    surrogate_mode: SurrogateMode = SurrogateMode.CONDITIONAL_Z_GIVEN_Y
    seed: int = 0

    def __post_init__(self):
        self.surrogate_mode = SurrogateMode(self.surrogate_mode)
        self.surrogates = [tuple(float(v) for v in t) for t in self.surrogates]
        if not 0 < self.prevalence < 1:
            raise ValueError("prevalence must lie in (0, 1)")
        if self.N < 1 or self.p < 0:
            raise ValueError("N must be positive and p nonnegative")

    def to_dict(self):
        d = asdict(self)
        d["surrogate_mode"] = self.surrogate_mode.value
        d["surrogates"] = [list(t) for t in self.surrogates]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Cohort:
    features: np.ndarray          # (N, p) uint8
    outcomes: np.ndarray          # (N,) int8
    surrogates: np.ndarray        # (N, k) int8
    ids: np.ndarray
    surrogate_names: list
    feature_freqs: np.ndarray | None = None
    beta: np.ndarray | None = None
    intercept: float | None = None
    surrogate_coefs: np.ndarray | None = None
    config: CohortConfig | None = None
    realized: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.outcomes.shape[0]
        if self.features.shape[0] != n or self.surrogates.shape[0] != n or self.ids.shape[0] != n:
            raise ValueError("cohort arrays disagree in length")

    @property
    def N(self):
        return self.outcomes.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def surrogate(self, name):
        return self.surrogates[:, self.surrogate_names.index(name)]

    def design_matrix(self, rows=None, include_surrogates=True):
        """Float feature matrix for fitting, surrogate columns appended last."""
        rows = slice(None) if rows is None else rows
        X = self.features[rows].astype(float)
        if include_surrogates and self.surrogates.shape[1]:
            X = np.hstack([X, self.surrogates[rows].astype(float)])
        return X

    def column_names(self, include_surrogates=True):
        names = [f"x{j + 1}" for j in range(self.p)]
        return names + (list(self.surrogate_names) if include_surrogates else [])


def _substream(seed, key, n=1):
    ss = np.random.SeedSequence(seed, spawn_key=(key,))
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def generate_features(config: CohortConfig):
    """Return ``(X, freqs)``: uint8 N x p Bernoulli matrix and column frequencies."""
    (rng,) = _substream(config.seed, _FEATURE_FREQS)
    freqs = np.clip(rng.exponential(config.feature_freq_mean, size=config.p), *FREQ_CLAMP)
    X = np.empty((config.N, config.p), dtype=np.uint8)
    for j, col_rng in enumerate(_substream(config.seed, _FEATURES, config.p)):
        X[:, j] = col_rng.random(config.N) < freqs[j]
    return X, freqs


def assign_coefficients(freqs, prevalence):
    """Sparse coefficient vector following the frequency-ranked pattern.

    Ties are broken by column index.
    """
    freqs = np.asarray(freqs, dtype=float)
    p = freqs.size
    if p < N_FREQUENT + N_PREVALENT:
        raise ValueError(f"need at least {N_FREQUENT + N_PREVALENT} features, got {p}")
    beta = np.zeros(p)
    by_freq = np.argsort(-freqs, kind="stable")
    frequent = by_freq[:N_FREQUENT]
    beta[frequent] = np.resize(COEF_PATTERN, N_FREQUENT)
    rest = np.setdiff1d(np.arange(p), frequent)
    closeness = np.abs(freqs[rest] - prevalence)
    prevalent = rest[np.argsort(closeness, kind="stable")[:N_PREVALENT]]
    beta[prevalent] = 1.0
    return beta


def _bisect(f, lo, hi, target, tol=1e-10, max_iter=200):
    """Root of increasing ``f(x) = target`` on [lo, hi]."""
    flo, fhi = f(lo), f(hi)
    if not flo <= target <= fhi:
        raise CalibrationError(
            f"target {target:g} not bracketed: f({lo:g})={flo:g}, f({hi:g})={fhi:g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def calibrate_intercept(beta, features, prevalence, offset=None, bracket=(-40.0, 40.0)):
    """Intercept making the mean of ``expit(b0 + X beta [+ offset])`` equal the target."""
    if features.shape[1]:
        eta = features @ np.asarray(beta, dtype=float)
    else:
        eta = np.zeros(features.shape[0])
    if offset is not None:
        eta = eta + offset
    if not np.any(eta):
        return float(logit(prevalence))
    return _bisect(lambda b0: float(expit(b0 + eta).mean()), *bracket, prevalence)


def generate_outcomes(features, intercept, beta, surrogates=None, surrogate_coefs=None,
                      rng=None):
    """Independent Bernoulli outcomes from the logistic model."""
    eta = intercept + (features @ np.asarray(beta, dtype=float) if features.shape[1] else 0.0)
    if surrogates is not None and surrogate_coefs is not None and len(surrogate_coefs):
        eta = eta + surrogates @ np.asarray(surrogate_coefs, dtype=float)
    rng = np.random.default_rng(rng)
    prob = expit(np.broadcast_to(eta, (features.shape[0],)))
    return (rng.random(prob.size) < prob).astype(np.int8)


def _conditional_surrogates(y, targets, rngs):
    Z = np.empty((y.size, len(targets)), dtype=np.int8)
    for k, ((sens, spec), rng) in enumerate(zip(targets, rngs)):
        u = rng.random(y.size)
        Z[:, k] = np.where(y == 1, u < sens, u >= spec)
    return Z


def operating_characteristics(y, z):
    y = np.asarray(y).astype(bool)
    z = np.asarray(z).astype(bool)
    return {
        "sensitivity": float(z[y].mean()) if y.any() else float("nan"),
        "specificity": float((~z[~y]).mean()) if (~y).any() else float("nan"),
        "p_z": float(z.mean()),
    }


def _expected_characteristics(prob, z):
    z = z.astype(bool)
    return (float(prob[z].sum() / prob.sum()),
            float((1 - prob)[~z].sum() / (1 - prob).sum()))


def _calibrate_paper_mode(eta_x, Z, targets, prevalence, max_iter=100, tol=0.01):
    """Find surrogate coefficients and intercept for the Y | X, Z model.

    Surrogate marginals are fixed at the implied ``P(Z=1)``; each surrogate
    coefficient is then bisected (Gauss-Seidel over surrogates, intercept
    recalibrated inside) so the expected sensitivity hits its target.
    """
    k = len(targets)
    coefs = np.full(k, 2.0)
    best = None
    for it in range(max_iter):
        for m, (sens, _) in enumerate(targets):
            def sens_at(c, m=m):
                trial = coefs.copy()
                trial[m] = c
                offset = eta_x + Z @ trial
                b0 = _bisect(lambda b: float(expit(b + offset).mean()), -40, 40, prevalence)
                return _expected_characteristics(expit(b0 + offset), Z[:, m])[0]
            coefs[m] = _bisect(sens_at, -15.0, 15.0, sens, tol=1e-6)
        offset = eta_x + Z @ coefs
        b0 = _bisect(lambda b: float(expit(b + offset).mean()), -40, 40, prevalence)
        prob = expit(b0 + offset)
        got = [_expected_characteristics(prob, Z[:, m]) for m in range(k)]
        err = max(max(abs(g[0] - t[0]), abs(g[1] - t[1])) for g, t in zip(got, targets))
        best = {"iterations": it + 1, "coefs": coefs.tolist(), "intercept": b0,
                "expected": got, "max_error": err}
        if err <= tol and it > 0:
            return b0, coefs, best
    raise CalibrationError(
        f"surrogate calibration did not converge in {max_iter} iterations", best=best)


def attach_surrogates(cohort: Cohort, targets, mode=SurrogateMode.CONDITIONAL_Z_GIVEN_Y,
                      seed=0, names=None):
    """Add surrogate columns and record realized operating characteristics.

    In ``PAPER_Y_GIVEN_Z`` mode the outcomes are regenerated from the
    calibrated ``Y | X, Z`` model, which requires ``cohort.beta``.
    """
    mode = SurrogateMode(mode)
    targets = [tuple(t) for t in targets]
    names = names or [f"z{k + 1}" for k in range(len(targets))]
    rngs = _substream(seed, _SURROGATES, len(targets))
    if mode is SurrogateMode.CONDITIONAL_Z_GIVEN_Y:
        Z = _conditional_surrogates(cohort.outcomes, targets, rngs)
        cohort.surrogates = Z
        cohort.surrogate_coefs = np.zeros(len(targets))
    else:
        if cohort.beta is None:
            raise ValueError("PAPER_Y_GIVEN_Z mode needs the cohort's feature coefficients")
        prevalence = float(cohort.config.prevalence if cohort.config else cohort.outcomes.mean())
        Z = np.empty((cohort.N, len(targets)), dtype=np.int8)
        for k, ((sens, spec), rng) in enumerate(zip(targets, rngs)):
            marginal = sens * prevalence + (1 - spec) * (1 - prevalence)
            Z[:, k] = rng.random(cohort.N) < marginal
        eta_x = cohort.features @ cohort.beta if cohort.p else np.zeros(cohort.N)
        b0, coefs, info = _calibrate_paper_mode(eta_x, Z.astype(float), targets, prevalence)
        (rng_y,) = _substream(seed, _OUTCOMES)
        cohort.outcomes = generate_outcomes(cohort.features, b0, cohort.beta, Z, coefs, rng_y)
        cohort.intercept = b0
        cohort.surrogates = Z
        cohort.surrogate_coefs = coefs
        cohort.realized["calibration"] = info
    cohort.surrogate_names = list(names)
    cohort.realized["prevalence"] = float(cohort.outcomes.mean())
    cohort.realized["surrogates"] = {
        name: operating_characteristics(cohort.outcomes, Z[:, k]) for k, name in enumerate(names)
    }
    return cohort


def simulate_cohort(config: CohortConfig) -> Cohort:
    """Full cohort: features, coefficients, intercept, outcomes, surrogates."""
    X, freqs = generate_features(config)
    beta = assign_coefficients(freqs, config.prevalence) if config.p else np.zeros(0)
    b0 = calibrate_intercept(beta, X, config.prevalence)
    (rng_y,) = _substream(config.seed, _OUTCOMES)
    y = generate_outcomes(X, b0, beta, rng=rng_y)
    cohort = Cohort(X, y, np.empty((config.N, 0), dtype=np.int8), np.arange(config.N), [],
                    feature_freqs=freqs, beta=beta, intercept=b0, config=config)
    if config.surrogates:
        attach_surrogates(cohort, config.surrogates, config.surrogate_mode, seed=config.seed)
    else:
        cohort.realized["prevalence"] = float(y.mean())
    return cohort


def simulate_outcome_surrogate(N, prevalence, targets, seed=None):
    """Outcomes and conditionally drawn surrogates only, no features."""
    ss = np.random.SeedSequence(seed)
    rng_y, *rngs = [np.random.default_rng(s) for s in ss.spawn(1 + len(targets))]
    y = (rng_y.random(N) < prevalence).astype(np.int8)
    Z = _conditional_surrogates(y, [tuple(t) for t in targets], rngs)
    return Cohort(np.empty((N, 0), dtype=np.uint8), y, Z, np.arange(N),
                  [f"z{k + 1}" for k in range(len(targets))])


def binormal_cohort(mu1, sigma, prevalence, N, targets=((0.40, 0.95),), seed=None):
    """Continuous features with ``X | Y=y ~ N(y * mu1, sigma)``.

    Returns a :class:`Cohort` whose ``features`` are float64, plus the LDA
    coefficients ``sigma^-1 mu1`` in ``beta``. Surrogates are drawn from Y.
    """
    mu1 = np.asarray(mu1, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ss = np.random.SeedSequence(seed)
    rng_y, rng_x, *rngs = [np.random.default_rng(s) for s in ss.spawn(2 + len(targets))]
    y = (rng_y.random(N) < prevalence).astype(np.int8)
    chol = np.linalg.cholesky(sigma)
    X = rng_x.standard_normal((N, mu1.size)) @ chol.T + np.outer(y, mu1)
    Z = _conditional_surrogates(y, [tuple(t) for t in targets], rngs)
    beta = np.linalg.solve(sigma, mu1)
    b0 = float(np.log(prevalence / (1 - prevalence)) - 0.5 * mu1 @ beta)
    cohort = Cohort(X, y, Z, np.arange(N), [f"z{k + 1}" for k in range(len(targets))],
                    beta=beta, intercept=b0)
    cohort.realized["prevalence"] = float(y.mean())
    return cohort


def save_cohort(cohort: Cohort, csv_path, meta_path=None):
    """Write ``id,y,<surrogates>,x1..xp`` CSV plus a metadata JSON."""
    header = ["id", "y", *cohort.surrogate_names, *[f"x{j + 1}" for j in range(cohort.p)]]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        fmt = (lambda v: str(int(v))) if cohort.features.dtype.kind in "ui" else repr
        for i in range(cohort.N):
            writer.writerow([int(cohort.ids[i]), int(cohort.outcomes[i]),
                             *[int(v) for v in cohort.surrogates[i]],
                             *[fmt(v) for v in cohort.features[i]]])
    if meta_path is not None:
        meta = {
            "config": cohort.config.to_dict() if cohort.config else None,
            "intercept": cohort.intercept,
            "beta": None if cohort.beta is None else cohort.beta.tolist(),
            "surrogate_coefs": None if cohort.surrogate_coefs is None
            else np.asarray(cohort.surrogate_coefs).tolist(),
            "feature_freqs": None if cohort.feature_freqs is None else cohort.feature_freqs.tolist(),
            "surrogate_names": cohort.surrogate_names,
            "realized": cohort.realized,
        }
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2)


def load_cohort(csv_path, meta_path=None) -> Cohort:
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader]
    xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    zcols = [i for i, h in enumerate(header) if i >= 2 and i not in xcols]
    arr = np.array(rows, dtype=object)
    ids = arr[:, 0].astype(np.int64)
    y = arr[:, 1].astype(np.int8)
    Z = arr[:, zcols].astype(np.int8) if zcols else np.empty((len(rows), 0), np.int8)
    Xf = arr[:, xcols].astype(float) if xcols else np.empty((len(rows), 0))
    X = Xf.astype(np.uint8) if np.all(np.isin(Xf, (0.0, 1.0))) else Xf
    cohort = Cohort(X, y, Z, ids, [header[i] for i in zcols])
    if meta_path is not None:
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta.get("config"):
            cohort.config = CohortConfig.from_dict(meta["config"])
        cohort.intercept = meta.get("intercept")
        if meta.get("beta") is not None:
            cohort.beta = np.asarray(meta["beta"])
        if meta.get("feature_freqs") is not None:
            cohort.feature_freqs = np.asarray(meta["feature_freqs"])
        cohort.realized = meta.get("realized", {})
    return cohort
