"""Experiment engine: learning curves, bootstrap design comparison, theory checks.

A learning-curve run repeats, for each replicate, the following steps:
simulate (or reuse) a cohort, hold out a validation set, draw one
development sample per (design, n), fit a cross-validated penalized
logistic model and record its validation AUC. Every random choice is
seeded from ``(master_seed, replicate, ...)`` through
``numpy.random.SeedSequence`` spawn keys, so results do not depend on the
number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .cohort import Cohort, CohortConfig, binormal_cohort, simulate_cohort
from .design import BinormalParams, DesignKind, DesignSpec, auc_index
from .exceptions import DesignError
from .metrics import auc_ipw, auc_wilcoxon
from .pglm import CV_TOL, PenaltySpec, coefficient_covariance, fit, fit_cv, predict_linear
from .sampler import Sample, draw, draw_inverse_sgs, draw_sgs, draw_srs

log = logging.getLogger(__name__)

__all__ = [
    "DesignEntry",
    "ModelConfig",
    "ValidationConfig",
    "ExperimentConfig",
    "ReplicateRecord",
    "CurvePoint",
    "Frame",
    "ComparisonRow",
    "DiagnosticRow",
    "derive_seed",
    "run_replicate",
    "aggregate",
    "run_learning_curve",
    "write_curves_csv",
    "run_manifest",
    "run_design_comparison",
    "theory_diagnostics",
]

CURVE_HEADER = ("design", "surrogate", "n", "mean_auc", "se", "replicates", "failures")
_MIN_FOLDS = 3

# spawn-key tags for per-replicate seeds
_K_COHORT, _K_VALIDATION, _K_SAMPLE, _K_CV = 0, 1, 2, 3


def derive_seed(master, *keys) -> int:
    """Deterministic 64-bit seed for the substream ``keys`` of ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DesignEntry:
    kind: DesignKind = DesignKind.SRS
    ratio: float = 0.5
    surrogate: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if self.kind is DesignKind.SGS and not self.surrogate:
            raise ValueError("an SGS design needs a surrogate name")
        if self.kind is DesignKind.INVERSE_SGS:
            raise ValueError("inverse SGS is only used by run_design_comparison")

    def spec(self, n) -> DesignSpec:
        return DesignSpec(self.kind, n, self.ratio)

    @property
    def label(self):
        return self.spec(1).label

    @property
    def surrogate_label(self):
        return self.surrogate if self.kind is DesignKind.SGS else "none"


@dataclass
class ModelConfig:
    norm: str = "L1"
    folds: int = 10
    n_lambda: int = 50
    lambda_ratio: float = 1e-4
    adaptive_folds: bool = True
    patience: int | None = 10
    cv_tol: float = CV_TOL
    standardize: bool = True
    include_surrogates: bool = True


@dataclass
class ValidationConfig:
    size: int = 10_000
    design: str = "SRS"
    ratio: float = 0.5
    surrogate: str | None = None

    def __post_init__(self):
        if self.design not in ("SRS", "SGS"):
            raise ValueError("validation design must be SRS or SGS")
        if self.design == "SGS" and not self.surrogate:
            raise ValueError("SGS validation needs a surrogate name")


@dataclass
class ExperimentConfig:
    cohort: CohortConfig = field(default_factory=CohortConfig)
    designs: list = field(default_factory=lambda: [DesignEntry()])
    sizes: list = field(default_factory=lambda: [500])
    replicates: int = 100
    model: ModelConfig = field(default_factory=ModelConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    master_seed: int = 0
    cohort_mode: str = "fresh"
    failure_tolerance: float = 0.2

    def __post_init__(self):
        if isinstance(self.cohort, dict):
            self.cohort = CohortConfig.from_dict(self.cohort)
        self.designs = [d if isinstance(d, DesignEntry) else DesignEntry(**d)
                        for d in self.designs]
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.validation, dict):
            self.validation = ValidationConfig(**self.validation)
        self.sizes = [int(n) for n in self.sizes]
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.cohort_mode not in ("fresh", "fixed"):
            raise ValueError("cohort_mode must be 'fresh' or 'fixed'")
        if self.validation.size >= self.cohort.N:
            raise ValueError("validation set would leave no development units")

    def to_dict(self):
        d = asdict(self)
        d["cohort"] = self.cohort.to_dict()
        d["designs"] = [{"kind": e.kind.value, "ratio": e.ratio, "surrogate": e.surrogate}
                        for e in self.designs]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def digest(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class ReplicateRecord:
    replicate: int
    design: str
    surrogate: str
    n: int
    auc: float | None
    n_distinct: int
    n_cases: int
    error: str | None = None


@dataclass
class CurvePoint:
    design: str
    surrogate: str
    n: int
    mean_auc: float
    se: float
    replicates: int
    failures: int

    @property
    def dropped(self):
        return math.isnan(self.mean_auc)


class ReplicateFailure(RuntimeError):
    """A replicate that cannot produce a validation AUC (e.g. too few cases)."""


def _folds_for(y, model: ModelConfig):
    minority = int(min(y.sum(), y.size - y.sum()))
    folds = min(model.folds, minority) if model.adaptive_folds else model.folds
    if folds < _MIN_FOLDS or minority < folds:
        raise ReplicateFailure(f"sample has {int(y.sum())} cases among {y.size} units; "
                               f"{model.folds}-fold CV is not possible")
    return folds


def _penalty(model: ModelConfig, p_features, n_surrogates):
    factors = np.r_[np.ones(p_features), np.zeros(n_surrogates)]
    return PenaltySpec(model.norm, 0.0, factors)


def fit_and_score(X_dev, y_dev, X_val, y_val, model: ModelConfig, penalty, seed,
                  val_weights=None):
    """Cross-validated fit on the development rows, AUC on the validation rows."""
    folds = _folds_for(y_dev, model)
    result, _ = fit_cv(X_dev, y_dev, penalty, folds=folds, n_lambda=model.n_lambda,
                       ratio=model.lambda_ratio, seed=seed, standardize=model.standardize,
                       cv_tol=model.cv_tol, patience=model.patience)
    score = predict_linear(result, X_val)
    if val_weights is None:
        return auc_wilcoxon(y_val, score), result
    return auc_ipw(y_val, score, val_weights), result


def _replicate_cohort(config: ExperimentConfig, rep) -> Cohort:
    key = 0 if config.cohort_mode == "fixed" else rep
    cfg = CohortConfig.from_dict({**config.cohort.to_dict(),
                                  "seed": derive_seed(config.master_seed, _K_COHORT, key)})
    return simulate_cohort(cfg)


def _split_validation(cohort: Cohort, vcfg: ValidationConfig, seed):
    """Return (validation sample, development-eligible rows)."""
    if vcfg.design == "SRS":
        val = draw_srs(cohort.N, vcfg.size, seed)
    else:
        val = draw_sgs(cohort.surrogate(vcfg.surrogate), vcfg.size, vcfg.ratio, seed)
    mask = np.ones(cohort.N, dtype=bool)
    mask[val.unit_indices] = False
    return val, np.flatnonzero(mask)


def run_replicate(config: ExperimentConfig, rep, cohort: Cohort | None = None):
    """All (design, n) records for replicate ``rep``."""
    cohort = cohort if cohort is not None else _replicate_cohort(config, rep)
    val, eligible = _split_validation(
        cohort, config.validation, derive_seed(config.master_seed, _K_VALIDATION, rep))
    include = config.model.include_surrogates
    n_sur = cohort.surrogates.shape[1] if include else 0
    penalty = _penalty(config.model, cohort.p, n_sur)
    X_val = cohort.design_matrix(val.unit_indices, include)
    y_val = cohort.outcomes[val.unit_indices]
    w_val = None if config.validation.design == "SRS" else val.weights
    records = []
    for d_idx, entry in enumerate(config.designs):
        surrogate = cohort.surrogate(entry.surrogate) if entry.surrogate else None
        for n_idx, n in enumerate(config.sizes):
            rec = ReplicateRecord(rep, entry.label, entry.surrogate_label, n, None, 0, 0)
            try:
                sample = draw(entry.spec(n), cohort.outcomes, surrogate,
                              derive_seed(config.master_seed, _K_SAMPLE, rep, d_idx, n_idx),
                              eligible=eligible)
                rows = sample.unit_indices
                if np.intersect1d(rows, val.unit_indices).size:
                    raise AssertionError("development sample overlaps the validation set")
                y_dev = cohort.outcomes[rows]
                rec.n_distinct = sample.n_distinct
                rec.n_cases = int(cohort.outcomes[np.unique(rows)].sum())
                rec.auc, _ = fit_and_score(
                    cohort.design_matrix(rows, include), y_dev, X_val, y_val, config.model,
                    penalty, derive_seed(config.master_seed, _K_CV, rep, d_idx, n_idx), w_val)
            except (ReplicateFailure, DesignError, ValueError) as exc:
                rec.error = str(exc)
                log.info("replicate %d, %s n=%d failed: %s", rep, entry.label, n, exc)
            records.append(rec)
    return records


def aggregate(records, config: ExperimentConfig):
    """Collapse replicate records into one :class:`CurvePoint` per (design, n)."""
    points = []
    for entry in config.designs:
        for n in config.sizes:
            sel = [r for r in records if r.design == entry.label
                   and r.surrogate == entry.surrogate_label and r.n == n]
            aucs = np.array([r.auc for r in sel if r.auc is not None])
            failures = len(sel) - aucs.size
            if not sel or failures > config.failure_tolerance * len(sel):
                mean, se = math.nan, math.nan
                log.warning("%s (%s) n=%d dropped: %d of %d replicates failed",
                            entry.label, entry.surrogate_label, n, failures, len(sel))
            else:
                mean = float(aucs.mean())
                se = float(aucs.std(ddof=1) / math.sqrt(aucs.size)) if aucs.size > 1 else 0.0
            points.append(CurvePoint(entry.label, entry.surrogate_label, n, mean, se,
                                     len(sel), failures))
    return points


def run_learning_curve(config: ExperimentConfig, jobs=1, *, return_records=False):
    """Learning-curve table; replicates run on ``jobs`` worker processes."""
    fixed = _replicate_cohort(config, 0) if config.cohort_mode == "fixed" else None
    reps = range(config.replicates)
    if jobs == 1:
        per_rep = [run_replicate(config, r, fixed) for r in reps]
    else:
        from joblib import Parallel, delayed
        per_rep = Parallel(n_jobs=jobs)(delayed(run_replicate)(config, r, fixed) for r in reps)
    records = [rec for recs in per_rep for rec in recs]
    points = aggregate(records, config)
    return (points, records) if return_records else points


def _fmt(v):
    return "" if isinstance(v, float) and math.isnan(v) else f"{v:.6f}"


def write_curves_csv(points, stream=None) -> str:
    """CSV with header ``design,surrogate,n,mean_auc,se,replicates,failures``.

    Dropped points keep their row with empty ``mean_auc`` and ``se``.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for pt in points:
        writer.writerow([pt.design, pt.surrogate, pt.n, _fmt(pt.mean_auc), _fmt(pt.se),
                         pt.replicates, pt.failures])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def run_manifest(config: ExperimentConfig) -> dict:
    import numba
    import scipy
    return {
        "config_sha256": config.digest(),
        "master_seed": config.master_seed,
        "config": config.to_dict(),
        "versions": {
            "sgsdesign": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
    }


# -- bootstrap design comparison ---------------------------------------------

@dataclass
class Frame:
    """Labelled rows available for resampling or validation."""

    X: np.ndarray
    y: np.ndarray
    z: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y).astype(np.int8)
        self.z = np.asarray(self.z).astype(np.int8)
        if not (self.X.shape[0] == self.y.size == self.z.size):
            raise ValueError("frame arrays disagree in length")

    def __len__(self):
        return self.y.size


@dataclass
class ComparisonRow:
    design: str
    n: int
    mean_auc: float
    lower: float
    upper: float
    replicates: int
    failures: int


COMPARISON_DESIGNS = ("SGS", "SRS")


def run_design_comparison(frame: Frame, validation: Frame, sizes, B, model: ModelConfig,
                          seed, *, ratio, p_z, cohort_size, factors=None, level=0.95,
                          replace_inverse=True):
    """Bootstrap comparison of SGS against SRS emulated by inverse SGS.

    ``frame`` is an SGS-collected development set with allocation ``ratio``
    drawn from a cohort of ``cohort_size`` units whose surrogate-positive
    rate is ``p_z``. For each size ``n`` and each of B replicates:

    * SGS: ``n`` rows drawn uniformly with replacement from the frame,
      keeping its surrogate composition;
    * SRS: ``n`` rows drawn by inverse SGS, under-including surrogate
      positives so the draw has cohort composition.

    Each draw gets a cross-validated fit scored on ``validation`` (IPW AUC
    when the validation frame carries weights). Returns one
    :class:`ComparisonRow` per (design, n) with a percentile interval.
    """
    p = frame.X.shape[1]
    penalty = PenaltySpec(model.norm, 0.0, np.ones(p) if factors is None else factors)
    base = Sample(np.arange(len(frame)), np.ones(len(frame)), DesignSpec(
        DesignKind.SGS, len(frame), ratio))
    rows_out = []
    for d_idx, name in enumerate(COMPARISON_DESIGNS):
        for n_idx, n in enumerate(sizes):
            aucs, failures = [], 0
            for b in range(B):
                s_draw = derive_seed(seed, _K_SAMPLE, d_idx, n_idx, b)
                if name == "SGS":
                    pick = np.random.default_rng(s_draw).integers(0, len(frame), size=n)
                else:
                    pick = draw_inverse_sgs(base, frame.z, n, ratio, p_z, s_draw,
                                            replace=replace_inverse,
                                            cohort_size=cohort_size).unit_indices
                try:
                    auc, _ = fit_and_score(frame.X[pick], frame.y[pick], validation.X,
                                           validation.y, model, penalty,
                                           derive_seed(seed, _K_CV, d_idx, n_idx, b),
                                           validation.weights)
                    aucs.append(auc)
                except (ReplicateFailure, ValueError):
                    failures += 1
            if aucs:
                arr = np.asarray(aucs)
                alpha = (1 - level) / 2
                lo, hi = np.quantile(arr, [alpha, 1 - alpha])
                rows_out.append(ComparisonRow(name, n, float(arr.mean()), float(lo),
                                              float(hi), B, failures))
            else:
                rows_out.append(ComparisonRow(name, n, math.nan, math.nan, math.nan,
                                              B, failures))
    return rows_out


# -- theory diagnostics ------------------------------------------------------

@dataclass
class DiagnosticRow:
    design: str
    n: int
    empirical_auc: float
    index_auc: float
    gap: float
    replicates: int
    rank_agreement: float = math.nan


def theory_diagnostics(mu1, sigma, *, prevalence=0.10, sizes=(500, 5000),
                       designs=(DesignEntry(), DesignEntry("SGS", 0.5, "z1")),
                       targets=((0.40, 0.95),), replicates=20, n_validation=20_000,
                       cohort_size=None, seed=0, return_replicates=False):
    """Empirical validation AUC against the AUC index with estimated V.

    Features are bi-normal with case mean ``mu1``, control mean 0 and
    shared covariance ``sigma``. Each replicate draws a fresh cohort, an SRS
    validation set, and one development sample per design; an unpenalized
    logistic fit on the features alone gives the coefficient covariance V,
    and the index is evaluated with the true coefficients and zero bias.
    ``rank_agreement`` is the share of replicates in which the designs are
    ordered identically by empirical AUC and by the index (two designs only).
    """
    mu1 = np.asarray(mu1, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = mu1.size
    beta_true = np.linalg.solve(sigma, mu1)
    N = cohort_size or (max(sizes) * 20 + n_validation)
    emp = np.full((replicates, len(designs), len(sizes)), np.nan)
    idx = np.full_like(emp, np.nan)
    for r in range(replicates):
        cohort = binormal_cohort(mu1, sigma, prevalence, N, targets,
                                 seed=derive_seed(seed, _K_COHORT, r))
        val, eligible = _split_validation(cohort, ValidationConfig(n_validation),
                                          derive_seed(seed, _K_VALIDATION, r))
        Xv, yv = cohort.features[val.unit_indices], cohort.outcomes[val.unit_indices]
        for d_idx, entry in enumerate(designs):
            surrogate = cohort.surrogate(entry.surrogate) if entry.surrogate else None
            for n_idx, n in enumerate(sizes):
                sample = draw(entry.spec(n), cohort.outcomes, surrogate,
                              derive_seed(seed, _K_SAMPLE, r, d_idx, n_idx), eligible=eligible)
                X, y = cohort.features[sample.unit_indices], cohort.outcomes[sample.unit_indices]
                res = fit(X, y, PenaltySpec("L2", 0.0), standardize=False)
                V = coefficient_covariance(res, X).slopes(p)
                emp[r, d_idx, n_idx] = auc_wilcoxon(yv, predict_linear(res, Xv))
                params = BinormalParams(mu1, sigma, beta_true, np.zeros(p), V)
                idx[r, d_idx, n_idx] = auc_index(params)[1]
    rows = []
    for n_idx, n in enumerate(sizes):
        agree = math.nan
        if len(designs) == 2:
            e = np.sign(emp[:, 0, n_idx] - emp[:, 1, n_idx])
            i = np.sign(idx[:, 0, n_idx] - idx[:, 1, n_idx])
            agree = float(np.mean(e == i))
        for d_idx, entry in enumerate(designs):
            e_mean = float(emp[:, d_idx, n_idx].mean())
            i_mean = float(idx[:, d_idx, n_idx].mean())
            rows.append(DiagnosticRow(f"{entry.label}" + (f" ({entry.surrogate})"
                                                          if entry.surrogate else ""),
                                      n, e_mean, i_mean, e_mean - i_mean, replicates, agree))
    return (rows, emp, idx) if return_replicates else rows
