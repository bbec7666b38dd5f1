"""Closed-form calculators for surrogate-guided sampling designs.

Everything here is a pure function of its inputs. Probabilities follow the
usual conventions:

    sensitivity  = P(Z=1 | Y=1)
    specificity  = P(Z=0 | Y=0)
    p_z          = P(Z=1)
    R            = P(Z=1 | selected)

The case/control odds ratio of an SGS sample relative to a simple random
sample does not depend on the abstraction budget ``n``, so ``n`` is not a
parameter of :func:`o_ratio_exact`.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DegenerateDesignError,
    DesignError,
    InfeasibleDesignError,
    SpecificityError,
)

__all__ = [
    "SurrogateSpec",
    "PopulationSpec",
    "DesignKind",
    "DesignSpec",
    "BinormalParams",
    "normal_cdf",
    "p_z",
    "likelihood_ratios",
    "stratum_case_rates",
    "o_ratio_exact",
    "o_ratio_rare_approx",
    "o_ratio_surface",
    "write_surface_csv",
    "sampling_probabilities",
    "expected_cases",
    "srs_equivalent_size",
    "auc_binormal",
    "auc_index",
    "auc_index_from_moments",
]

SURFACE_HEADER = ("sensitivity", "specificity", "R", "prevalence", "o_ratio")

_NEGATE_HINT = (
    "specificity {spec:.4g} < 0.5; negate the surrogate (use 1 - Z), which "
    "has sensitivity {nsens:.4g} and specificity {nspec:.4g}"
)


def _check_prob(name, value, *, open_interval=False):
    if not (0.0 <= value <= 1.0) or (open_interval and value in (0.0, 1.0)):
        interval = "(0, 1)" if open_interval else "[0, 1]"
        raise ValueError(f"{name} must lie in {interval}, got {value!r}")


@dataclass(frozen=True)
class SurrogateSpec:
    """Operating characteristics of a binary enrichment surrogate."""

    sensitivity: float
    specificity: float

    def __post_init__(self):
        _check_prob("sensitivity", self.sensitivity)
        _check_prob("specificity", self.specificity)

    def require_usable(self):
        """Reject surrogates less specific than a coin flip."""
        if self.specificity < 0.5:
            raise SpecificityError(
                _NEGATE_HINT.format(
                    spec=self.specificity,
                    nsens=1.0 - self.sensitivity,
                    nspec=1.0 - self.specificity,
                )
            )
        return self

    def negated(self) -> "SurrogateSpec":
        return SurrogateSpec(1.0 - self.sensitivity, 1.0 - self.specificity)


@dataclass(frozen=True)
class PopulationSpec:
    prevalence: float
    cohort_size: int = 1

    def __post_init__(self):
        _check_prob("prevalence", self.prevalence, open_interval=True)
        if int(self.cohort_size) < 1:
            raise ValueError("cohort_size must be a positive integer")


class DesignKind(str, enum.Enum):
    SRS = "SRS"
    SGS = "SGS"
    ROS = "ROS"
    INVERSE_SGS = "INVERSE_SGS"


@dataclass(frozen=True)
class DesignSpec:
    """A sampling design; ``ratio`` is ignored for SRS and ROS."""

    kind: DesignKind
    budget: int
    ratio: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if int(self.budget) < 1:
            raise ValueError("budget must be a positive integer")
        if self.stratified and not (0.0 < self.ratio < 1.0):
            raise DesignError(
                f"{self.kind.value} needs 0 < R < 1 so both strata are sampled, "
                f"got R={self.ratio!r}"
            )

    @property
    def stratified(self) -> bool:
        return self.kind in (DesignKind.SGS, DesignKind.INVERSE_SGS)

    @property
    def label(self) -> str:
        if not self.stratified:
            return self.kind.value
        return f"{self.kind.value} {_ratio_label(self.ratio)}"


def _ratio_label(ratio):
    odds = ratio / (1.0 - ratio)
    if odds >= 1 and abs(odds - round(odds)) < 1e-9:
        return f"{int(round(odds))}:1"
    if odds < 1 and abs(1 / odds - round(1 / odds)) < 1e-9:
        return f"1:{int(round(1 / odds))}"
    return f"R={ratio:g}"


@dataclass(frozen=True)
class BinormalParams:
    """Inputs to the validation-AUC index under bi-normal features.

    The control-class feature mean is zero; ``mu1`` is the case-class mean,
    ``sigma`` the shared within-class covariance, ``beta`` the true
    coefficients, ``bias`` and ``cov`` the bias and covariance of the
    estimated coefficients.
    """

    mu1: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    bias: np.ndarray | None = None
    cov: np.ndarray | None = None

    def __post_init__(self):
        mu1 = np.atleast_1d(np.asarray(self.mu1, dtype=float))
        p = mu1.shape[0]
        sigma = np.asarray(self.sigma, dtype=float).reshape(p, p)
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        bias = np.zeros(p) if self.bias is None else np.atleast_1d(np.asarray(self.bias, float))
        cov = np.zeros((p, p)) if self.cov is None else np.asarray(self.cov, float)
        if beta.shape != (p,) or bias.shape != (p,) or cov.shape != (p, p):
            raise ValueError("mu1, sigma, beta, bias and cov dimensions disagree")
        for name, m in (("sigma", sigma), ("cov", cov)):
            if not np.allclose(m, m.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
        for name, value in (("mu1", mu1), ("sigma", sigma), ("beta", beta),
                            ("bias", bias), ("cov", cov)):
            object.__setattr__(self, name, value)


def normal_cdf(x):
    """Standard normal CDF, Phi(x) = erfc(-x / sqrt 2) / 2.

    libm's erfc is accurate to a few ulp, far inside the 1e-12 absolute
    error budget the AUC comparisons need. Works on scalars and arrays.
    """
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    from scipy.special import ndtr

    return ndtr(np.asarray(x, dtype=float))


def p_z(pop: PopulationSpec, z: SurrogateSpec) -> float:
    """Marginal surrogate-positive rate P(Z=1)."""
    prev = pop.prevalence
    return z.sensitivity * prev + (1.0 - z.specificity) * (1.0 - prev)


def likelihood_ratios(z: SurrogateSpec) -> tuple[float, float]:
    """Return ``(LR+, LR-)``.

    A perfectly specific surrogate gives ``LR+ = inf``; a surrogate with
    zero specificity gives ``LR- = inf``.
    """
    sens, spec = z.sensitivity, z.specificity
    lr_plus = math.inf if spec == 1.0 else sens / (1.0 - spec)
    lr_minus = math.inf if spec == 0.0 else (1.0 - sens) / spec
    return lr_plus, lr_minus


def stratum_case_rates(pop: PopulationSpec, z: SurrogateSpec) -> tuple[float, float]:
    """Return ``(P(Y=1|Z=1), P(Y=1|Z=0))`` by Bayes' rule."""
    pz = p_z(pop, z)
    if not 0.0 < pz < 1.0:
        raise DegenerateDesignError(f"P(Z=1) = {pz!r}; one surrogate stratum is empty")
    prev = pop.prevalence
    return z.sensitivity * prev / pz, (1.0 - z.sensitivity) * prev / (1.0 - pz)


def o_ratio_exact(pop: PopulationSpec, z: SurrogateSpec, ratio: float) -> float:
    """Expected case/control odds of an SGS sample over that of SRS."""
    z.require_usable()
    _check_prob("R", ratio)
    pz = p_z(pop, z)
    sens, spec = z.sensitivity, z.specificity
    num = ratio * sens + pz * (1.0 - ratio - sens)
    den = ratio * (1.0 - spec) + pz * (spec - ratio)
    if den <= 0.0:
        raise DegenerateDesignError(
            "SGS sample has no expected controls (non-positive O_ratio denominator)"
        )
    return num / den


def o_ratio_rare_approx(z: SurrogateSpec, ratio: float) -> float:
    """Rare-outcome limit ``R * LR+ + (1 - R) * LR-``."""
    z.require_usable()
    _check_prob("R", ratio)
    lr_plus, lr_minus = likelihood_ratios(z)
    if ratio == 0.0:
        return lr_minus
    return ratio * lr_plus + (1.0 - ratio) * lr_minus


def o_ratio_surface(z_grid: Iterable[SurrogateSpec], ratio: float, pop: PopulationSpec):
    """Tabulate :func:`o_ratio_exact` over surrogate specs.

    Returns a list of ``(sensitivity, specificity, R, prevalence, o_ratio)``
    tuples in the order of ``z_grid``.
    """
    rows = []
    for z in z_grid:
        rows.append((z.sensitivity, z.specificity, ratio, pop.prevalence,
                     o_ratio_exact(pop, z, ratio)))
    return rows


def surface_grid(sensitivities: Sequence[float], specificities: Sequence[float]):
    return [SurrogateSpec(float(s), float(c)) for c in specificities for s in sensitivities]


def write_surface_csv(rows, stream=None) -> str:
    """Write surface rows as CSV with 6-decimal fixed notation."""
    buf = io.StringIO() if stream is None else stream
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SURFACE_HEADER)
    for row in rows:
        writer.writerow([f"{v:.6f}" for v in row])
    return buf.getvalue() if stream is None else ""


def sampling_probabilities(design: DesignSpec, pz: float, cohort_size: int) -> tuple[float, float]:
    """Per-stratum inclusion probabilities ``(pi(Z=1), pi(Z=0))``.

    For SGS, ``pi(1) = R/p_z * n/N`` and ``pi(0) = (1-R)/(1-p_z) * n/N``.
    INVERSE_SGS swaps the stratum shares, so ``Z=1`` gets ``1 - R``.
    """
    if not design.stratified:
        raise DesignError("sampling_probabilities needs an SGS or INVERSE_SGS design")
    if not 0.0 < pz < 1.0:
        raise DegenerateDesignError(f"p_z must lie in (0, 1), got {pz!r}")
    share1 = design.ratio if design.kind is DesignKind.SGS else 1.0 - design.ratio
    frac = design.budget / cohort_size
    pi1 = share1 / pz * frac
    pi0 = (1.0 - share1) / (1.0 - pz) * frac
    for stratum, pi in (("Z=1", pi1), ("Z=0", pi0)):
        if pi > 1.0:
            raise InfeasibleDesignError(
                f"budget n={design.budget} exceeds the expected {stratum} stratum "
                f"size (inclusion probability {pi:.4f} > 1)",
                stratum=stratum,
            )
    return pi1, pi0


def expected_cases(design: DesignSpec, pop: PopulationSpec, z: SurrogateSpec | None = None) -> float:
    """Expected number of true cases among the ``n`` abstracted units.

    ROS counts distinct abstracted units, so it matches SRS.
    """
    n = design.budget
    if not design.stratified:
        return n * pop.prevalence
    if z is None:
        raise DesignError("stratified designs need a surrogate spec")
    rate1, rate0 = stratum_case_rates(pop, z)
    share1 = design.ratio if design.kind is DesignKind.SGS else 1.0 - design.ratio
    return n * (share1 * rate1 + (1.0 - share1) * rate0)


def srs_equivalent_size(cases: float, pop: PopulationSpec) -> float:
    """SRS budget with the same expected case count."""
    return cases / pop.prevalence


def auc_binormal(mu1, mu0, var1, var0) -> float:
    """Bi-normal AUC ``Phi(|mu1 - mu0| / sqrt(var1 + var0))``."""
    total = var1 + var0
    if total <= 0:
        raise DegenerateDesignError("var1 + var0 must be positive")
    return normal_cdf(abs(mu1 - mu0) / math.sqrt(total))


def auc_index_from_moments(params: BinormalParams) -> tuple[float, float, float]:
    """Return ``(numerator, denominator, R_AUC)`` of the AUC index."""
    b = params.beta + params.bias
    num = float(params.mu1 @ b) ** 2
    den = (2.0 * (float(b @ params.sigma @ b) + float(np.trace(params.cov @ params.sigma)))
           + float(params.mu1 @ params.cov @ params.mu1))
    if den <= 0:
        raise DegenerateDesignError("AUC index denominator is zero")
    return num, den, num / den


def auc_index(params: BinormalParams) -> tuple[float, float]:
    """Validation-AUC index ``(R_AUC, Phi(sqrt(R_AUC)))``.

    Larger coefficient covariance ``cov`` inflates the denominator and
    lowers the index.
    """
    _, _, r_auc = auc_index_from_moments(params)
    return r_auc, normal_cdf(math.sqrt(r_auc))
