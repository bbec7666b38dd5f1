"""Surrogate-guided sampling: design calculators, samplers, learners and experiments.

The subpackages are importable on their own; the most common entry points
are re-exported here.
"""

__version__ = "0.1.0"

from .design import (  # noqa: E402
    DesignKind,
    DesignSpec,
    PopulationSpec,
    SurrogateSpec,
    expected_cases,
    likelihood_ratios,
    o_ratio_exact,
    o_ratio_rare_approx,
    p_z,
    sampling_probabilities,
)
from .metrics import auc_ipw, auc_wilcoxon  # noqa: E402

__all__ = [
    "__version__",
    "DesignKind",
    "DesignSpec",
    "PopulationSpec",
    "SurrogateSpec",
    "auc_ipw",
    "auc_wilcoxon",
    "expected_cases",
    "likelihood_ratios",
    "o_ratio_exact",
    "o_ratio_rare_approx",
    "p_z",
    "sampling_probabilities",
]
