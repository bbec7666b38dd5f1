"""A small learning curve: SRS versus surrogate-guided sampling.

Simulates a 20,000-record cohort with 100 binary features and a 5%
outcome, then trains a cross-validated lasso on development samples drawn
by each design and scores it on a held-out SRS validation set. Ten
replicates keep the run to about a minute; raise ``replicates`` for
smoother curves.

    python3 demos/small_learning_curve.py
"""

import logging
import sys

from sgsdesign.cohort import CohortConfig
from sgsdesign.harness import (
    DesignEntry,
    ExperimentConfig,
    ValidationConfig,
    run_learning_curve,
    write_curves_csv,
)

logging.basicConfig(level=logging.ERROR)

config = ExperimentConfig(
    cohort=CohortConfig(N=20_000, p=100, prevalence=0.05),
    designs=[
        DesignEntry("SRS"),
        DesignEntry("SGS", 0.5, "z1"),   # sens 0.40, spec 0.95
        DesignEntry("SGS", 0.5, "z2"),   # sens 0.67, spec 0.66
        DesignEntry("ROS"),
    ],
    sizes=[300, 1000],
    replicates=10,
    validation=ValidationConfig(5000),
    master_seed=1,
)

points = run_learning_curve(config)
write_curves_csv(points, sys.stdout)
