"""Exception types shared across the package."""


class DesignError(ValueError):
    """Base class for invalid sampling-design inputs."""


class InfeasibleDesignError(DesignError):
    """A design asks for more units than a stratum can supply."""

    def __init__(self, message, stratum=None):
        super().__init__(message)
        self.stratum = stratum


class DegenerateDesignError(DesignError):
    """A closed-form quantity is undefined for the given inputs."""


class SpecificityError(DesignError):
    """Surrogate specificity below 0.5 passed to a design evaluator."""


class UndefinedAUCError(ValueError):
    """AUC requested on data lacking cases or controls."""


class CalibrationError(RuntimeError):
    """Cohort calibration did not bracket or converge."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
