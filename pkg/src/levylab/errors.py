"""Exception hierarchy shared by all modules."""


class LevyLabError(Exception):
    """Base class for every error raised by the package."""


class RejectParam(LevyLabError, ValueError):
    """A model parameter lies outside its admissible range."""


class RejectCompoundPoisson(RejectParam):
    """The model is a pure compound Poisson process (zero Gaussian part and drift, finite activity)."""


class DomainError(LevyLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class Unsupported(LevyLabError):
    """No closed form is available for this model."""


class UndeterminedClassification(LevyLabError):
    """Quadrature could not bracket the ladder-mean integral within budget."""


class RefusesInfiniteMean(LevyLabError):
    """The operation needs a finite mean ladder height."""


class CalibrationFailure(LevyLabError):
    """Monte Carlo calibration residual exceeds its threshold."""


class BudgetExceeded(LevyLabError):
    """A simulation exceeded a configured resource cap."""


class WeightDegeneracy(LevyLabError):
    """Effective sample size of an importance-weighted ensemble fell below the floor."""


class WeightDegeneracyWarning(UserWarning):
    """Warning counterpart of :class:`WeightDegeneracy`."""


class InsufficientBin(LevyLabError):
    """A conditioning bin holds fewer samples than required."""


class TailUnbounded(LevyLabError):
    """The discarded tail of an exponential functional cannot be bounded."""


class CoverageExceeded(LevyLabError):
    """Requested times run past the range covered by the simulated clock."""


class HorizonExhausted(LevyLabError):
    """A stopping rule did not fire before the horizon."""


class RoundCap(LevyLabError):
    """An iterative coupling scheme exceeded its round cap."""


class EmptySample(LevyLabError, ValueError):
    """A statistic was requested on an empty sample."""


class ConfigError(LevyLabError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class UnknownExperiment(ConfigError):
    """The experiment name does not map to any registered experiment."""
