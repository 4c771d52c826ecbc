"""Error hierarchy and the top-level fatal handler.

Every failure the library raises on purpose derives from ``BeamTrackError`` and
carries the CLI exit code it maps to, so the entry point needs exactly one handler.
"""

import logging

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_PROPERTY = 3


class BeamTrackError(Exception):
    """Base class for all expected failures."""

    exit_code: int = EXIT_VALIDATION


# =============================================================================
# Input / scenario validation (exit 1)
# =============================================================================


class ScenarioError(BeamTrackError):
    """Scenario document failed validation."""


class SchemaError(ScenarioError):
    """Document does not parse or does not match the scenario schema."""


class RankDeficientError(ScenarioError):
    """C not full rank."""


class SingularControlMatrixError(ScenarioError):
    """C·B singular, the optimal law is undefined."""


class InitialConditionError(ScenarioError):
    """Initial condition violates C₀x̂₀=0 while the optimal law is selected."""


class NotPositiveDefiniteError(ScenarioError):
    """A matrix documented as positive definite is not."""


class SymmetryError(BeamTrackError, ValueError):
    """Matrix is not symmetric within tolerance."""


class DomainError(BeamTrackError, ValueError):
    """Argument outside the domain of a function."""


class TimeRangeError(BeamTrackError, ValueError):
    """Time outside the schedule horizon."""


# =============================================================================
# Numeric fatals (exit 2)
# =============================================================================


class NumericError(BeamTrackError):
    """Numerical failure that invalidates a run or a bound."""

    exit_code = EXIT_NUMERIC


class SingularMatrixError(NumericError):
    """Linear solve against a singular matrix."""


class CovarianceLossError(NumericError):
    """Covariance lost positive definiteness (step size or conditioning problem)."""


class GridRangeError(NumericError):
    """Flow or jump map left the tabulated σ range."""

    def __init__(
        self, sigma: float, low: float, high: float, message: str | None = None
    ) -> None:
        self.sigma = sigma
        self.low = low
        self.high = high
        super().__init__(
            message or f'σ={sigma:.6g} outside grid range [{low:.6g}, {high:.6g}]'
        )


class StepSizeError(NumericError):
    """Backward recursion step too large for a positive survival factor."""


# =============================================================================
# Capability gates and property failures
# =============================================================================


class NotIsotropicError(BeamTrackError):
    """Scenario is outside the isotropic subclass the grid solver handles."""


class PropertyFailure(BeamTrackError):
    """At least one verification property failed."""

    exit_code = EXIT_PROPERTY


def exit_code_for(error: BaseException) -> int:
    """Exit code for an exception reaching the entry point."""
    if isinstance(error, BeamTrackError):
        return error.exit_code
    return EXIT_NUMERIC if isinstance(error, ArithmeticError) else EXIT_VALIDATION


def handle_fatal(error: BaseException) -> int:
    """Handle an exception that escaped a command.

    Logs it with full traceback for unexpected types and a single line for
    the expected ones, then returns the exit code.
    """
    error_class = type(error).__name__
    if isinstance(error, BeamTrackError):
        LOGGER.error('%s: %s', error_class, error)
    else:
        LOGGER.exception('Unhandled %s: %s', error_class, error, exc_info=error)
    return exit_code_for(error)
