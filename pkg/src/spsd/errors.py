"""Exception taxonomy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to, so library
errors translate to stable, scriptable exit statuses.
"""


class SpsdError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class UsageError(SpsdError):
    """Bad CLI arguments or an invalid/unknown configuration key."""

    exit_code = 2


class AssumptionViolationError(SpsdError):
    """A model-level precondition failed (spectrum outside the open unit
    disc, non-positive state where positivity is required, degenerate
    orbit)."""

    exit_code = 3


class SpectrumError(AssumptionViolationError):
    """Eigenvalue moduli not strictly inside (0, 1) where required."""


class PositivityViolationError(AssumptionViolationError):
    """A state or model that must stay positive failed to."""


class NumericalError(SpsdError):
    """A computation failed for numerical reasons (singular system,
    iteration cap, non-convergence, blow-up)."""

    exit_code = 4


class SingularMatrixError(NumericalError):
    """A linear solve met a pivot below the singularity threshold."""


class ConvergenceError(NumericalError):
    """An iteration (Newton, eigenvalue QR, series) hit its cap without
    meeting its tolerance."""


class SimulationError(NumericalError):
    """Monte Carlo run failed (too many blown-up paths)."""


class ThresholdError(SpsdError):
    """A checked reproduction run exceeded its error thresholds."""

    exit_code = 5
