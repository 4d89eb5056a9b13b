"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: ValidationError -> 2, InfeasibleError -> 3,
anything else -> 4.
"""


class DriftmapError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DriftmapError):
    """Bad input: schema violation, broken invariant, out-of-range value."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class InfeasibleError(DriftmapError):
    """Structurally valid input that cannot be realized on the hardware."""


class ConvergenceError(DriftmapError):
    """A numerical routine failed to converge within its budget."""
