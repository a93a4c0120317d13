"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user configuration or precondition violation.

    ``field`` names the offending parameter when one can be singled out.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class NumericalFailure(RuntimeError):
    """A numerical invariant was violated during computation."""

    kind = "numerical"

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class SolverFailure(NumericalFailure):
    kind = "solver"


class PositivityLoss(NumericalFailure):
    kind = "positivity"


class DtCollapse(NumericalFailure):
    kind = "dt_collapse"
