"""Exception types raised across the package."""


class ClfCbfError(Exception):
    """Base class for all package errors."""


class SingularityError(ClfCbfError):
    """A derivative was requested where the model is not differentiable."""


class QpError(ClfCbfError):
    pass


class InfeasibleQP(QpError):
    """No active-set candidate satisfies the constraints."""


class DegenerateQP(QpError):
    """Every admissible candidate needed a singular equality KKT system."""


class FormulaNotApplicable(ClfCbfError):
    """A closed-form branch was evaluated outside the conditions it needs."""


class RetractionError(ClfCbfError):
    """Polar retraction landed on a reflection instead of a rotation."""


class ActiveSetSwitch(ClfCbfError):
    """The controller changes active set inside a finite-difference stencil."""


class UnsupportedBoundary(ClfCbfError):
    pass


class NotBoundaryPoint(ClfCbfError):
    pass


class ConfigError(ClfCbfError):
    """Invalid scenario file. Carries the file path and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
