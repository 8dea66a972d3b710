"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the CLI exit
status it maps to (2 config, 3 numerical failure, 4 invariant violation).
"""


class PhononBSError(Exception):
    code = "error"
    exit_status = 3

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ValidationError(PhononBSError, ValueError):
    """An input violates a documented invariant."""

    code = "validation"
    exit_status = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

    def to_dict(self):
        d = super().to_dict()
        if self.field is not None:
            d["field"] = self.field
        return d


class ParseError(PhononBSError, ValueError):
    code = "parse"
    exit_status = 2

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column

    def to_dict(self):
        d = super().to_dict()
        d.update(line=self.line, column=self.column)
        return d


class ZeroDetuning(ValidationError):
    code = "zero_detuning"


class SingularDetuning(PhononBSError, ZeroDivisionError):
    code = "singular_detuning"


class DomainError(PhononBSError, ValueError):
    code = "domain"


class ConvergenceError(PhononBSError):
    code = "convergence"


class NoConvergence(ConvergenceError):
    code = "no_convergence"


class FitError(PhononBSError):
    code = "fit"


class SidebandCollision(PhononBSError):
    """A phonon sits too close to a qubit sideband for perturbation theory."""

    code = "sideband_collision"


class NoOscillation(PhononBSError):
    code = "no_oscillation"


class AssumptionViolated(PhononBSError):
    code = "assumption_violated"
    exit_status = 4


class DimensionCap(PhononBSError):
    code = "dimension_cap"
    exit_status = 2


class InvalidRates(ValidationError):
    code = "invalid_rates"


class SingularBeta(PhononBSError):
    code = "singular_beta"


class MissingOperator(ValidationError):
    code = "missing_operator"


class OptimizationFailure(PhononBSError):
    code = "optimization_failure"


class BoundsViolation(ValidationError):
    code = "bounds_violation"


class Unbounded(PhononBSError):
    code = "unbounded"


class InvariantViolation(PhononBSError):
    code = "invariant_violation"
    exit_status = 4
