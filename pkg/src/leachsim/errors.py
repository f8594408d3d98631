"""Exception hierarchy.

``InputError`` covers rejected inputs and validation failures (CLI exit 1);
``NumericalError`` covers solver failures (CLI exit 2).
"""


class LeachError(Exception):
    """Base class for all package errors."""


class InputError(LeachError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(InputError):
    """Configuration failed validation; ``violations`` lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class TableFormatError(InputError):
    """A coefficient table file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(LeachError, ArithmeticError):
    """A numerical procedure failed."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class MaxPrincipleError(NumericalError):
    """Concentration left [0, 1] by more than the allowed tolerance."""


class PicardDivergenceError(ConvergenceError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class IntegrityError(LeachError):
    """Data produced upstream violates an invariant (e.g. r grew in time)."""


class SimulationError(LeachError):
    """Failure inside ``run_simulation``, tagged with where it happened."""

    def __init__(self, stage, cause, slab=None, step=None):
        self.stage = stage
        self.slab = slab
        self.step = step
        self.cause = cause
        where = f"stage={stage}"
        if slab is not None:
            where += f" slab={slab}"
        if step is not None:
            where += f" step={step}"
        super().__init__(f"{where}: {cause}")
