"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MembraneError(Exception):
    """Base class for all errors raised by the package."""


class NumericalError(MembraneError):
    """A numerical failure: the CLI maps these to exit code 3."""


class ConfigError(MembraneError):
    """A configuration failure: the CLI maps these to exit code 2."""


class DegenerateChart(NumericalError):
    def __init__(self, min_jacobian: float, threshold: float):
        super().__init__(f"|R_a x R_b| = {min_jacobian:.3e} fell below {threshold:.3e}")
        self.min_jacobian = min_jacobian
        self.threshold = threshold


class SmallConformalFactor(NumericalError):
    def __init__(self, min_e: float, c0: float):
        super().__init__(f"min(E) = {min_e:.3e} fell below c0 = {c0:.3e}")
        self.min_e = min_e
        self.c0 = c0


class BadAspect(MembraneError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CoefficientViolation(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


class UnknownLemma(MembraneError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    def __init__(self, constraint: str, key: str | None = None):
        super().__init__(f"{key}: {constraint}" if key else constraint)
        self.constraint = constraint
        self.key = key


class FormatError(MembraneError):
    pass
