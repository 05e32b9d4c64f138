"""Exception hierarchy shared by the toolkit."""

from __future__ import annotations


class CharBCError(Exception):
    """Base class for all errors raised by :mod:`charbc`."""


class DimensionError(CharBCError, ValueError):
    pass


class ConvergenceError(CharBCError, ArithmeticError):
    """Iterative eigensolver did not converge within its sweep cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (off-diagonal residual {residual:.3e})")
        self.residual = residual


class NotPSDError(CharBCError, ValueError):
    def __init__(self, min_eigenvalue: float):
        super().__init__(f"matrix is not positive semi-definite: min eigenvalue {min_eigenvalue:.6e}")
        self.min_eigenvalue = min_eigenvalue


class ConsistencyError(CharBCError, ArithmeticError):
    """Algebraically equal evaluations disagree numerically."""


class InvalidRequestError(CharBCError, ValueError):
    pass


class PreconditionError(CharBCError, ValueError):
    pass


class PositivityError(CharBCError, ValueError):
    """A wave speed that must stay positive did not."""


class StrongImpositionError(CharBCError, ArithmeticError):
    pass


class DivergenceError(CharBCError, ArithmeticError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.message = message
        self.step = step


class ConfigError(CharBCError, ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class DataRangeWarning(UserWarning):
    """Boundary data has components the boundary condition cannot act on."""
