from typing import Any, FrozenSet, List, Optional, Sequence


class PyMetamatError(Exception):
    """Base class for every error raised by pymetamat."""


class InvalidParameterError(PyMetamatError, ValueError):
    """A numeric or structural pre-condition was violated."""


class UnknownPresetError(InvalidParameterError):
    pass


class ConfigError(PyMetamatError, ValueError):
    """Bad command-line flag, config-file key or config value."""


class ExpressionSyntaxError(PyMetamatError, ValueError):
    """
    Raised when a coefficient formula cannot be parsed.

    Attributes:
        offset (int): byte offset into the source where parsing stopped.
        expected (FrozenSet[str]): descriptions of the tokens that would have been accepted.
    """
    def __init__(self, message: str, offset: int, expected: Optional[FrozenSet[str]] = None):
        self.offset = offset
        self.expected = frozenset(expected or ())
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class UnknownIdentifierError(ExpressionSyntaxError):
    def __init__(self, name: str, offset: int, known: Optional[FrozenSet[str]] = None):
        self.name = name
        super().__init__(f"unknown identifier '{name}'", offset, known)


class FieldEvaluationError(PyMetamatError, ArithmeticError):
    """A coefficient field produced non-finite values."""


class SingularKernelError(PyMetamatError, ArithmeticError):
    """The Green kernel was evaluated at coincident points."""


class ProximityError(PyMetamatError, ValueError):
    """An evaluation point lies inside (or on) one of the embedded balls."""


class NoConvergenceError(PyMetamatError, RuntimeError):
    """
    The minimal-design loop hit its m cap before meeting the tolerance.

    Attributes:
        rows (List[Any]): every design row computed before giving up.
    """
    def __init__(self, message: str, rows: Sequence[Any]):
        self.rows: List[Any] = list(rows)
        super().__init__(message)


class SolverError(PyMetamatError, RuntimeError):
    """
    A linear solve failed: singular system, Krylov stagnation, or a
    post-hoc residual above tolerance.

    Attributes:
        residual_history (List[float]): residual norms recorded during the solve.
    """
    def __init__(self, message: str, residual_history: Optional[Sequence[float]] = None):
        self.residual_history: List[float] = list(residual_history or ())
        super().__init__(message)
