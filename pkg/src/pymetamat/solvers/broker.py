from dataclasses import dataclass, field
from functools import wraps
import inspect
import logging
import math
from typing import Any, Callable, List, Optional, ParamSpec, Protocol, TypeVar

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, gmres
from tenacity import RetryError, Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from pymetamat.exceptions import InvalidParameterError, SolverError
from pymetamat.helpers import setup_logger

P = ParamSpec("P")
R = TypeVar("R")

DEFAULT_DENSE_CUTOFF = 4096
DEFAULT_TOL = 1e-10


def _summarise(value: Any) -> str:
    if isinstance(value, np.ndarray):
        return f"ndarray{value.shape}"
    size = getattr(value, "size", None)
    if isinstance(size, int) and hasattr(value, "matvec"):
        return f"{type(value).__name__}(size={size})"
    return repr(value)


def log_method_call(func: Callable[P, R]) -> Callable[P, R]:
    """Log the decorated method's name with a compact argument summary.

    Arrays are summarised by shape and operators by size; nothing large is printed.
    """
    @wraps(func)
    def wrapper(self, *args, **kwargs):
        caller = func.__name__
        sig = inspect.signature(func)
        bound = sig.bind(self, *args, **kwargs)
        bound.apply_defaults()
        call_args = {k: v for k, v in bound.arguments.items() if k != "self"}

        if call_args:
            summary = ", ".join(f"{key}={_summarise(value)}" for key, value in call_args.items())
            self._log(f"{caller} called with {summary}")
        else:
            self._log(f"{caller} called")
        return func(self, *args, **kwargs)
    return wrapper


class SystemOperator(Protocol):
    """The off-identity part A of a system (I + A) u = b."""
    size: int

    def matvec(self, v: np.ndarray) -> np.ndarray:
        ...

    def dense(self) -> np.ndarray:
        ...

    def is_zero(self) -> bool:
        ...


@dataclass(frozen=True)
class SolveResult:
    """
    Outcome of one linear solve.

    Attributes:
        values (np.ndarray): solution vector
        residual (float): ||(I + A) u - b||_inf / ||b||_inf from an explicit re-multiplication
        method (str): "trivial", "dense" or "gmres"
        iterations (int): Krylov iterations (0 for direct paths)
        residual_history (List[float]): relative residuals reported during iteration
    """
    values: np.ndarray
    residual: float
    method: str
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)


class _KrylovStall(Exception):
    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = x


class SolverBroker:
    """
    Routes systems (I + A) u = b to the right linear solver.

    Small systems (size <= dense_cutoff) are assembled and factorised; larger ones
    are solved matrix-free with restarted GMRES, whose operator evaluates the
    kernel on the fly. A stalled GMRES run is retried with a doubled restart
    length, warm-started from the last iterate. Every accepted solution is checked
    by re-multiplying and comparing the relative sup-norm residual with `tol`.
    """
    def __init__(
        self,
        dense_cutoff: int = DEFAULT_DENSE_CUTOFF,
        tol: float = DEFAULT_TOL,
        enable_logging: bool = False,
        logger: Optional[logging.Logger] = None,
        enable_restarts: bool = True,
        max_attempts: int = 3,
        restart: Optional[int] = None,
    ):
        if dense_cutoff < 0:
            raise InvalidParameterError(f"dense_cutoff must be >= 0, got {dense_cutoff}")
        if not 0.0 < tol < 1.0:
            raise InvalidParameterError(f"tol must lie in (0, 1), got {tol!r}")
        if max_attempts < 1:
            raise InvalidParameterError(f"max_attempts must be >= 1, got {max_attempts}")
        self.dense_cutoff = dense_cutoff
        self.tol = tol
        if logger is not None:
            self.logger = logger
        else:
            self.logger = setup_logger(self.__class__.__name__) if enable_logging else None
        self.enable_restarts = enable_restarts
        self.max_attempts = max_attempts if enable_restarts else 1
        self.restart = restart

    def _log(self, message: str, level: str = "info"):
        if self.logger:
            log_fn = getattr(self.logger, level, self.logger.info)
            log_fn(message)

    def residual(self, operator: SystemOperator, values: np.ndarray, rhs: np.ndarray) -> float:
        """||(I + A) u - b||_inf / ||b||_inf with A applied through `operator.matvec`."""
        scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
        diff = values + operator.matvec(values) - rhs
        err = float(np.max(np.abs(diff))) if diff.size else 0.0
        return err / scale if scale > 0.0 else err

    @log_method_call
    def solve(self, operator: SystemOperator, rhs: np.ndarray) -> SolveResult:
        """Solve (I + A) u = rhs.

        Args:
            operator (SystemOperator): the off-identity part A
            rhs (np.ndarray): right-hand side b

        Returns:
            SolveResult: solution with its verified residual

        Raises:
            SolverError: singular dense system, GMRES stall after all attempts,
                or a verified residual above `tol`
        """
        rhs = np.asarray(rhs, dtype=complex)
        if rhs.shape != (operator.size,):
            raise InvalidParameterError(f"rhs shape {rhs.shape} does not match operator size {operator.size}")

        if operator.is_zero():
            return SolveResult(values=rhs.copy(), residual=0.0, method="trivial")

        if operator.size <= self.dense_cutoff:
            result = self._solve_dense(operator, rhs)
        else:
            result = self._solve_iterative(operator, rhs)

        if not result.residual <= self.tol:
            self._log(f"residual {result.residual:.3e} exceeds tolerance {self.tol:.1e}", level="error")
            raise SolverError(
                f"{result.method} solve residual {result.residual:.3e} exceeds {self.tol:.1e}",
                result.residual_history + [result.residual],
            )
        self._log(f"{result.method} solve of size {operator.size}: residual {result.residual:.3e}, "
                  f"{result.iterations} iterations")
        return result

    def _solve_dense(self, operator: SystemOperator, rhs: np.ndarray) -> SolveResult:
        matrix = operator.dense()
        matrix[np.diag_indices_from(matrix)] += 1.0
        try:
            values = scipy.linalg.solve(matrix, rhs)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            self._log(f"dense factorisation failed: {exc}", level="error")
            raise SolverError(f"singular or invalid dense system: {exc}") from exc

        diff = matrix @ values - rhs
        scale = float(np.max(np.abs(rhs)))
        residual = float(np.max(np.abs(diff))) / scale if scale > 0.0 else float(np.max(np.abs(diff)))
        return SolveResult(values=values, residual=residual, method="dense")

    def _solve_iterative(self, operator: SystemOperator, rhs: np.ndarray) -> SolveResult:
        n = operator.size
        cap = max(1, math.ceil(10.0 * math.sqrt(n)))
        base_restart = self.restart or min(cap, 50)
        # the sup-norm contract holds whenever the 2-norm one does at rtol/sqrt(n)
        rtol = max(self.tol / math.sqrt(n), 1e-15)
        system = LinearOperator((n, n), matvec=lambda v: v + operator.matvec(v), dtype=complex)

        history: List[float] = []
        state = {"x": None, "iterations": 0}

        def attempt_once(restart: int) -> np.ndarray:
            counted: List[float] = []
            remaining = cap - state["iterations"]
            if remaining <= 0:
                raise _KrylovStall("iteration cap exhausted", state["x"])
            x, info = gmres(
                system,
                rhs,
                x0=state["x"],
                rtol=rtol,
                atol=0.0,
                restart=restart,
                maxiter=max(1, math.ceil(remaining / restart)),
                callback=counted.append,
                callback_type="pr_norm",
            )
            state["iterations"] += len(counted)
            history.extend(float(r) for r in counted)
            state["x"] = x
            if info < 0:
                raise SolverError(f"GMRES reported illegal input or breakdown (info={info})", history)
            if info > 0:
                raise _KrylovStall(f"GMRES did not reach rtol={rtol:.1e} with restart={restart}", x)
            return x

        retrying = Retrying(
            retry=retry_if_exception_type(_KrylovStall),
            stop=stop_after_attempt(self.max_attempts),
            before_sleep=before_sleep_log(self.logger, logging.WARNING) if self.logger else None,
            reraise=False,
        )

        try:
            for attempt in retrying:
                with attempt:
                    restart = base_restart * 2 ** (attempt.retry_state.attempt_number - 1)
                    values = attempt_once(min(restart, n))
        except RetryError as re:
            last = re.last_attempt.exception()
            self._log(f"GMRES failed after {self.max_attempts} attempts: {last}", level="error")
            raise SolverError(f"iterative solve did not converge: {last}", history) from last

        residual = self.residual(operator, values, rhs)
        return SolveResult(values=values, residual=residual, method="gmres",
                           iterations=state["iterations"], residual_history=history)
