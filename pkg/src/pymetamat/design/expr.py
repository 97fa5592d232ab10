"""
Refraction-coefficient formulas.

Grammar (standard precedence, ^ binds tightest and associates to the right,
unary minus sits below ^ so -x1^2 == -(x1^2)):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | 'pi' | VARIABLE | FUNCTION '(' expr ')' | '(' expr ')'

Variables are x1, x2, x3; functions are sin, cos, exp, sqrt, abs.
Parsed trees evaluate on numpy arrays, so a whole chunk of lattice centers is
evaluated in one call.
"""
from dataclasses import dataclass, field
import math
import re
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np

from pymetamat.exceptions import (
    ExpressionSyntaxError,
    FieldEvaluationError,
    InvalidParameterError,
    UnknownIdentifierError,
    UnknownPresetError,
)

ArrayFunc = Callable[[np.ndarray, np.ndarray, np.ndarray], Union[np.ndarray, float, complex]]

VARIABLES: Dict[str, int] = {"x1": 0, "x2": 1, "x3": 2}
CONSTANTS: Dict[str, float] = {"pi": math.pi}
FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
KNOWN_IDENTIFIERS: FrozenSet[str] = frozenset(VARIABLES) | frozenset(CONSTANTS) | frozenset(FUNCTIONS)

OPERAND_START = frozenset({"number", "identifier", "'('", "'-'", "'+'"})


# ──────────────────────────────────────────────
#  Expression tree
# ──────────────────────────────────────────────

class Node:
    def evaluate(self, coords: Tuple[np.ndarray, np.ndarray, np.ndarray]):
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Number(Node):
    value: float

    def evaluate(self, coords):
        return self.value

    def to_source(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class Constant(Node):
    name: str

    def evaluate(self, coords):
        return CONSTANTS[self.name]

    def to_source(self) -> str:
        return self.name


@dataclass(frozen=True)
class Variable(Node):
    name: str

    def evaluate(self, coords):
        return coords[VARIABLES[self.name]]

    def to_source(self) -> str:
        return self.name


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node

    def evaluate(self, coords):
        value = self.operand.evaluate(coords)
        return -value if self.op == "-" else +value

    def to_source(self) -> str:
        return f"({self.op}{self.operand.to_source()})"


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, coords):
        lhs = self.left.evaluate(coords)
        rhs = self.right.evaluate(coords)
        if self.op == "+":
            return np.add(lhs, rhs)
        if self.op == "-":
            return np.subtract(lhs, rhs)
        if self.op == "*":
            return np.multiply(lhs, rhs)
        if self.op == "/":
            return np.divide(lhs, rhs)
        return np.power(lhs, rhs)

    def to_source(self) -> str:
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def evaluate(self, coords):
        return FUNCTIONS[self.func](self.arg.evaluate(coords))

    def to_source(self) -> str:
        return f"{self.func}({self.arg.to_source()})"


# ──────────────────────────────────────────────
#  Tokenizer and parser
# ──────────────────────────────────────────────

_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # "number" | "ident" | "op" | "end"
    text: str
    offset: int


def tokenize(source: str) -> List[Token]:
    """Split a formula into tokens; offsets are byte offsets into the UTF-8 source."""
    tokens: List[Token] = []
    pos = 0
    while pos < len(source):
        if source[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExpressionSyntaxError(
                f"unexpected character {source[pos]!r}", _byte_offset(source, pos), OPERAND_START
            )
        tokens.append(Token(match.lastgroup, match.group(), _byte_offset(source, pos)))
        pos = match.end()
    tokens.append(Token("end", "", _byte_offset(source, len(source))))
    return tokens


def _byte_offset(source: str, char_pos: int) -> int:
    return len(source[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _at_op(self, *ops: str) -> bool:
        return self.current.kind == "op" and self.current.text in ops

    def _expect_op(self, op: str) -> None:
        if not self._at_op(op):
            self._fail(frozenset({f"'{op}'"}))
        self._advance()

    def _fail(self, expected: FrozenSet[str]):
        token = self.current
        found = "end of input" if token.kind == "end" else repr(token.text)
        raise ExpressionSyntaxError(f"unexpected {found}", token.offset, expected)

    def parse(self) -> Node:
        node = self.expr()
        if self.current.kind != "end":
            self._fail(frozenset({"operator", "end of input"}))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self._at_op("+", "-"):
            op = self._advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self._at_op("*", "/"):
            op = self._advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._at_op("-", "+"):
            op = self._advance().text
            return Unary(op, self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._at_op("^"):
            self._advance()
            # right operand re-enters at unary level: 2^-1 and 2^3^2 == 2^(3^2)
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Number(float(token.text))
        if token.kind == "ident":
            self._advance()
            name = token.text
            if name in FUNCTIONS:
                self._expect_op("(")
                arg = self.expr()
                self._expect_op(")")
                return Call(name, arg)
            if name in VARIABLES:
                return Variable(name)
            if name in CONSTANTS:
                return Constant(name)
            raise UnknownIdentifierError(name, token.offset, KNOWN_IDENTIFIERS)
        if self._at_op("("):
            self._advance()
            node = self.expr()
            self._expect_op(")")
            return node
        self._fail(OPERAND_START)


# ──────────────────────────────────────────────
#  Fields
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class Smoothness:
    """
    User-declared regularity of a coefficient, used only to annotate the
    expected convergence rate in diagnostics.

    Attributes:
        kind (str): "c2" (twice differentiable), "lipschitz" or "modulus"
        constant (Optional[float]): Lipschitz constant when kind == "lipschitz"
        description (str): free-text modulus of continuity when kind == "modulus"
    """
    kind: str = "c2"
    constant: Optional[float] = None
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("c2", "lipschitz", "modulus"):
            raise InvalidParameterError(f"unknown smoothness kind '{self.kind}'")

    @classmethod
    def parse(cls, text: str) -> "Smoothness":
        """Parse "c2", "lipschitz", "lipschitz:L" or "modulus:<description>"."""
        kind, _, rest = text.strip().partition(":")
        kind = kind.strip().lower()
        if kind == "lipschitz":
            try:
                return cls("lipschitz", float(rest) if rest.strip() else None)
            except ValueError as exc:
                raise InvalidParameterError(f"bad Lipschitz constant in '{text}'") from exc
        if kind == "modulus":
            return cls("modulus", None, rest.strip())
        return cls(kind)

    def expected_exponent(self) -> Optional[float]:
        """Expected exponent of M in the error rate, or None when no rate is implied."""
        if self.kind == "c2":
            return -2.0 / 3.0
        if self.kind == "lipschitz":
            return -1.0 / 3.0
        return None

    def __str__(self) -> str:
        if self.kind == "lipschitz" and self.constant is not None:
            return f"lipschitz:{self.constant!r}"
        if self.kind == "modulus":
            return f"modulus:{self.description}"
        return self.kind


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """
    A scalar field on the closed unit cube.

    Attributes:
        source (str): formula text, preset name or a description of the derivation
        func (ArrayFunc): vectorised map (x1, x2, x3) -> value
        smoothness (Smoothness): declared regularity
        expression (Optional[Node]): parse tree when the field came from a formula
    """
    source: str
    func: ArrayFunc
    smoothness: Smoothness = field(default_factory=Smoothness)
    expression: Optional[Node] = None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an array of points with trailing dimension 3."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1:] != (3,):
            raise InvalidParameterError(f"points must have trailing dimension 3, got {pts.shape}")
        with np.errstate(all="ignore"):
            raw = self.func(pts[..., 0], pts[..., 1], pts[..., 2])
        values = np.array(np.broadcast_to(np.asarray(raw), pts.shape[:-1]))
        if not np.all(np.isfinite(values)):
            raise FieldEvaluationError(f"field '{self.source}' is not finite on the requested points")
        return values

    __call__ = evaluate

    def at(self, x1: float, x2: float, x3: float):
        return self.evaluate(np.array([x1, x2, x3]))[()]

    def to_source(self) -> str:
        """Fully parenthesised formula text that parses back to the same tree."""
        if self.expression is None:
            raise InvalidParameterError(f"field '{self.source}' was not built from a formula")
        return self.expression.to_source()


def parse(source: str, smoothness: Optional[Smoothness] = None) -> CoefficientField:
    """Parse a formula over x1, x2, x3 into an evaluable field.

    Args:
        source (str): formula text
        smoothness (Optional[Smoothness]): declared regularity, twice differentiable by default

    Returns:
        CoefficientField: the compiled field

    Raises:
        ExpressionSyntaxError: with byte offset and expected-token set
        UnknownIdentifierError: for names outside x1..x3, pi and the function table
    """
    tree = _Parser(source).parse()

    def func(x1, x2, x3):
        return tree.evaluate((x1, x2, x3))

    return CoefficientField(source=source, func=func, smoothness=smoothness or Smoothness(), expression=tree)


PRESETS = ("ex1", "ex2", "ex3", "ex4")


def gaussian_sigma(b: int, P: int) -> float:
    """Width sqrt(3)/(2bP) of the Example 2 Gaussian."""
    if b < 1 or P < 1:
        raise InvalidParameterError(f"b and P must be positive, got b={b}, P={P}")
    return math.sqrt(3.0) / (2.0 * b * P)


def preset(name: str, b: int = 5, P: int = 11) -> CoefficientField:
    """Return one of the four worked-example refraction coefficients.

    ex1: 5; ex2: 5 + Gaussian bump of width sqrt(3)/(2bP) at the cube center;
    ex3: 1 + 0.5 sin(x1); ex4: 1 + 0.5 sin(100 x1).
    """
    if name == "ex1":
        formula = "5"
    elif name == "ex2":
        sigma = gaussian_sigma(b, P)
        s = repr(sigma)
        formula = (
            f"5 + exp(-((x1 - 0.5)^2 + (x2 - 0.5)^2 + (x3 - 0.5)^2) / (2*{s}^2))"
            f" / (sqrt(2*pi)*{s})"
        )
    elif name == "ex3":
        formula = "1 + 0.5*sin(x1)"
    elif name == "ex4":
        formula = "1 + 0.5*sin(100*x1)"
    else:
        raise UnknownPresetError(f"unknown preset '{name}', expected one of {', '.join(PRESETS)}")
    compiled = parse(formula)
    return CoefficientField(source=name, func=compiled.func, smoothness=Smoothness("c2"),
                            expression=compiled.expression)


def constant_field(value: Union[float, complex], smoothness: Optional[Smoothness] = None) -> CoefficientField:
    """A field equal to `value` everywhere; complex values are allowed."""
    return CoefficientField(source=repr(value), func=lambda x1, x2, x3: value,
                            smoothness=smoothness or Smoothness())
