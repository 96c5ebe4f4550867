"""Scalar expressions in one variable, evaluated with second-order duals.

Grammar (whitespace ignored, ``theta`` and ``x`` both name the variable)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | 'pi' | ident | ident '(' expr ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^-x`` is ``2^(-x)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

VARIABLE_NAMES = ("theta", "x")
CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, pos, expected=()):
        self.pos = pos
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {pos}{detail}")


class UnknownIdentifierError(ExprError):
    pass


class ArityError(ExprError):
    pass


class DomainError(ExprError):
    pass


# -- second-order dual numbers ------------------------------------------------


@dataclass(frozen=True)
class Dual2:
    """Value with first and second derivative along one variable."""

    v: float
    d1: float = 0.0
    d2: float = 0.0

    @classmethod
    def variable(cls, x):
        return cls(float(x), 1.0, 0.0)

    @staticmethod
    def lift(other):
        return other if isinstance(other, Dual2) else Dual2(float(other))

    def __add__(self, other):
        o = Dual2.lift(other)
        return Dual2(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.v, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-Dual2.lift(other))

    def __rsub__(self, other):
        return Dual2.lift(other) - self

    def __mul__(self, other):
        o = Dual2.lift(other)
        return Dual2(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual2.lift(other)
        if o.v == 0.0:
            raise ZeroDivisionError("division by a dual with zero value")
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return Dual2.lift(other) / self

    def reciprocal(self):
        inv = 1.0 / self.v
        return self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def chain(self, f, df, d2f):
        """Compose with a scalar function given f, f', f'' at ``self.v``."""
        # derivative factors only matter where the inner derivatives are nonzero
        d1 = df * self.d1 if self.d1 != 0.0 else 0.0
        d2 = (d2f * self.d1 * self.d1 if self.d1 != 0.0 else 0.0) + (
            df * self.d2 if self.d2 != 0.0 else 0.0
        )
        return Dual2(f, d1, d2)

    def __pow__(self, other):
        o = Dual2.lift(other)
        if o.d1 == 0.0 and o.d2 == 0.0 and float(o.v).is_integer():
            return self._int_pow(int(o.v))
        if self.v <= 0.0:
            raise DomainError(f"non-integer power of non-positive base {self.v!r}")
        return dual_exp(o * dual_log(self))

    def _int_pow(self, k):
        a = self.v
        if k == 0:
            return Dual2(1.0)
        if k < 0 and a == 0.0:
            raise ZeroDivisionError("negative power of zero")
        f = a**k
        df = k * a ** (k - 1) if k != 1 else 1.0
        d2f = k * (k - 1) * a ** (k - 2) if k not in (0, 1) else 0.0
        return self.chain(f, df, d2f)


def _require(cond, message):
    if not cond:
        raise DomainError(message)


def dual_exp(a):
    e = math.exp(a.v)
    return a.chain(e, e, e)


def dual_log(a):
    _require(a.v > 0.0, f"log of non-positive value {a.v!r}")
    return a.chain(math.log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v))


def dual_sqrt(a):
    _require(a.v >= 0.0, f"sqrt of negative value {a.v!r}")
    if a.v == 0.0:
        _require(a.d1 == 0.0 and a.d2 == 0.0, "sqrt is not differentiable at 0")
        return Dual2(0.0)
    s = math.sqrt(a.v)
    return a.chain(s, 0.5 / s, -0.25 / (s * a.v))


def dual_sin(a):
    s, c = math.sin(a.v), math.cos(a.v)
    return a.chain(s, c, -s)


def dual_cos(a):
    s, c = math.sin(a.v), math.cos(a.v)
    return a.chain(c, -s, -c)


def dual_tan(a):
    _require(math.cos(a.v) != 0.0, f"tan undefined at {a.v!r}")
    t = math.tan(a.v)
    sec2 = 1.0 + t * t
    return a.chain(t, sec2, 2.0 * t * sec2)


def dual_cot(a):
    _require(math.sin(a.v) != 0.0, f"cot undefined at {a.v!r}")
    c = math.cos(a.v) / math.sin(a.v)
    csc2 = 1.0 + c * c
    return a.chain(c, -csc2, 2.0 * c * csc2)


def _arc_guard(a, name):
    _require(-1.0 <= a.v <= 1.0, f"{name} argument {a.v!r} outside [-1, 1]")
    if abs(a.v) == 1.0:
        _require(a.d1 == 0.0 and a.d2 == 0.0, f"{name} is not differentiable at {a.v!r}")
        return False
    return True


def dual_arcsin(a):
    if not _arc_guard(a, "arcsin"):
        return Dual2(math.asin(a.v))
    r = 1.0 - a.v * a.v
    return a.chain(math.asin(a.v), r**-0.5, a.v * r**-1.5)


def dual_arccos(a):
    if not _arc_guard(a, "arccos"):
        return Dual2(math.acos(a.v))
    r = 1.0 - a.v * a.v
    return a.chain(math.acos(a.v), -(r**-0.5), -a.v * r**-1.5)


def dual_abs(a):
    if a.v == 0.0:
        _require(a.d1 == 0.0, "abs is not differentiable at 0")
        return Dual2(0.0, 0.0, abs(a.d2))
    sign = 1.0 if a.v > 0 else -1.0
    return Dual2(abs(a.v), sign * a.d1, sign * a.d2)


FUNCTIONS = {
    "sin": dual_sin,
    "cos": dual_cos,
    "tan": dual_tan,
    "cot": dual_cot,
    "sqrt": dual_sqrt,
    "exp": dual_exp,
    "log": dual_log,
    "arcsin": dual_arcsin,
    "arccos": dual_arccos,
    "abs": dual_abs,
}


# -- AST ------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"literal must be finite and non-negative, got {self.value!r}")


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Const, Var, Neg, BinOp, Call]


def to_string(node):
    """Canonical, fully parenthesized form; ``parse(to_string(a)) == a``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return "theta"
    if isinstance(node, Neg):
        return f"(-{to_string(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# -- parser ---------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


_ATOM_START = {"number", "identifier", "'('", "'-'"}


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind != "op":
            raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos, {repr(value)})
        self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(
                f"unexpected {text!r}", pos, {"end of input", "'+'", "'-'", "'*'", "'/'", "'^'"}
            )
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                return self.call(text, pos)
            if text in VARIABLE_NAMES:
                return Var()
            if text in CONSTANTS:
                return Const(text)
            if text in FUNCTIONS:
                raise ArityError(f"function {text!r} at position {pos} needs one argument")
            raise UnknownIdentifierError(f"unknown identifier {text!r} at position {pos}")
        if (kind, text) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", pos, _ATOM_START)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r} at position {pos}")
        self.expect("(")
        if self.peek()[:2] == ("op", ")"):
            raise ArityError(f"function {name!r} at position {pos} takes 1 argument, got 0")
        arg = self.expr()
        nargs = 1
        while self.peek()[:2] == ("op", ","):
            self.advance()
            self.expr()
            nargs += 1
        if nargs != 1:
            raise ArityError(f"function {name!r} at position {pos} takes 1 argument, got {nargs}")
        self.expect(")")
        return Call(name, arg)


def parse(text):
    """Parse an expression string into an immutable AST."""
    if not isinstance(text, str):
        raise TypeError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


# -- evaluation -----------------------------------------------------------------


def eval_dual2(node, theta):
    """Evaluate ``node`` at ``theta``; returns value, first and second derivative."""
    return _eval(node, Dual2.variable(theta))


def evaluate(node, theta):
    return eval_dual2(node, theta).v


def _eval(node, x):
    if isinstance(node, Num):
        return Dual2(node.value)
    if isinstance(node, Const):
        return Dual2(CONSTANTS[node.name])
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    try:
        if isinstance(node, BinOp):
            a, b = _eval(node.left, x), _eval(node.right, x)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                return a / b
            return a**b
        if isinstance(node, Call):
            return FUNCTIONS[node.func](_eval(node.arg, x))
    except DomainError as exc:
        if getattr(exc, "located", False):
            raise
        err = DomainError(f"{exc} in {to_string(node)} at theta={x.v!r}")
        err.located = True
        raise err from None
    except (ZeroDivisionError, OverflowError) as exc:
        err = DomainError(f"{exc} in {to_string(node)} at theta={x.v!r}")
        err.located = True
        raise err from None
    raise TypeError(f"not an expression node: {node!r}")
