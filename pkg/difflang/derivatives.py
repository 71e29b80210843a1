"""Tangent rules shared by forward and reverse mode.

`TangentRules(seed).d(e)` returns the expression for de/ds given the
tangents of leaves (from `seed`), or None when the tangent is structurally
zero. Builders fold ones, zeros and negations so generated code stays small.
"""
import re
from enum import Enum
from typing import Callable, Optional, Tuple

from difflang.errors import UnknownParameter, UnsupportedConstruct
from difflang.lang.nodes import (
    Binary,
    Call,
    Cast,
    Expr,
    Index,
    Literal,
    Type,
    Unary,
    VarRef,
)

ONE = Literal(1.0, Type.DOUBLE)
ZERO = Literal(0.0, Type.DOUBLE)

Seed = Callable[[Expr], Optional[Expr]]


def const(value: float) -> Expr:
    """Double constant; negative values become a unary minus over a literal."""
    if value < 0:
        return Unary("-", Literal(-value, Type.DOUBLE), Type.DOUBLE)
    return Literal(float(value), Type.DOUBLE)


def is_one(e: Optional[Expr]) -> bool:
    return isinstance(e, Literal) and e.type == Type.DOUBLE and e.value == 1.0


def is_neg(e: Optional[Expr]) -> bool:
    return isinstance(e, Unary) and e.op == "-"


def binary(op: str, lhs: Expr, rhs: Expr) -> Binary:
    return Binary(op, lhs, rhs, Type.DOUBLE)


def call(name: str, *args: Expr) -> Call:
    return Call(name, tuple(args), Type.DOUBLE)


def neg(a: Optional[Expr]) -> Optional[Expr]:
    if a is None:
        return None
    if is_neg(a):
        return a.operand
    return Unary("-", a, Type.DOUBLE)


def add(a: Optional[Expr], b: Optional[Expr]) -> Optional[Expr]:
    if a is None:
        return b
    if b is None:
        return a
    if is_neg(b):
        return binary("-", a, b.operand)
    if is_neg(a):
        return binary("-", b, a.operand)
    return binary("+", a, b)


def sub(a: Optional[Expr], b: Optional[Expr]) -> Optional[Expr]:
    if b is None:
        return a
    if a is None:
        return neg(b)
    if is_neg(b):
        return binary("+", a, b.operand)
    return binary("-", a, b)


def mul(a: Optional[Expr], b: Optional[Expr]) -> Optional[Expr]:
    if a is None or b is None:
        return None
    if is_one(a):
        return b
    if is_one(b):
        return a
    if is_neg(a) and not isinstance(a.operand, Literal):
        return neg(mul(a.operand, b))
    if is_neg(a) and is_one(a.operand):
        return neg(b)
    if is_neg(b) and is_one(b.operand):
        return neg(a)
    return binary("*", a, b)


def div(a: Optional[Expr], b: Expr) -> Optional[Expr]:
    if a is None:
        return None
    if is_one(b):
        return a
    if is_neg(a):
        return neg(div(a.operand, b))
    return binary("/", a, b)


def minus_one(b: Expr) -> Expr:
    if isinstance(b, Literal):
        return const(b.value - 1.0)
    if is_neg(b) and isinstance(b.operand, Literal):
        return const(-b.operand.value - 1.0)
    return binary("-", b, ONE)


class TangentRules:
    """Sum, product and quotient rules plus the chain rule for intrinsics."""

    def __init__(self, seed: Seed):
        self.seed = seed

    def d(self, e: Expr) -> Optional[Expr]:
        # Only doubles carry derivatives
        if e.type != Type.DOUBLE:
            return None
        if isinstance(e, Literal) or isinstance(e, Cast):
            return None
        if isinstance(e, (VarRef, Index)):
            return self.seed(e)
        if isinstance(e, Unary):
            return neg(self.d(e.operand))
        if isinstance(e, Binary):
            return self.binary(e)
        if isinstance(e, Call):
            return self.call(e)
        raise UnsupportedConstruct(f"cannot differentiate {type(e).__name__}", e.line, e.col)

    def binary(self, e: Binary) -> Optional[Expr]:
        a, b = e.lhs, e.rhs
        da, db = self.d(a), self.d(b)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        if e.op == "/":
            if db is None:
                return div(da, b)
            if da is None:
                return neg(div(mul(a, db), mul(b, b)))
            return div(sub(mul(da, b), mul(a, db)), mul(b, b))
        raise UnsupportedConstruct(f"cannot differentiate operator '{e.op}'", e.line, e.col)

    def call(self, e: Call) -> Optional[Expr]:
        name = e.name
        if name == "pow":
            return self.pow(e)
        if name not in ("sin", "cos", "exp", "log", "sqrt"):
            raise UnsupportedConstruct(f"cannot differentiate call to '{name}'", e.line, e.col)
        (u,) = e.args
        du = self.d(u)
        if du is None:
            return None
        if name == "sin":
            return mul(call("cos", u), du)
        if name == "cos":
            return neg(mul(call("sin", u), du))
        if name == "exp":
            return mul(call("exp", u), du)
        if name == "log":
            return div(du, u)
        return div(du, binary("*", Literal(2.0, Type.DOUBLE), call("sqrt", u)))

    def pow(self, e: Call) -> Optional[Expr]:
        a, b = e.args
        da, db = self.d(a), self.d(b)
        if da is None and db is None:
            return None
        if db is None:
            # constant exponent: b * a^(b-1) * da
            return mul(mul(b, call("pow", a, minus_one(b))), da)
        if da is None:
            return mul(mul(call("pow", a, b), call("log", a)), db)
        # a^b * (db*log(a) + b*da/a); log signals DomainError for a <= 0
        return mul(call("pow", a, b), add(mul(db, call("log", a)), div(mul(b, da), a)))


class Mode(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


def parse_wrt(text: str) -> Tuple[str, Optional[int]]:
    """Split `p[2]` into ("p", 2); plain names have no slot."""
    m = re.fullmatch(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\[\s*(\d+)\s*\])?\s*", text)
    if m is None:
        raise UnknownParameter(f"cannot read differentiation target '{text}'")
    return m.group(1), int(m.group(2)) if m.group(2) is not None else None
