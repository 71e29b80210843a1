"""Typed AST of the difflang DSL.

Nodes are frozen dataclasses: structural equality ignores source positions,
and trees are safe to share between threads and transformations.
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Sequence, Tuple, Union


class Type(str, Enum):
    DOUBLE = "double"
    INT = "int"
    DOUBLE_ARRAY = "double*"
    INT_TAPE = "tape<int>"
    DOUBLE_TAPE = "tape<double>"

    @property
    def is_tape(self) -> bool:
        return self in (Type.INT_TAPE, Type.DOUBLE_TAPE)

    @property
    def element(self) -> "Type":
        """Element type of a tape or array."""
        if self is Type.INT_TAPE:
            return Type.INT
        if self in (Type.DOUBLE_TAPE, Type.DOUBLE_ARRAY):
            return Type.DOUBLE
        raise ValueError(f"{self.value} has no element type")

    @classmethod
    def tape_of(cls, element: "Type") -> "Type":
        return cls.INT_TAPE if element is cls.INT else cls.DOUBLE_TAPE


# name -> arity
INTRINSICS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "pow": 2}
# Tape and array helpers available to generated code
BUILTINS = {"push": 2, "pop": 1, "len": 1}
CONSTANTS = {"M_PI": math.pi}
# int is a signed 64-bit integer
INT_MIN, INT_MAX = -(2 ** 63), 2 ** 63 - 1

ARITHMETIC_OPS = ("+", "-", "*", "/")
COMPARISON_OPS = ("<", "<=", ">", ">=", "==", "!=")
COMPOUND_OPS = ("+=", "-=", "*=", "/=")


@dataclass(frozen=True)
class Node:
    line: int = field(default=0, compare=False, repr=False, kw_only=True)
    col: int = field(default=0, compare=False, repr=False, kw_only=True)


# --- expressions ---

@dataclass(frozen=True)
class Literal(Node):
    value: Union[int, float]
    type: Type


@dataclass(frozen=True)
class VarRef(Node):
    name: str
    type: Type


@dataclass(frozen=True)
class Index(Node):
    array: str
    index: "Expr"
    type: Type = Type.DOUBLE


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: "Expr"
    type: Type


@dataclass(frozen=True)
class Binary(Node):
    op: str
    lhs: "Expr"
    rhs: "Expr"
    type: Type


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple["Expr", ...]
    type: Type


@dataclass(frozen=True)
class Cast(Node):
    """Int to Double conversion, written `(double)e`."""
    operand: "Expr"
    type: Type = Type.DOUBLE


Expr = Union[Literal, VarRef, Index, Unary, Binary, Call, Cast]
LValue = Union[VarRef, Index]


# --- statements ---

@dataclass(frozen=True)
class Decl(Node):
    name: str
    type: Type
    init: Optional[Expr] = None


@dataclass(frozen=True)
class Assign(Node):
    target: LValue
    value: Expr


@dataclass(frozen=True)
class CompoundAssign(Node):
    op: str
    target: LValue
    value: Expr


@dataclass(frozen=True)
class For(Node):
    """`for (int counter = start; cond; counter++) body`"""
    counter: str
    start: Expr
    cond: Expr
    body: Tuple["Stmt", ...]


@dataclass(frozen=True)
class If(Node):
    cond: Expr
    then: Tuple["Stmt", ...]
    orelse: Optional[Tuple["Stmt", ...]] = None


@dataclass(frozen=True)
class Return(Node):
    value: Expr


@dataclass(frozen=True)
class Block(Node):
    body: Tuple["Stmt", ...]


@dataclass(frozen=True)
class ExprStmt(Node):
    """Expression evaluated for its effect; only `push(t, e);` in practice."""
    expr: Expr


Stmt = Union[Decl, Assign, CompoundAssign, For, If, Return, Block, ExprStmt]


# --- top level ---

@dataclass(frozen=True)
class Param(Node):
    name: str
    type: Type
    default: Optional[Literal] = None


@dataclass(frozen=True)
class FuncDef(Node):
    name: str
    params: Tuple[Param, ...]
    body: Tuple[Stmt, ...]
    return_type: Type = Type.DOUBLE

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class Program(Node):
    functions: Tuple[FuncDef, ...] = ()

    def get(self, name: str) -> Optional[FuncDef]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def with_function(self, func: FuncDef) -> "Program":
        """Append func, replacing any function of the same name."""
        kept = tuple(f for f in self.functions if f.name != func.name)
        return Program(kept + (func,))


# --- traversal ---

def child_exprs(e: Expr) -> Tuple[Expr, ...]:
    if isinstance(e, Index):
        return (e.index,)
    if isinstance(e, (Unary, Cast)):
        return (e.operand,)
    if isinstance(e, Binary):
        return (e.lhs, e.rhs)
    if isinstance(e, Call):
        return e.args
    return ()


def with_children(e: Expr, kids: Sequence[Expr]) -> Expr:
    """e with its children replaced, in child_exprs order."""
    if isinstance(e, Index):
        return replace(e, index=kids[0])
    if isinstance(e, (Unary, Cast)):
        return replace(e, operand=kids[0])
    if isinstance(e, Binary):
        return replace(e, lhs=kids[0], rhs=kids[1])
    if isinstance(e, Call):
        return replace(e, args=tuple(kids))
    return e


def substitute(e: Expr, old: Expr, new: Expr) -> Expr:
    """Replace every subtree equal to old."""
    if e == old:
        return new
    kids = child_exprs(e)
    if not kids:
        return e
    return with_children(e, [substitute(c, old, new) for c in kids])


def walk_expr(e: Expr) -> Iterator[Expr]:
    """Pre-order walk over an expression tree."""
    yield e
    for c in child_exprs(e):
        yield from walk_expr(c)


def stmt_exprs(s: Stmt) -> Tuple[Expr, ...]:
    """Expressions held directly by a statement (not by nested statements)."""
    if isinstance(s, Decl):
        return (s.init,) if s.init is not None else ()
    if isinstance(s, (Assign, CompoundAssign)):
        return (s.target, s.value)
    if isinstance(s, For):
        return (s.start, s.cond)
    if isinstance(s, If):
        return (s.cond,)
    if isinstance(s, Return):
        return (s.value,)
    if isinstance(s, ExprStmt):
        return (s.expr,)
    return ()


def child_blocks(s: Stmt) -> Tuple[Tuple[Stmt, ...], ...]:
    if isinstance(s, For):
        return (s.body,)
    if isinstance(s, If):
        return (s.then,) if s.orelse is None else (s.then, s.orelse)
    if isinstance(s, Block):
        return (s.body,)
    return ()


def walk_stmts(body: Tuple[Stmt, ...]) -> Iterator[Stmt]:
    """Pre-order walk over statements, descending into loops, branches and blocks."""
    for s in body:
        yield s
        for block in child_blocks(s):
            yield from walk_stmts(block)


def walk_all_exprs(body: Tuple[Stmt, ...]) -> Iterator[Expr]:
    for s in walk_stmts(body):
        for e in stmt_exprs(s):
            yield from walk_expr(e)


def count_nodes(body: Tuple[Stmt, ...], kind: type) -> int:
    return sum(1 for s in walk_stmts(body) if isinstance(s, kind))
