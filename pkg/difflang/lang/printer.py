"""Deterministic printer from AST back to difflang source text."""
from typing import List, Tuple

from difflang.lang.nodes import (
    Assign,
    Binary,
    Block,
    Call,
    Cast,
    CompoundAssign,
    Decl,
    Expr,
    ExprStmt,
    For,
    FuncDef,
    If,
    Index,
    Literal,
    Param,
    Program,
    Return,
    Stmt,
    Type,
    Unary,
    VarRef,
)

INDENT = "    "

BINARY_PRECEDENCE = {
    "==": 1, "!=": 1,
    "<": 2, "<=": 2, ">": 2, ">=": 2,
    "+": 3, "-": 3,
    "*": 4, "/": 4,
}
UNARY_PRECEDENCE = 5
ATOM_PRECEDENCE = 6


def format_literal(lit: Literal) -> str:
    if lit.type == Type.INT:
        return str(int(lit.value))
    text = repr(float(lit.value))
    if not any(c in text for c in ".eEn"):
        text += ".0"
    return text


def precedence(e: Expr) -> int:
    if isinstance(e, Binary):
        return BINARY_PRECEDENCE[e.op]
    if isinstance(e, (Unary, Cast)):
        return UNARY_PRECEDENCE
    if isinstance(e, Literal) and e.value < 0:
        return UNARY_PRECEDENCE
    return ATOM_PRECEDENCE


def format_expr(e: Expr) -> str:
    if isinstance(e, Literal):
        return format_literal(e)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, Index):
        return f"{e.array}[{format_expr(e.index)}]"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Unary):
        return e.op + _wrap(e.operand, UNARY_PRECEDENCE)
    if isinstance(e, Cast):
        return "(double)" + _wrap(e.operand, UNARY_PRECEDENCE)
    if isinstance(e, Binary):
        p = BINARY_PRECEDENCE[e.op]
        # left-associative: an equal-precedence right operand needs parentheses
        return f"{_wrap(e.lhs, p)} {e.op} {_wrap(e.rhs, p + 1)}"
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e: Expr, min_precedence: int) -> str:
    text = format_expr(e)
    return f"({text})" if precedence(e) < min_precedence else text


def format_type(t: Type) -> str:
    return "double*" if t == Type.DOUBLE_ARRAY else t.value


def format_param(p: Param) -> str:
    text = f"{format_type(p.type)} {p.name}"
    if p.default is not None:
        text += f" = {format_literal(p.default)}"
    return text


class Printer:
    def __init__(self):
        self.lines: List[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text)

    def function(self, func: FuncDef) -> None:
        params = ", ".join(format_param(p) for p in func.params)
        self.emit(0, f"double {func.name}({params}) {{")
        self.body(func.body, 1)
        self.emit(0, "}")

    def body(self, stmts: Tuple[Stmt, ...], depth: int) -> None:
        for s in stmts:
            self.stmt(s, depth)

    def nested(self, header: str, stmts: Tuple[Stmt, ...], depth: int, close: str = "}") -> None:
        self.emit(depth, header + " {")
        self.body(stmts, depth + 1)
        self.emit(depth, close)

    def stmt(self, s: Stmt, depth: int) -> None:
        if isinstance(s, Decl):
            text = f"{format_type(s.type)} {s.name}"
            if s.init is not None:
                text += f" = {format_expr(s.init)}"
            self.emit(depth, text + ";")
        elif isinstance(s, Assign):
            self.emit(depth, f"{format_expr(s.target)} = {format_expr(s.value)};")
        elif isinstance(s, CompoundAssign):
            self.emit(depth, f"{format_expr(s.target)} {s.op} {format_expr(s.value)};")
        elif isinstance(s, For):
            header = (
                f"for (int {s.counter} = {format_expr(s.start)}; "
                f"{format_expr(s.cond)}; {s.counter}++)"
            )
            self.nested(header, s.body, depth)
        elif isinstance(s, If):
            header = f"if ({format_expr(s.cond)})"
            if s.orelse is None:
                self.nested(header, s.then, depth)
            else:
                self.nested(header, s.then, depth, close="} else {")
                self.body(s.orelse, depth + 1)
                self.emit(depth, "}")
        elif isinstance(s, Return):
            self.emit(depth, f"return {format_expr(s.value)};")
        elif isinstance(s, Block):
            self.emit(depth, "{")
            self.body(s.body, depth + 1)
            self.emit(depth, "}")
        elif isinstance(s, ExprStmt):
            self.emit(depth, format_expr(s.expr) + ";")
        else:
            raise TypeError(f"not a statement: {s!r}")


def print_function(func: FuncDef) -> str:
    printer = Printer()
    printer.function(func)
    return "\n".join(printer.lines) + "\n"


def print_program(program: Program) -> str:
    """Render a Program as source text; parse(print_program(p)) == p."""
    return "\n".join(print_function(f) for f in program.functions)
