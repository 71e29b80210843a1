"""Invariant checks over a Program, reported as diagnostics."""
from dataclasses import dataclass
from typing import Dict, List, Set

from difflang.lang.nodes import (
    ARITHMETIC_OPS,
    BUILTINS,
    COMPARISON_OPS,
    CONSTANTS,
    INTRINSICS,
    Assign,
    Binary,
    Call,
    Cast,
    CompoundAssign,
    Decl,
    Expr,
    For,
    FuncDef,
    Index,
    Program,
    Type,
    Unary,
    VarRef,
    walk_all_exprs,
    walk_stmts,
)
from difflang.lang.parser import always_returns


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int = 0
    col: int = 0
    severity: str = "error"

    def render(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.severity}: {self.message}"


def _diag(code: str, message: str, node) -> Diagnostic:
    return Diagnostic(code, message, getattr(node, "line", 0), getattr(node, "col", 0))


def _expr_type_errors(e: Expr, declared: Dict[str, Set[Type]]) -> List[Diagnostic]:
    bad = lambda msg: [_diag("TypeInconsistent", msg, e)]
    if isinstance(e, VarRef):
        if e.name in CONSTANTS and e.name not in declared:
            return [] if e.type == Type.DOUBLE else bad(f"constant '{e.name}' must be double")
        if e.type not in declared.get(e.name, set()):
            return bad(f"'{e.name}' used as {e.type.value} but not declared so")
    elif isinstance(e, Index):
        if e.type != Type.DOUBLE or e.index.type != Type.INT:
            return bad(f"index into '{e.array}' must be int and yield double")
        if Type.DOUBLE_ARRAY not in declared.get(e.array, set()):
            return bad(f"'{e.array}' is not an array")
    elif isinstance(e, Unary):
        if e.operand.type != e.type or e.type not in (Type.INT, Type.DOUBLE):
            return bad("unary operand type differs from result type")
    elif isinstance(e, Cast):
        if e.operand.type != Type.INT or e.type != Type.DOUBLE:
            return bad("cast must convert int to double")
    elif isinstance(e, Binary):
        if e.lhs.type != e.rhs.type or e.lhs.type not in (Type.INT, Type.DOUBLE):
            return bad(f"operands of '{e.op}' have different types")
        if e.op in COMPARISON_OPS and e.type != Type.INT:
            return bad(f"comparison '{e.op}' must yield int")
        if e.op in ARITHMETIC_OPS and e.type != e.lhs.type:
            return bad(f"'{e.op}' result type differs from operand type")
    elif isinstance(e, Call) and e.name in INTRINSICS:
        if any(a.type != Type.DOUBLE for a in e.args) or e.type != Type.DOUBLE:
            return bad(f"'{e.name}' takes and returns double")
    return []


def validate_function(func: FuncDef, earlier: Dict[str, FuncDef]) -> List[Diagnostic]:
    out: List[Diagnostic] = []

    seen: Set[str] = set()
    for p in func.params:
        if p.name in seen:
            out.append(_diag("DuplicateParam", f"duplicate parameter '{p.name}' in '{func.name}'", p))
        seen.add(p.name)

    defaults_started = False
    for p in func.params:
        if p.default is not None:
            defaults_started = True
        elif defaults_started:
            out.append(_diag(
                "DefaultNotTrailing",
                f"parameter '{p.name}' without default follows a defaulted parameter", p,
            ))
        if p.default is not None and p.default.type != p.type:
            out.append(_diag("TypeInconsistent", f"default of '{p.name}' has the wrong type", p))

    if func.return_type != Type.DOUBLE:
        out.append(_diag("ReturnType", f"function '{func.name}' must return double", func))
    if not always_returns(func.body):
        out.append(_diag("MissingReturn", f"function '{func.name}' does not return on every path", func))

    declared: Dict[str, Set[Type]] = {}
    for p in func.params:
        declared.setdefault(p.name, set()).add(p.type)
    for s in walk_stmts(func.body):
        if isinstance(s, Decl):
            declared.setdefault(s.name, set()).add(s.type)
        elif isinstance(s, For):
            declared.setdefault(s.counter, set()).add(Type.INT)

    for s in walk_stmts(func.body):
        if not isinstance(s, For):
            continue
        for inner in walk_stmts(s.body):
            target = getattr(inner, "target", None)
            if isinstance(inner, (Assign, CompoundAssign)) and isinstance(target, VarRef) \
                    and target.name == s.counter:
                out.append(_diag(
                    "CounterReassigned", f"loop counter '{s.counter}' is assigned in the loop body", inner,
                ))

    for e in walk_all_exprs(func.body):
        out.extend(_expr_type_errors(e, declared))
        if not isinstance(e, Call) or e.name in INTRINSICS or e.name in BUILTINS:
            continue
        callee = earlier.get(e.name)
        if callee is None:
            out.append(_diag("UnknownFunction", f"call to undefined function '{e.name}'", e))
            continue
        required = sum(1 for p in callee.params if p.default is None)
        if not required <= len(e.args) <= len(callee.params):
            out.append(_diag(
                "CallArity",
                f"'{e.name}' takes {required}..{len(callee.params)} arguments, got {len(e.args)}", e,
            ))
            continue
        for arg, p in zip(e.args, callee.params):
            if arg.type != p.type:
                out.append(_diag(
                    "CallArgType", f"argument '{p.name}' of '{e.name}' must be {p.type.value}", arg,
                ))
    return out


def validate(program: Program) -> List[Diagnostic]:
    """Return one diagnostic per violated invariant; empty when well-formed."""
    diagnostics: List[Diagnostic] = []
    earlier: Dict[str, FuncDef] = {}
    for func in program.functions:
        if func.name in earlier:
            diagnostics.append(_diag("DuplicateFunction", f"function '{func.name}' is defined twice", func))
        if func.name in INTRINSICS or func.name in BUILTINS:
            diagnostics.append(_diag("ReservedName", f"'{func.name}' is a builtin name", func))
        diagnostics.extend(validate_function(func, earlier))
        earlier.setdefault(func.name, func)
    return diagnostics
