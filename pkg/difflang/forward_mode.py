"""Forward-mode source transformation (the `differentiate` operation).

Every Double local `v` gets a shadow `_d_v` holding dv/d(wrt); each original
statement is preceded by its derivative statement and `return e` becomes
`return de`.
"""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from common.utils.logging import setup_logging
from difflang.derivatives import ONE, ZERO, Mode, TangentRules, add, div, mul, parse_wrt, sub
from difflang.errors import UnknownParameter, UnsupportedConstruct
from difflang.evaluator import EvalStats, Interpreter
from difflang.lang.nodes import (
    Assign,
    Binary,
    Block,
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
    Program,
    Return,
    Stmt,
    Type,
    VarRef,
    walk_stmts,
)
from difflang.lang.parser import parse
from difflang.lang.printer import print_function
from difflang.numdiff import expand_slots

logger = setup_logging(__name__)


@dataclass(frozen=True)
class DiffRequest:
    func: FuncDef
    wrt: str
    slot: Optional[int] = None

    @classmethod
    def from_text(cls, func: FuncDef, wrt: str) -> "DiffRequest":
        name, slot = parse_wrt(wrt)
        return cls(func, name, slot)


@dataclass(frozen=True)
class DerivedFunc:
    original: FuncDef
    derivative: FuncDef
    mode: Mode = Mode.FORWARD


def shadow(name: str) -> str:
    return f"_d_{name}"


def derivative_name(req: DiffRequest) -> str:
    if req.slot is None:
        return f"{req.func.name}_d{req.wrt}"
    return f"{req.func.name}_d{req.wrt}_{req.slot}"


def check_request(req: DiffRequest) -> None:
    param = req.func.param(req.wrt)
    if param is None:
        raise UnknownParameter(f"'{req.func.name}' has no parameter '{req.wrt}'")
    if req.slot is None and param.type != Type.DOUBLE:
        raise UnknownParameter(
            f"'{req.wrt}' is {param.type.value}; differentiate with respect to a double "
            f"or a single array slot such as {req.wrt}[0]"
        )
    if req.slot is not None and (param.type != Type.DOUBLE_ARRAY or req.slot < 0):
        raise UnknownParameter(f"'{req.wrt}[{req.slot}]' is not an array slot")


class ForwardTransformer:
    def __init__(self, req: DiffRequest):
        self.req = req
        func = req.func
        self.params = {p.name: p for p in func.params}
        self.assigned_params: Set[str] = {
            s.target.name
            for s in walk_stmts(func.body)
            if isinstance(s, (Assign, CompoundAssign)) and isinstance(s.target, VarRef)
            and s.target.name in self.params
        }
        # scope frames: name -> has a shadow
        self.scopes: List[Dict[str, bool]] = []
        self.rules = TangentRules(self.seed)

    # --- names ---

    def lookup(self, name: str) -> Optional[bool]:
        for frame in reversed(self.scopes):
            if name in frame:
                return frame[name]
        return None

    def seed(self, e: Expr) -> Optional[Expr]:
        if isinstance(e, Index):
            if self.req.slot is not None and e.array == self.req.wrt and self.lookup(e.array) is None:
                hit = Binary("==", e.index, Literal(self.req.slot, Type.INT), Type.INT)
                return Cast(hit)
            return None
        local = self.lookup(e.name)
        if local is not None:
            return VarRef(shadow(e.name), Type.DOUBLE) if local else None
        if e.name in self.assigned_params and self.params[e.name].type == Type.DOUBLE:
            return VarRef(shadow(e.name), Type.DOUBLE)
        if e.name == self.req.wrt and self.req.slot is None:
            return ONE
        # other parameters and constants such as M_PI
        return None

    def target_shadow(self, target: VarRef) -> Optional[VarRef]:
        if target.type != Type.DOUBLE:
            return None
        return VarRef(shadow(target.name), Type.DOUBLE)

    # --- statements ---

    def transform(self, func: FuncDef) -> FuncDef:
        prologue: List[Stmt] = []
        for p in func.params:
            if p.name in self.assigned_params and p.type == Type.DOUBLE:
                init = ONE if (p.name == self.req.wrt and self.req.slot is None) else ZERO
                prologue.append(Decl(shadow(p.name), Type.DOUBLE, init))
        body = self.block(func.body)
        return FuncDef(
            derivative_name(self.req), func.params, tuple(prologue) + body,
            line=func.line, col=func.col,
        )

    def block(self, stmts: Tuple[Stmt, ...]) -> Tuple[Stmt, ...]:
        self.scopes.append({})
        out: List[Stmt] = []
        for s in stmts:
            out.extend(self.stmt(s))
        self.scopes.pop()
        return tuple(out)

    def stmt(self, s: Stmt) -> List[Stmt]:
        d = self.rules.d
        if isinstance(s, Decl):
            if s.type != Type.DOUBLE:
                self.scopes[-1][s.name] = False
                return [s]
            dinit = d(s.init) if s.init is not None else None
            self.scopes[-1][s.name] = True
            return [Decl(shadow(s.name), Type.DOUBLE, dinit or ZERO, line=s.line, col=s.col), s]

        if isinstance(s, (Assign, CompoundAssign)):
            if isinstance(s.target, Index):
                raise UnsupportedConstruct(
                    f"assignment to array element '{s.target.array}[...]'", s.line, s.col
                )
            sv = self.target_shadow(s.target)
            if sv is None:
                return [s]
            if isinstance(s, Assign):
                return [Assign(sv, d(s.value) or ZERO, line=s.line, col=s.col), s]
            return self.compound(s, sv) + [s]

        if isinstance(s, For):
            self.scopes.append({s.counter: False})
            body = self.block(s.body)
            self.scopes.pop()
            return [For(s.counter, s.start, s.cond, body, line=s.line, col=s.col)]

        if isinstance(s, If):
            then = self.block(s.then)
            orelse = self.block(s.orelse) if s.orelse is not None else None
            return [If(s.cond, then, orelse, line=s.line, col=s.col)]

        if isinstance(s, Return):
            return [Return(d(s.value) or ZERO, line=s.line, col=s.col)]

        if isinstance(s, Block):
            return [Block(self.block(s.body), line=s.line, col=s.col)]

        if isinstance(s, ExprStmt):
            raise UnsupportedConstruct("expression statement", s.line, s.col)
        raise UnsupportedConstruct(type(s).__name__, s.line, s.col)

    def compound(self, s: CompoundAssign, sv: VarRef) -> List[Stmt]:
        dv = self.rules.d(s.value)
        v, e = s.target, s.value
        where = dict(line=s.line, col=s.col)
        if s.op in ("+=", "-="):
            return [CompoundAssign(s.op, sv, dv, **where)] if dv is not None else []
        if s.op == "*=":
            new = add(mul(sv, e), mul(v, dv))
        else:
            new = div(sv, e) if dv is None else div(sub(mul(sv, e), mul(v, dv)), mul(e, e))
        return [Assign(sv, new, **where)]


def differentiate(req: DiffRequest) -> DerivedFunc:
    """Generate the forward-mode derivative of req.func with respect to req.wrt."""
    check_request(req)
    try:
        derivative = ForwardTransformer(req).transform(req.func)
    except UnsupportedConstruct as e:
        logger.error(f"Cannot differentiate '{req.func.name}': {e.message}")
        raise
    logger.info(f"Generated forward derivative '{derivative.name}'")
    return DerivedFunc(req.func, derivative)


def differentiate_source(src: str, fname: str, wrt: str) -> str:
    """parse -> differentiate -> print."""
    program = parse(src)
    func = program.get(fname)
    if func is None:
        raise UnknownParameter(f"no function named '{fname}'")
    derived = differentiate(DiffRequest.from_text(func, wrt))
    return print_function(derived.derivative)


def forward_gradient(func: FuncDef, wrt: Sequence[str], args: Mapping,
                     stats: Optional[EvalStats] = None) -> List[float]:
    """Gradient assembled from one forward derivative per slot.

    Same layout as `_result`: array slots first, then doubles. Costs one
    derivative evaluation per slot.
    """
    derivatives = []
    for slot in expand_slots(func, wrt, args):
        derivatives.append(differentiate(DiffRequest(func, slot.arg, slot.index)).derivative)
    interp = Interpreter(Program((func,) + tuple(derivatives)))
    out = []
    for d in derivatives:
        if stats is not None:
            out.append(interp.call_counted(d.name, args, stats))
        else:
            out.append(interp.call(d.name, args))
    return out
