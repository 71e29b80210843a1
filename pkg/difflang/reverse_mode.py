"""Reverse-mode source transformation (the `gradient` operation).

The generated `<f>_grad(params..., double* _result)` runs a forward sweep
(the original statements plus trip counters and tape pushes) followed by a
reverse sweep that replays the statements backwards and accumulates adjoints.

A statement with a single active leaf is differentiated as a whole: its
partial comes from the same tangent rules forward mode uses, scaled by the
target's adjoint. Other statements are split into intermediate values
`_v<n>` bound in the forward sweep, and their adjoint flows from the root to
the leaves one node at a time, so the reverse cost stays linear in the size
of the statement.

Restrictions: one `return` as the last top-level statement, no assignment to
array elements, no calls to user functions, no tape locals.
"""
from collections import Counter
from dataclasses import dataclass, replace
from functools import reduce
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

from common.utils.logging import setup_logging
from difflang.derivatives import ONE, ZERO, Mode, TangentRules, add, is_neg, mul, neg
from difflang.errors import NonScalarOutput, UnknownParameter, UnsupportedConstruct
from difflang.evaluator import EvalStats, Interpreter
from difflang.lang.nodes import (
    INTRINSICS,
    Assign,
    Binary,
    Block,
    Call,
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
    child_exprs,
    substitute,
    walk_all_exprs,
    walk_expr,
    walk_stmts,
    with_children,
)
from difflang.lang.parser import parse
from difflang.lang.printer import print_function
from difflang.tape import Tape, tape_pop, tape_push

__all__ = [
    "GradFunc",
    "GradRequest",
    "Tape",
    "evaluate_gradient",
    "gradient",
    "gradient_source",
    "result_size",
    "tape_pop",
    "tape_push",
]

logger = setup_logging(__name__)

RESULT = "_result"
Leaf = Union[VarRef, Index]
Sweep = Tuple[List[Stmt], List[Stmt]]

# A lone partial costing more than this many times its statement is not
# preaccumulated
PREACCUMULATE_LIMIT = 4


@dataclass(frozen=True)
class GradRequest:
    func: FuncDef
    wrt: Tuple[str, ...]

    @classmethod
    def from_names(cls, func: FuncDef, wrt: Optional[Sequence[str]] = None) -> "GradRequest":
        """No names means every double and double* parameter."""
        if not wrt:
            wrt = [p.name for p in func.params if p.type in (Type.DOUBLE, Type.DOUBLE_ARRAY)]
        return cls(func, tuple(w.strip() for w in wrt))


@dataclass(frozen=True)
class GradFunc:
    original: FuncDef
    gradient: FuncDef
    arrays: Tuple[str, ...]
    scalars: Tuple[str, ...]
    mode: Mode = Mode.REVERSE

    def program(self) -> Program:
        return Program((self.original, self.gradient))

    def result_size(self, args) -> int:
        return sum(len(_arg(self.original, args, a)) for a in self.arrays) + len(self.scalars)

    def slot_labels(self, args) -> List[str]:
        """`p[0]`, `p[1]`, ..., then scalar names: the `_result` layout."""
        labels = [f"{a}[{i}]" for a in self.arrays for i in range(len(_arg(self.original, args, a)))]
        return labels + list(self.scalars)


def _arg(func: FuncDef, args, name: str):
    if isinstance(args, Mapping):
        return args[name]
    for p, v in zip(func.params, args):
        if p.name == name:
            return v
    raise UnknownParameter(f"no argument given for '{name}'")


def result_size(func: FuncDef, wrt: Sequence[str], args) -> int:
    """Number of `_result` slots the gradient of func wrt `wrt` writes for args."""
    total = 0
    for name in wrt:
        p = func.param(name)
        if p is None:
            raise UnknownParameter(f"'{func.name}' has no parameter '{name}'")
        total += len(_arg(func, args, name)) if p.type == Type.DOUBLE_ARRAY else 1
    return total


def check_request(req: GradRequest) -> None:
    func = req.func
    if func.return_type != Type.DOUBLE:
        raise NonScalarOutput(f"'{func.name}' must return double", func.line, func.col)
    if not req.wrt:
        raise UnknownParameter(f"'{func.name}' has no double parameters to differentiate")
    if func.param(RESULT) is not None:
        raise UnsupportedConstruct(f"parameter name '{RESULT}' is reserved", func.line, func.col)
    if len(set(req.wrt)) != len(req.wrt):
        raise UnknownParameter(f"duplicate names in wrt list {list(req.wrt)}")
    for name in req.wrt:
        p = func.param(name)
        if p is None:
            raise UnknownParameter(f"'{func.name}' has no parameter '{name}'")
        if p.type not in (Type.DOUBLE, Type.DOUBLE_ARRAY):
            raise UnknownParameter(f"'{name}' is {p.type.value}; gradients are taken wrt double or double*")


# --- node builders ---

def ref(name: str, t: Type = Type.DOUBLE) -> VarRef:
    return VarRef(name, t)


def int_lit(value: int) -> Literal:
    return Literal(value, Type.INT)


def push(tape: str, element: Type, value: Expr) -> ExprStmt:
    return ExprStmt(Call("push", (ref(tape, Type.tape_of(element)), value), element))


def pop(tape: str, element: Type) -> Call:
    return Call("pop", (ref(tape, Type.tape_of(element)),), element)


def plus(a: Optional[Expr], b: Expr) -> Expr:
    return b if a is None else Binary("+", a, b, Type.INT)


def names_in(e: Expr) -> Set[str]:
    return {x.name for x in walk_expr(e) if isinstance(x, VarRef)}


def adjoint_name(name: str) -> str:
    return f"_d_{name}"


def op_cost(e: Expr) -> int:
    """Ops the evaluator counts for one evaluation of e."""
    return sum(
        1 for x in walk_expr(e)
        if isinstance(x, (Unary, Binary)) or (isinstance(x, Call) and x.name in INTRINSICS)
    )


def is_interior(e: Expr) -> bool:
    return isinstance(e, (Unary, Binary, Call)) and e.type == Type.DOUBLE


# --- scopes ---

class ScopeRenamer:
    """Renames a local that shadows an enclosing local to `<name>_<k>`.

    After this pass every simultaneously live local has its own name, so
    hoisting only ever merges declarations whose lifetimes don't overlap.
    """

    def __init__(self, func: FuncDef):
        body = func.body
        self.taken: Set[str] = {p.name for p in func.params}
        self.taken |= {s.name for s in walk_stmts(body) if isinstance(s, Decl)}
        self.taken |= {s.counter for s in walk_stmts(body) if isinstance(s, For)}
        self.taken |= {e.name for e in walk_all_exprs(body) if isinstance(e, VarRef)}
        self.scopes: List[Dict[str, str]] = []

    def rename(self, func: FuncDef) -> FuncDef:
        return replace(func, body=self.block(func.body))

    def lookup(self, name: str) -> Optional[str]:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def bind(self, name: str) -> str:
        new = name
        if self.lookup(name) is not None:
            k = 1
            while f"{name}_{k}" in self.taken:
                k += 1
            new = f"{name}_{k}"
            self.taken.add(new)
            logger.debug(f"Renamed shadowing local '{name}' to '{new}'")
        self.scopes[-1][name] = new
        return new

    def expr(self, e: Expr) -> Expr:
        if isinstance(e, VarRef):
            new = self.lookup(e.name)
            return e if new is None or new == e.name else replace(e, name=new)
        return with_children(e, [self.expr(c) for c in child_exprs(e)])

    def block(self, body: Tuple[Stmt, ...]) -> Tuple[Stmt, ...]:
        self.scopes.append({})
        try:
            return tuple(self.stmt(s) for s in body)
        finally:
            self.scopes.pop()

    def stmt(self, s: Stmt) -> Stmt:
        if isinstance(s, Decl):
            init = self.expr(s.init) if s.init is not None else None
            return replace(s, name=self.bind(s.name), init=init)
        if isinstance(s, (Assign, CompoundAssign)):
            return replace(s, target=self.expr(s.target), value=self.expr(s.value))
        if isinstance(s, For):
            self.scopes.append({})
            try:
                start = self.expr(s.start)
                counter = self.bind(s.counter)
                return replace(s, counter=counter, start=start, cond=self.expr(s.cond), body=self.block(s.body))
            finally:
                self.scopes.pop()
        if isinstance(s, If):
            orelse = self.block(s.orelse) if s.orelse is not None else None
            return replace(s, cond=self.expr(s.cond), then=self.block(s.then), orelse=orelse)
        if isinstance(s, Block):
            return replace(s, body=self.block(s.body))
        if isinstance(s, Return):
            return replace(s, value=self.expr(s.value))
        if isinstance(s, ExprStmt):
            return replace(s, expr=self.expr(s.expr))
        return s


# --- statement graphs ---

class StatementGraph:
    """One right-hand side as named intermediate values.

    Every interior node that is active, or is an operand of an active node,
    is bound to `_v<first + k>`. `edges` lists (node, operand, local partial)
    root first; each partial reads only bound values and leaves, so one pass
    over the edges propagates the adjoint.
    """

    def __init__(self, rhs: Expr, is_active: Callable[[Expr], bool], first: int):
        self.is_active = is_active
        self.first = first
        self.bound: Dict[Expr, VarRef] = {}
        self.values: List[Tuple[VarRef, Expr]] = []
        self.active_names: Set[str] = set()
        self.root = self.bind(rhs, True)

        self.edges: List[Tuple[VarRef, Expr, Expr]] = []
        for node, value in reversed(self.values):
            if node.name not in self.active_names:
                continue
            for operand in dict.fromkeys(child_exprs(value)):
                if not self.carries(operand):
                    continue
                partial = TangentRules(lambda x, operand=operand: ONE if x == operand else None).d(value)
                if partial is not None:
                    self.edges.append((node, operand, substitute(partial, value, node)))

    def bind(self, e: Expr, parent_active: bool) -> Expr:
        if not is_interior(e):
            return e
        if e in self.bound:
            return self.bound[e]
        active = self.is_active(e)
        if not (active or parent_active):
            return e
        value = with_children(e, [self.bind(c, active) for c in child_exprs(e)])
        node = ref(f"_v{self.first + len(self.values)}")
        self.bound[e] = node
        self.values.append((node, value))
        if active:
            self.active_names.add(node.name)
        return node

    def carries(self, operand: Expr) -> bool:
        if isinstance(operand, VarRef) and operand.name in self.active_names:
            return True
        return not is_interior(operand) and self.is_active(operand)

    @property
    def names(self) -> List[str]:
        return [node.name for node, _ in self.values]

    def saved(self) -> List[VarRef]:
        """Bound values the adjoint reads; a loop keeps them on the tape."""
        used: Set[str] = set()
        for _, _, partial in self.edges:
            used |= names_in(partial)
        return [node for node, _ in self.values if node.name in used]

    def reads(self) -> Set[str]:
        """Variables, other than bound values, the adjoint reads."""
        out: Set[str] = set()
        for _, operand, partial in self.edges:
            out |= names_in(partial)
            if isinstance(operand, Index):
                out |= names_in(operand.index)
        return out - set(self.names)

    def forward(self) -> List[Stmt]:
        return [Assign(node, value) for node, value in self.values]

    def adjoints(self, seed: Expr, tr: "ReverseTransformer") -> List[Stmt]:
        pending: Dict[str, List[Expr]] = {self.root.name: [seed]}
        bars: Dict[str, Optional[Expr]] = {}
        out: List[Stmt] = []
        for node, operand, partial in self.edges:
            if node.name not in bars:
                bar = reduce(add, pending.pop(node.name, []), None)
                if bar is not None and not isinstance(bar, (VarRef, Literal)):
                    tmp = tr.temp()
                    out.append(Decl(tmp, Type.DOUBLE, bar))
                    bar = ref(tmp)
                bars[node.name] = bar
            bar = bars[node.name]
            if bar is None:
                continue
            contribution = mul(bar, partial)
            if isinstance(operand, VarRef) and operand.name in self.active_names:
                pending.setdefault(operand.name, []).append(contribution)
            else:
                out.append(tr.accumulate(operand, contribution))
        return out


class ReverseTransformer:
    def __init__(self, func: FuncDef, arrays: Tuple[str, ...], scalars: Tuple[str, ...]):
        self.func = ScopeRenamer(func).rename(func)
        self.arrays = arrays
        self.scalars = scalars
        self.params: Dict[str, Param] = {p.name: p for p in func.params}

        self.declared: Dict[str, Type] = {}
        self.decl_count: Counter = Counter()
        self.top_decls: Set[str] = set()
        self.hoisted: Dict[str, Type] = {}
        self.check()

        assigned = {
            s.target.name for s in walk_stmts(self.func.body)
            if isinstance(s, (Assign, CompoundAssign)) and s.target.name in self.params
        }
        self.adjoint_params = [
            p.name for p in func.params
            if p.name in scalars or (p.name in assigned and p.type == Type.DOUBLE)
        ]
        self.active: Set[str] = set(self.adjoint_params) | {
            n for n, t in self.declared.items() if t == Type.DOUBLE
        }

        self.aux: List[Decl] = []
        self.values: List[str] = []
        self.int_tape: Optional[str] = None
        self.double_tape: Optional[str] = None
        self.temps = 0

        # _result offset of each wrt array; scalars follow the last array
        self.bases: Dict[str, Optional[Expr]] = {}
        base: Optional[Expr] = None
        for a in arrays:
            self.bases[a] = base
            base = plus(base, Call("len", (ref(a, Type.DOUBLE_ARRAY),), Type.INT))
        self.scalar_base = base

    # --- checks ---

    def check(self) -> None:
        body = self.func.body
        if not body or not isinstance(body[-1], Return):
            raise UnsupportedConstruct(
                "reverse mode needs a single return as the last statement", self.func.line, self.func.col
            )
        for s in walk_stmts(body):
            if isinstance(s, Return) and s is not body[-1]:
                raise UnsupportedConstruct("return before the end of the function", s.line, s.col)
            if isinstance(s, ExprStmt):
                raise UnsupportedConstruct("expression statement", s.line, s.col)
            if isinstance(s, (Assign, CompoundAssign)) and isinstance(s.target, Index):
                raise UnsupportedConstruct(
                    f"assignment to array element '{s.target.array}[...]'", s.line, s.col
                )
            if isinstance(s, Decl):
                if s.type.is_tape:
                    raise UnsupportedConstruct(f"tape local '{s.name}'", s.line, s.col)
                self.declare(s.name, s.type, s)
            elif isinstance(s, For):
                self.declare(s.counter, Type.INT, s)
        self.top_decls = {s.name for s in body if isinstance(s, Decl)}

        for e in walk_all_exprs(body):
            if isinstance(e, Call) and e.name not in INTRINSICS and e.name != "len":
                raise UnsupportedConstruct(f"call to '{e.name}'", e.line, e.col)

        for s in walk_stmts(body):
            if isinstance(s, Decl) and not self.in_place(s.name):
                self.hoisted.setdefault(s.name, s.type)

    def declare(self, name: str, t: Type, node) -> None:
        if name in self.params:
            raise UnsupportedConstruct(f"local '{name}' shadows a parameter", node.line, node.col)
        if name.startswith("_"):
            raise UnsupportedConstruct(f"'{name}': leading underscores are reserved", node.line, node.col)
        known = self.declared.setdefault(name, t)
        if known != t:
            raise UnsupportedConstruct(
                f"'{name}' is declared as both {known.value} and {t.value}", node.line, node.col
            )
        self.decl_count[name] += 1

    def in_place(self, name: str) -> bool:
        """A top-level declaration made once stays where it is and is never saved."""
        return self.decl_count[name] == 1 and name in self.top_decls

    # --- partials ---

    def leaves(self, e: Expr) -> List[Leaf]:
        found: Dict[Leaf, None] = {}
        for x in walk_expr(e):
            if isinstance(x, VarRef) and x.type == Type.DOUBLE and x.name in self.active:
                found[x] = None
            elif isinstance(x, Index) and x.array in self.bases:
                found[x] = None
        return list(found)

    def is_active(self, e: Expr) -> bool:
        return bool(self.leaves(e))

    def contributions(self, e: Expr) -> List[Tuple[Leaf, Expr]]:
        out = []
        for leaf in self.leaves(e):
            partial = TangentRules(lambda x, leaf=leaf: ONE if x == leaf else None).d(e)
            if partial is not None:
                out.append((leaf, partial))
        return out

    def graph(self, rhs: Expr, first: int = 0) -> Optional[StatementGraph]:
        """The statement graph of rhs, or None when its partial is preaccumulated."""
        if len(self.leaves(rhs)) < 2:
            limit = PREACCUMULATE_LIMIT * op_cost(rhs)
            if all(op_cost(partial) <= limit for _, partial in self.contributions(rhs)):
                return None
        return StatementGraph(rhs, self.is_active, first)

    def normalize(self, s: Stmt, target: VarRef) -> Tuple[str, Expr]:
        """("=", rhs) for plain assignments, ("+=" | "-=", e) for pure accumulation."""
        if isinstance(s, Decl):
            return "=", s.init if s.init is not None else ZERO
        if isinstance(s, Assign):
            return "=", s.value
        if s.op in ("+=", "-=") and target.name not in names_in(s.value):
            return s.op, s.value
        return "=", Binary(s.op[0], target, s.value, target.type)

    def reads(self, s: Stmt) -> Set[str]:
        """Names the reverse sweep reads when replaying s."""
        out: Set[str] = set()
        for inner in walk_stmts((s,)):
            if isinstance(inner, (Decl, Assign, CompoundAssign)) and self.target(inner).type == Type.DOUBLE:
                _, rhs = self.normalize(inner, self.target(inner))
                graph = self.graph(rhs)
                if graph is not None:
                    out |= graph.reads()
                    continue
                for leaf, partial in self.contributions(rhs):
                    out |= names_in(partial)
                    if isinstance(leaf, Index):
                        out |= names_in(leaf.index)
        return out

    @staticmethod
    def target(s: Stmt) -> VarRef:
        return ref(s.name, s.type) if isinstance(s, Decl) else s.target

    # --- generated names ---

    def aux_decl(self, t: Type, init: Optional[Expr] = None) -> str:
        name = f"_t{len(self.aux)}"
        self.aux.append(Decl(name, t, init))
        return name

    def shared_tape(self, element: Type) -> str:
        if element == Type.INT:
            if self.int_tape is None:
                self.int_tape = self.aux_decl(Type.INT_TAPE)
            return self.int_tape
        if self.double_tape is None:
            self.double_tape = self.aux_decl(Type.DOUBLE_TAPE)
        return self.double_tape

    def temp(self) -> str:
        name = f"_r_d{self.temps}"
        self.temps += 1
        return name

    def new_graph(self, rhs: Expr) -> Optional[StatementGraph]:
        graph = self.graph(rhs, len(self.values))
        if graph is not None:
            self.values.extend(graph.names)
        return graph

    def accumulate(self, leaf: Leaf, value: Expr) -> Stmt:
        op = "+="
        if is_neg(value):
            op, value = "-=", value.operand
        if isinstance(leaf, VarRef):
            return CompoundAssign(op, ref(adjoint_name(leaf.name)), value)
        slot = plus(self.bases[leaf.array], leaf.index)
        return CompoundAssign(op, Index(RESULT, slot), value)

    def propagate(self, rhs: Expr, seed: Expr, graph: Optional[StatementGraph]) -> List[Stmt]:
        if graph is not None:
            return graph.adjoints(seed, self)
        return [self.accumulate(leaf, mul(seed, partial)) for leaf, partial in self.contributions(rhs)]

    def scalar_slot(self, k: int) -> Expr:
        if self.scalar_base is None:
            return int_lit(k)
        return self.scalar_base if k == 0 else plus(self.scalar_base, int_lit(k))

    # --- sweeps ---

    def transform(self) -> FuncDef:
        func = self.func
        *stmts, ret = func.body
        fwd, rev = self.sweep(tuple(stmts), 0, set(), top=True)

        graph = self.new_graph(ret.value)
        seed = graph.forward() if graph is not None else []
        seed += self.propagate(ret.value, ONE, graph)
        writes = [
            CompoundAssign("+=", Index(RESULT, self.scalar_slot(k)), ref(adjoint_name(name)))
            for k, name in enumerate(self.scalars)
        ]

        adjoints = [Decl(adjoint_name(n), Type.DOUBLE, ZERO) for n in self.adjoint_params]
        adjoints += [
            Decl(adjoint_name(n), Type.DOUBLE, ZERO)
            for n, t in self.declared.items() if t == Type.DOUBLE
        ]
        hoisted = [Decl(n, t) for n, t in self.hoisted.items()]
        values = [Decl(n, Type.DOUBLE) for n in self.values]
        body = adjoints + hoisted + values + self.aux + fwd + seed + rev + writes + [Return(ZERO)]
        params = func.params + (Param(RESULT, Type.DOUBLE_ARRAY),)
        return FuncDef(f"{func.name}_grad", params, tuple(body), line=func.line, col=func.col)

    def sweep(self, stmts: Tuple[Stmt, ...], depth: int, seen: Set[str], top: bool = False) -> Sweep:
        """Forward statements in order and their reverse replay, already reversed.

        `seen` holds names read by reverse replays that run after this block's.
        """
        fwd: List[Stmt] = []
        rev: List[Stmt] = []
        seen = set(seen)
        for s in stmts:
            f, r = self.stmt(s, depth, seen, top)
            fwd.extend(f)
            rev[:0] = r
            seen |= self.reads(s)
        return fwd, rev

    def stmt(self, s: Stmt, depth: int, seen: Set[str], top: bool) -> Sweep:
        if isinstance(s, (Decl, Assign, CompoundAssign)):
            return self.assignment(s, depth, seen | self.reads(s), top)
        if isinstance(s, For):
            return self.loop(s, depth, seen | self.reads(s))
        if isinstance(s, If):
            return self.branch(s, depth, seen)
        if isinstance(s, Block):
            return self.sweep(s.body, depth, seen)
        raise UnsupportedConstruct(type(s).__name__, s.line, s.col)

    def assignment(self, s: Stmt, depth: int, live: Set[str], top: bool) -> Sweep:
        target = self.target(s)
        name, t = target.name, target.type
        in_place = isinstance(s, Decl) and top and self.in_place(name)

        graph: Optional[StatementGraph] = None
        if t == Type.DOUBLE:
            kind, rhs = self.normalize(s, target)
            graph = self.new_graph(rhs)

        if graph is not None:
            forward = self.rebound(s, target, kind, graph.root, in_place)
        elif isinstance(s, Decl) and not in_place:
            init = s.init if s.init is not None else (ZERO if t == Type.DOUBLE else int_lit(0))
            forward = Assign(target, init, line=s.line, col=s.col)
        else:
            forward = s

        fwd: List[Stmt] = []
        rev: List[Stmt] = []
        if not in_place and name in live:
            tape = self.shared_tape(t)
            fwd.append(push(tape, t, target))
            rev.append(Assign(target, pop(tape, t)))
        if graph is not None:
            fwd.extend(graph.forward())
            if depth > 0:
                # a loop overwrites the values before the replay reads them
                saved = graph.saved()
                if saved:
                    tape = self.shared_tape(Type.DOUBLE)
                    fwd.extend(push(tape, Type.DOUBLE, v) for v in saved)
                    rev[:0] = [Assign(v, pop(tape, Type.DOUBLE)) for v in reversed(saved)]
        fwd.append(forward)
        if t == Type.DOUBLE:
            rev.extend(self.adjoint(s, target, in_place, graph))
        return fwd, rev

    @staticmethod
    def rebound(s: Stmt, target: VarRef, kind: str, root: Expr, in_place: bool) -> Stmt:
        """s with its right-hand side replaced by the graph root."""
        if isinstance(s, Decl):
            if in_place:
                return replace(s, init=root)
            return Assign(target, root, line=s.line, col=s.col)
        if isinstance(s, Assign):
            return replace(s, value=root)
        if kind == "=":
            return Assign(target, root, line=s.line, col=s.col)
        return replace(s, value=root)

    def adjoint(self, s: Stmt, target: VarRef, in_place: bool,
                graph: Optional[StatementGraph]) -> List[Stmt]:
        kind, rhs = self.normalize(s, target)
        dv = ref(adjoint_name(target.name))
        if kind != "=":
            return self.propagate(rhs, dv if kind == "+=" else neg(dv), graph)
        if not self.leaves(rhs):
            return [] if in_place else [Assign(dv, ZERO)]
        tmp = self.temp()
        out: List[Stmt] = [Decl(tmp, Type.DOUBLE, dv), Assign(dv, ZERO)]
        out += self.propagate(rhs, ref(tmp), graph)
        return out

    def loop(self, s: For, depth: int, live: Set[str]) -> Sweep:
        k = len(self.aux)
        trips = ref(self.aux_decl(Type.INT, int_lit(0)), Type.INT)
        counter = ref(s.counter, Type.INT)
        needs_counter = any(s.counter in self.reads(inner) for inner in s.body)
        looptape = self.aux_decl(Type.INT_TAPE) if needs_counter else None

        body_f, body_r = self.sweep(s.body, depth + 1, live)

        head: List[Stmt] = [CompoundAssign("+=", trips, int_lit(1))]
        if looptape is not None:
            head.append(push(looptape, Type.INT, counter))
            self.hoisted.setdefault(s.counter, Type.INT)

        fwd: List[Stmt] = []
        rev: List[Stmt] = []
        if depth > 0:
            fwd.append(Assign(trips, int_lit(0)))
        fwd.append(For(s.counter, s.start, s.cond, tuple(head + body_f), line=s.line, col=s.col))
        if depth > 0:
            tape = self.shared_tape(Type.INT)
            fwd.append(push(tape, Type.INT, trips))
            rev.append(Assign(trips, pop(tape, Type.INT)))

        r = ref(f"_r{k}", Type.INT)
        replay: List[Stmt] = []
        if looptape is not None:
            replay.append(Assign(counter, pop(looptape, Type.INT)))
        replay.extend(body_r)
        rev.append(For(r.name, int_lit(0), Binary("<", r, trips, Type.INT), tuple(replay)))
        return fwd, rev

    def branch(self, s: If, depth: int, seen: Set[str]) -> Sweep:
        then_f, then_r = self.sweep(s.then, depth, seen)
        else_f, else_r = self.sweep(s.orelse or (), depth, seen)
        # selector goes last so the replay pops it first
        tape = self.shared_tape(Type.INT)
        fwd = If(
            s.cond,
            tuple(then_f + [push(tape, Type.INT, int_lit(1))]),
            tuple(else_f + [push(tape, Type.INT, int_lit(0))]),
            line=s.line, col=s.col,
        )
        rev = If(
            Binary("==", pop(tape, Type.INT), int_lit(1), Type.INT),
            tuple(then_r),
            tuple(else_r) if else_r else None,
        )
        return [fwd], [rev]


def gradient(req: GradRequest) -> GradFunc:
    """Generate the reverse-mode gradient of req.func wrt every name in req.wrt."""
    check_request(req)
    func = req.func
    arrays = tuple(p.name for p in func.params if p.name in req.wrt and p.type == Type.DOUBLE_ARRAY)
    scalars = tuple(p.name for p in func.params if p.name in req.wrt and p.type == Type.DOUBLE)
    try:
        grad = ReverseTransformer(func, arrays, scalars).transform()
    except UnsupportedConstruct as e:
        logger.error(f"Cannot build gradient of '{func.name}': {e.message}")
        raise
    logger.info(f"Generated gradient '{grad.name}' wrt {', '.join(arrays + scalars)}")
    return GradFunc(func, grad, arrays, scalars)


def gradient_source(src: str, fname: str, wrt: Optional[Sequence[str]] = None) -> str:
    """parse -> gradient -> print."""
    program = parse(src)
    func = program.get(fname)
    if func is None:
        raise UnknownParameter(f"no function named '{fname}'")
    return print_function(gradient(GradRequest.from_names(func, wrt)).gradient)


def evaluate_gradient(grad: GradFunc, args, interp: Optional[Interpreter] = None,
                      stats: Optional[EvalStats] = None,
                      result: Optional[List[float]] = None) -> List[float]:
    """Run the generated gradient once and return `_result`.

    A fresh zeroed buffer is used unless `result` is given; the generated
    code only ever accumulates into it.
    """
    if interp is None:
        interp = Interpreter(grad.program())
    if result is None:
        result = [0.0] * grad.result_size(args)
    if isinstance(args, Mapping):
        named = dict(args)
    else:
        named = {p.name: v for p, v in zip(grad.original.params, args)}
    named[RESULT] = result
    if stats is not None:
        interp.call_counted(grad.gradient.name, named, stats)
    else:
        interp.call(grad.gradient.name, named)
    return result
