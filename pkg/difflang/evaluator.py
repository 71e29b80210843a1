"""Interpreter for difflang programs.

Functions are lowered once into nested Python closures over a flat frame of
slots (names are resolved to slots through lexically scoped Env frames at
lowering time), then executed. The same interpreter runs original functions,
generated derivatives and the finite-difference baseline.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

from common.utils.config import config
from common.utils.logging import setup_logging
from difflang.errors import (
    ArityMismatch,
    DomainError,
    EvalError,
    IndexOutOfBounds,
    StepLimitExceeded,
    TypeMismatch,
    UnboundName,
)
from difflang.lang.nodes import (
    ARITHMETIC_OPS,
    CONSTANTS,
    INT_MAX,
    INT_MIN,
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
    Program,
    Return,
    Stmt,
    Type,
    Unary,
    VarRef,
)
from difflang.tape import Tape

logger = setup_logging(__name__)

Value = Union[float, int, List[float], Tape]
Frame = List[Value]
ExprFn = Callable[[Frame], Value]
StmtFn = Callable[[Frame], Optional[Value]]


@dataclass
class EvalStats:
    """Operation counters; only ever incremented."""
    scalar_ops: int = 0
    intrinsic_calls: int = 0
    func_evals: int = 0

    @property
    def total_ops(self) -> int:
        return self.scalar_ops + self.intrinsic_calls

    def add(self, other: "EvalStats") -> None:
        self.scalar_ops += other.scalar_ops
        self.intrinsic_calls += other.intrinsic_calls
        self.func_evals += other.func_evals


class Env:
    """Lexically scoped name -> frame slot bindings used while lowering."""

    def __init__(self, parent: Optional["Env"] = None, counter: Optional[List[int]] = None):
        self.parent = parent
        self.bindings: Dict[str, int] = {}
        self.counter = counter if counter is not None else [0]

    def child(self) -> "Env":
        return Env(self, self.counter)

    def bind(self, name: str) -> int:
        slot = self.counter[0]
        self.counter[0] += 1
        self.bindings[name] = slot
        return slot

    def lookup(self, name: str, node=None) -> int:
        env = self
        while env is not None:
            if name in env.bindings:
                return env.bindings[name]
            env = env.parent
        raise UnboundName(f"unbound name '{name}'", getattr(node, "line", 0), getattr(node, "col", 0))

    @property
    def size(self) -> int:
        return self.counter[0]


@dataclass
class CompiledFunction:
    func: FuncDef
    body: StmtFn
    frame_size: int


def _where(node) -> dict:
    return {"line": getattr(node, "line", 0), "col": getattr(node, "col", 0)}


def _int_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def _int64(v: int, node) -> int:
    if not INT_MIN <= v <= INT_MAX:
        raise DomainError(f"int overflow: {v} does not fit in 64 bits", **_where(node))
    return v


class Interpreter:
    """Executes functions of one Program. Not thread-safe; create one per thread."""

    def __init__(self, program: Program, max_steps: Optional[int] = None,
                 stats: Optional[EvalStats] = None):
        self.program = program
        self.max_steps = max_steps if max_steps is not None else config["evaluator"]["max_steps"]
        self.stats = stats if stats is not None else EvalStats()
        self.ops = 0
        self.intrinsics = 0
        self.steps = 0
        self.last_tapes: List[Tape] = []
        self._compiled: Dict[str, CompiledFunction] = {}

    # --- public API ---

    def call(self, fname: str, args: Union[Sequence[Value], Mapping[str, Value]],
             stats: Optional[EvalStats] = None) -> Value:
        """Run fname on args; op counts go to stats (or this instance's stats)."""
        compiled = self.compiled(fname)
        frame = self.bind_args(compiled, args)
        self.steps = 0
        self.ops = 0
        self.intrinsics = 0
        self.last_tapes = []
        try:
            result = compiled.body(frame)
        finally:
            target = stats if stats is not None else self.stats
            target.scalar_ops += self.ops
            target.intrinsic_calls += self.intrinsics
        if result is None:
            raise EvalError(f"function '{fname}' finished without returning", **_where(compiled.func))
        return result

    def call_counted(self, fname: str, args, stats: EvalStats) -> Value:
        stats.func_evals += 1
        return self.call(fname, args, stats)

    def compiled(self, fname: str) -> CompiledFunction:
        found = self._compiled.get(fname)
        if found is None:
            func = self.program.get(fname)
            if func is None:
                raise UnboundName(f"no function named '{fname}'")
            found = self._compile_function(func)
            self._compiled[fname] = found
            logger.debug(f"Compiled '{fname}' into {found.frame_size} slots")
        return found

    def bind_args(self, compiled: CompiledFunction, args) -> Frame:
        func = compiled.func
        if isinstance(args, Mapping):
            unknown = set(args) - {p.name for p in func.params}
            if unknown:
                raise ArityMismatch(f"'{func.name}' has no parameter(s) {', '.join(sorted(unknown))}")
            missing = [p.name for p in func.params if p.name not in args and p.default is None]
            if missing:
                raise ArityMismatch(f"'{func.name}' is missing argument(s) {', '.join(missing)}")
            values = [args[p.name] if p.name in args else p.default.value for p in func.params]
        else:
            values = list(args)
            required = sum(1 for p in func.params if p.default is None)
            if not required <= len(values) <= len(func.params):
                raise ArityMismatch(
                    f"'{func.name}' takes {required}..{len(func.params)} arguments, got {len(values)}"
                )
            values += [p.default.value for p in func.params[len(values):]]

        frame: Frame = [None] * compiled.frame_size
        for slot, (p, v) in enumerate(zip(func.params, values)):
            frame[slot] = self._check_arg(func, p.name, p.type, v)
        return frame

    @staticmethod
    def _check_arg(func: FuncDef, name: str, t: Type, v: Value) -> Value:
        if t == Type.DOUBLE and isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v)
        if t == Type.INT and isinstance(v, int) and not isinstance(v, bool):
            return _int64(v, func)
        if t == Type.DOUBLE_ARRAY and isinstance(v, list):
            return v
        raise TypeMismatch(f"argument '{name}' of '{func.name}' must be {t.value}, got {type(v).__name__}")

    # --- lowering ---

    def _compile_function(self, func: FuncDef) -> CompiledFunction:
        env = Env()
        for p in func.params:
            env.bind(p.name)
        body = self._block(func.body, env)
        return CompiledFunction(func, body, env.size)

    def _block(self, stmts, env: Env) -> StmtFn:
        fns = [self._stmt(s, env) for s in stmts]
        if len(fns) == 1:
            return fns[0]

        def run(f):
            for fn in fns:
                r = fn(f)
                if r is not None:
                    return r
            return None
        return run

    def _tick(self, node) -> None:
        self.steps += 1
        if self.steps > self.max_steps:
            raise StepLimitExceeded(f"exceeded {self.max_steps} steps", **_where(node))

    def _stmt(self, s: Stmt, env: Env) -> StmtFn:
        interp = self
        tick = self._tick

        if isinstance(s, Decl):
            init = self._expr(s.init, env) if s.init is not None else None
            slot = env.bind(s.name)
            if s.type.is_tape:
                element = int if s.type == Type.INT_TAPE else float

                def run(f):
                    tick(s)
                    tape = Tape(element)
                    interp.last_tapes.append(tape)
                    f[slot] = tape
            elif init is None:
                zero = 0 if s.type == Type.INT else 0.0

                def run(f):
                    tick(s)
                    f[slot] = zero
            else:
                def run(f):
                    tick(s)
                    f[slot] = init(f)
            return run

        if isinstance(s, Assign):
            value = self._expr(s.value, env)
            if isinstance(s.target, VarRef):
                slot = env.lookup(s.target.name, s.target)

                def run(f):
                    tick(s)
                    f[slot] = value(f)
                return run
            arr_slot = env.lookup(s.target.array, s.target)
            index = self._expr(s.target.index, env)

            def run(f):
                tick(s)
                arr = f[arr_slot]
                i = index(f)
                v = value(f)
                if not 0 <= i < len(arr):
                    raise IndexOutOfBounds(f"{s.target.array}[{i}] outside [0, {len(arr)})", **_where(s))
                arr[i] = v
            return run

        if isinstance(s, CompoundAssign):
            return self._compound(s, env)

        if isinstance(s, For):
            inner = env.child()
            start = self._expr(s.start, inner)
            slot = inner.bind(s.counter)
            cond = self._expr(s.cond, inner)
            body = self._block(s.body, inner.child())

            def run(f):
                tick(s)
                f[slot] = start(f)
                while cond(f):
                    tick(s)
                    r = body(f)
                    if r is not None:
                        return r
                    f[slot] += 1
                    interp.ops += 1
                return None
            return run

        if isinstance(s, If):
            cond = self._expr(s.cond, env)
            then = self._block(s.then, env.child())
            orelse = self._block(s.orelse, env.child()) if s.orelse is not None else None

            def run(f):
                tick(s)
                if cond(f):
                    return then(f)
                if orelse is not None:
                    return orelse(f)
                return None
            return run

        if isinstance(s, Return):
            value = self._expr(s.value, env)

            def run(f):
                tick(s)
                return value(f)
            return run

        if isinstance(s, Block):
            return self._block(s.body, env.child())

        if isinstance(s, ExprStmt):
            expr = self._expr(s.expr, env)

            def run(f):
                tick(s)
                expr(f)
            return run

        raise EvalError(f"cannot execute {type(s).__name__}", **_where(s))

    def _compound(self, s: CompoundAssign, env: Env) -> StmtFn:
        interp = self
        tick = self._tick
        value = self._expr(s.value, env)
        is_int = s.target.type == Type.INT
        op = s.op[0]

        def combine(a, b):
            interp.ops += 1
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if b == 0:
                raise DomainError("division by zero", **_where(s))
            return _int_div(a, b) if is_int else a / b

        if is_int:
            unchecked = combine

            def combine(a, b):
                return _int64(unchecked(a, b), s)

        if isinstance(s.target, VarRef):
            slot = env.lookup(s.target.name, s.target)
            if op == "+" and not is_int:
                def run(f):
                    tick(s)
                    v = value(f)
                    interp.ops += 1
                    f[slot] += v
            else:
                def run(f):
                    tick(s)
                    v = value(f)
                    f[slot] = combine(f[slot], v)
            return run

        arr_slot = env.lookup(s.target.array, s.target)
        index = self._expr(s.target.index, env)

        def run(f):
            tick(s)
            arr = f[arr_slot]
            i = index(f)
            v = value(f)
            if not 0 <= i < len(arr):
                raise IndexOutOfBounds(f"{s.target.array}[{i}] outside [0, {len(arr)})", **_where(s))
            arr[i] = combine(arr[i], v)
        return run

    def _expr(self, e: Expr, env: Env) -> ExprFn:
        interp = self

        if isinstance(e, Literal):
            v = e.value
            return lambda f: v

        if isinstance(e, VarRef):
            try:
                slot = env.lookup(e.name, e)
            except UnboundName:
                if e.name in CONSTANTS:
                    c = CONSTANTS[e.name]
                    return lambda f: c
                raise
            return lambda f: f[slot]

        if isinstance(e, Index):
            arr_slot = env.lookup(e.array, e)
            index = self._expr(e.index, env)

            def ev(f):
                arr = f[arr_slot]
                i = index(f)
                if not 0 <= i < len(arr):
                    raise IndexOutOfBounds(f"{e.array}[{i}] outside [0, {len(arr)})", **_where(e))
                return arr[i]
            return ev

        if isinstance(e, Unary):
            operand = self._expr(e.operand, env)

            def ev(f):
                v = operand(f)
                interp.ops += 1
                return -v
            if e.type == Type.INT:
                unchecked = ev

                def ev(f):
                    return _int64(unchecked(f), e)
            return ev

        if isinstance(e, Cast):
            operand = self._expr(e.operand, env)
            return lambda f: float(operand(f))

        if isinstance(e, Binary):
            return self._binary(e, env)

        if isinstance(e, Call):
            return self._call(e, env)

        raise EvalError(f"cannot evaluate {type(e).__name__}", **_where(e))

    def _binary(self, e: Binary, env: Env) -> ExprFn:
        interp = self
        lhs = self._expr(e.lhs, env)
        rhs = self._expr(e.rhs, env)
        op = e.op

        if op == "+":
            def ev(f):
                a = lhs(f)
                b = rhs(f)
                interp.ops += 1
                return a + b
        elif op == "-":
            def ev(f):
                a = lhs(f)
                b = rhs(f)
                interp.ops += 1
                return a - b
        elif op == "*":
            def ev(f):
                a = lhs(f)
                b = rhs(f)
                interp.ops += 1
                return a * b
        elif op == "/":
            is_int = e.type == Type.INT

            def ev(f):
                a = lhs(f)
                b = rhs(f)
                interp.ops += 1
                if b == 0:
                    raise DomainError("division by zero", **_where(e))
                return _int_div(a, b) if is_int else a / b
        else:
            compare = {
                "<": lambda a, b: a < b,
                "<=": lambda a, b: a <= b,
                ">": lambda a, b: a > b,
                ">=": lambda a, b: a >= b,
                "==": lambda a, b: a == b,
                "!=": lambda a, b: a != b,
            }[op]

            def ev(f):
                a = lhs(f)
                b = rhs(f)
                interp.ops += 1
                return 1 if compare(a, b) else 0
        if e.type == Type.INT and op in ARITHMETIC_OPS:
            unchecked = ev

            def ev(f):
                return _int64(unchecked(f), e)
        return ev

    def _call(self, e: Call, env: Env) -> ExprFn:
        interp = self
        args = [self._expr(a, env) for a in e.args]
        where = _where(e)

        if e.name == "push":
            tape, value = args
            return lambda f: tape(f).push(value(f))
        if e.name == "pop":
            tape = args[0]
            return lambda f: tape(f).pop()
        if e.name == "len":
            arr = args[0]
            return lambda f: len(arr(f))

        if e.name in ("sin", "cos", "exp", "log", "sqrt"):
            fn = _UNARY_INTRINSICS[e.name]
            (arg,) = args

            def ev(f):
                x = arg(f)
                interp.intrinsics += 1
                return fn(x, where)
            return ev

        if e.name == "pow":
            base, exponent = args

            def ev(f):
                a = base(f)
                b = exponent(f)
                interp.intrinsics += 1
                return _pow(a, b, where)
            return ev

        # user-defined function
        callee_name = e.name

        def ev(f):
            compiled = interp.compiled(callee_name)
            frame = interp.bind_args(compiled, [a(f) for a in args])
            result = compiled.body(frame)
            if result is None:
                raise EvalError(f"function '{callee_name}' finished without returning", **where)
            return result
        return ev


def _exp(x: float, where: dict) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _log(x: float, where: dict) -> float:
    if x <= 0:
        raise DomainError(f"log of non-positive value {x!r}", **where)
    return math.log(x)


def _sqrt(x: float, where: dict) -> float:
    if x < 0:
        raise DomainError(f"sqrt of negative value {x!r}", **where)
    return math.sqrt(x)


def _trig(fn):
    def ev(x: float, where: dict) -> float:
        try:
            return fn(x)
        except ValueError:
            raise DomainError(f"{fn.__name__} of {x!r}", **where) from None
    return ev


def _pow(a: float, b: float, where: dict) -> float:
    try:
        return math.pow(a, b)
    except ValueError:
        raise DomainError(f"pow({a!r}, {b!r}) is undefined", **where) from None
    except OverflowError:
        negative = a < 0 and float(b).is_integer() and int(b) % 2 == 1
        return -math.inf if negative else math.inf


_UNARY_INTRINSICS = {
    "sin": _trig(math.sin),
    "cos": _trig(math.cos),
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
}


def call(program: Program, fname: str, args, max_steps: Optional[int] = None) -> Value:
    """Evaluate fname once on a fresh interpreter."""
    return Interpreter(program, max_steps=max_steps).call(fname, args)


def call_counted(program: Program, fname: str, args, stats: EvalStats,
                 max_steps: Optional[int] = None) -> Value:
    """As call, also counting one function evaluation and its ops into stats."""
    return Interpreter(program, max_steps=max_steps).call_counted(fname, args, stats)
