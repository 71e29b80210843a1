import asyncio
import atexit
import math
import multiprocessing as mp
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from common.models import EvaluateResponse, GradientResponse, NumDiffConfig, SourceResponse
from common.utils.logging import setup_logging
from difflang.errors import DiffLangError, ParseError, TypeMismatch
from difflang.evaluator import EvalStats, Interpreter
from difflang.forward_mode import DiffRequest, differentiate
from difflang.lang.nodes import FuncDef, Program, Type
from difflang.lang.parser import parse
from difflang.lang.printer import print_function
from difflang.numdiff import expand_slots, fd_gradient, interpreter_objective
from difflang.reverse_mode import GradRequest, evaluate_gradient, gradient

logger = setup_logging(__name__)

# Transformations and interpreter runs are CPU-bound; keep them off the event loop
thread_pool = ThreadPoolExecutor(max_workers=max(2, min(mp.cpu_count(), 8)))

atexit.register(lambda: thread_pool.shutdown(wait=False))

# --- sources ---

def read_source(path: str) -> str:
    """Contents of path; `-` reads standard input."""
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def load_program(path: str) -> Program:
    """Read and parse a `.dl` file."""
    source = read_source(path)
    try:
        program = parse(source)
        logger.debug(f"Parsed {len(program.functions)} function(s) from {path}")
        return program
    except DiffLangError as e:
        logger.error(f"Error parsing {path}: {e.message}")
        raise


def find_function(program: Program, name: Optional[str]) -> FuncDef:
    """Named function, or the last one in the program when no name is given."""
    if not program.functions:
        raise DiffLangError("program defines no functions")
    if name is None:
        return program.functions[-1]
    func = program.get(name)
    if func is None:
        known = ", ".join(f.name for f in program.functions)
        raise DiffLangError(f"no function named '{name}' (defined: {known})")
    return func


# --- points ---

_POINT_TOKEN = re.compile(r"\s*(?:(?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[=,\[\]]))")


def _tokens(text: str) -> List[str]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _POINT_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"cannot read point at '{text[pos:pos + 10]}'", 1, pos + 1)
        out.append(m.group(m.lastgroup))
        pos = m.end()
    return out


def parse_point(text: str, func: Optional[FuncDef] = None) -> Dict[str, Any]:
    """`p=[1,2,3],dim=3` -> {"p": [1.0, 2.0, 3.0], "dim": 3}.

    With func, values are checked and converted against its parameter types.
    """
    toks = _tokens(text)
    point: Dict[str, Any] = {}
    i = 0

    def take(expected: Optional[str] = None) -> str:
        nonlocal i
        if i >= len(toks):
            raise ParseError(f"point ends early; expected {expected or 'a value'}")
        tok = toks[i]
        if expected is not None and tok != expected:
            raise ParseError(f"expected '{expected}' in point, got '{tok}'")
        i += 1
        return tok

    while i < len(toks):
        name = take()
        if not re.match(r"[A-Za-z_]", name):
            raise ParseError(f"expected a parameter name in point, got '{name}'")
        take("=")
        if i < len(toks) and toks[i] == "[":
            take("[")
            values = []
            while toks[i:i + 1] != ["]"]:
                value = take("]" if i >= len(toks) else None)
                try:
                    values.append(float(value))
                except ValueError:
                    raise ParseError(f"'{name}' needs numbers, got '{value}'")
                if toks[i:i + 1] == [","]:
                    take(",")
            take("]")
            point[name] = values
        else:
            point[name] = take()
        if i < len(toks):
            take(",")

    for name, value in point.items():
        if isinstance(value, str):
            try:
                point[name] = int(value) if re.fullmatch(r"[-+]?\d+", value) else float(value)
            except ValueError:
                raise ParseError(f"'{name}' needs a number, got '{value}'")
    return coerce_args(func, point) if func is not None else point


def coerce_args(func: FuncDef, point: Dict[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for name, value in point.items():
        p = func.param(name)
        if p is None:
            raise TypeMismatch(f"'{func.name}' has no parameter '{name}'")
        if p.type == Type.DOUBLE_ARRAY:
            if not isinstance(value, list):
                raise TypeMismatch(f"'{name}' is double*; write it as [v1, v2, ...]")
            out[name] = [float(v) for v in value]
        elif p.type == Type.INT:
            if not isinstance(value, int):
                raise TypeMismatch(f"'{name}' is int, got {value!r}")
            out[name] = value
        else:
            if isinstance(value, list):
                raise TypeMismatch(f"'{name}' is double, got an array")
            out[name] = float(value)
    return out


# --- output ---

def format_number(value: float) -> str:
    """Shortest form that reads back to the same double; integral values drop the `.0`."""
    value = float(value)
    if value == 0:
        return "-0" if math.copysign(1.0, value) < 0 else "0"
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_values(values: Sequence[float]) -> str:
    return "[" + ", ".join(format_number(v) for v in values) + "]"


def format_point(point: Dict[str, Any]) -> str:
    parts = []
    for name, value in point.items():
        text = format_values(value) if isinstance(value, list) else format_number(value)
        parts.append(f"{name}={text}")
    return ",".join(parts)


# --- operations shared by the CLI and the HTTP service ---

def derive_source(program: Program, func: FuncDef, wrt: str, mode: str = "forward") -> SourceResponse:
    """Forward derivative wrt one name (or `p[k]` slot), or the reverse gradient wrt a comma list."""
    if mode == "forward":
        derived = differentiate(DiffRequest.from_text(func, wrt)).derivative
    else:
        names = [w for w in wrt.split(",") if w.strip()] if wrt else None
        derived = gradient(GradRequest.from_names(func, names)).gradient
    return SourceResponse(function=derived.name, source=print_function(derived))


def compute_gradient(program: Program, func: FuncDef, wrt: Optional[Sequence[str]], point: Dict[str, Any],
                     backend: str = "ad", eps: Optional[float] = None) -> GradientResponse:
    """Gradient at point by the reverse-mode code (`ad`) or central differences (`fd`)."""
    request = GradRequest.from_names(func, wrt)
    stats = EvalStats()
    if backend == "ad":
        grad = gradient(request)
        values = evaluate_gradient(grad, point, stats=stats)
        slots = grad.slot_labels(point)
    else:
        slot_list = expand_slots(func, request.wrt, point)
        f = interpreter_objective(Interpreter(program), func.name, stats)
        cfg = NumDiffConfig(eps=eps) if eps is not None else NumDiffConfig()
        values = fd_gradient(f, point, slot_list, cfg, stats)
        slots = [str(s.arg) if s.index is None else f"{s.arg}[{s.index}]" for s in slot_list]
    return GradientResponse(function=func.name, slots=slots, values=values,
                            func_evals=stats.func_evals, scalar_ops=stats.total_ops)


def evaluate(program: Program, func: FuncDef, point: Dict[str, Any]) -> EvaluateResponse:
    stats = EvalStats()
    value = Interpreter(program).call_counted(func.name, point, stats)
    return EvaluateResponse(function=func.name, value=value, scalar_ops=stats.total_ops)


# --- async offloading ---

async def run_in_pool(fn: Callable[..., Any], *args: Any) -> Any:
    """Run fn(*args) on the shared thread pool without blocking the event loop."""
    def _run_in_thread() -> Any:
        try:
            return fn(*args)
        except DiffLangError as e:
            logger.info(f"{fn.__name__} rejected input: {e.message}")
            raise
        except Exception as e:
            logger.error(f"Error in {fn.__name__}: {e}")
            raise

    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(thread_pool, _run_in_thread)
