"""Timing and accuracy harness comparing rev-AD, fwd-AD and ND gradients.

Scaling runs fill inputs deterministically (arrays named `x` get
0.5 + i/dim, other arrays 1 + i/dim, doubles 1, ints dim), check every
backend against the closed form once, then time `reps` gradient evaluations
and report the median. Timing is single-threaded.
"""
import platform
import time
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from common.models import Backend, BenchReport, BenchRow, ModelEntry, NumDiffConfig, ParamSpec
from common.utils.config import config
from common.utils.diff_utils import format_point
from common.utils.logging import setup_logging
from difflang.errors import UnknownParameter
from difflang.evaluator import EvalStats, Interpreter
from difflang.forward_mode import DiffRequest, differentiate
from difflang.lang.nodes import FuncDef, Program, Type
from difflang.lang.printer import print_function
from difflang.models import domain_midpoint, get_model, load_function, reference_gradient, relative_close
from difflang.numdiff import expand_slots, fd_gradient, interpreter_objective
from difflang.reverse_mode import GradRequest, evaluate_gradient, gradient

logger = setup_logging(__name__)

GradientFn = Callable[[EvalStats], List[float]]


def environment() -> str:
    return f"{platform.python_implementation()} {platform.python_version()} on {platform.platform()} ({platform.machine()})"


def filler(entry: ModelEntry, dim: int) -> Dict[str, Any]:
    args: Dict[str, Any] = {}
    for p in entry.params:
        if p.kind == "double*":
            start = 0.5 if p.name == "x" else 1.0
            args[p.name] = [start + i / dim for i in range(dim)]
        elif p.kind == "int":
            args[p.name] = dim
        else:
            args[p.name] = 1.0
    return args


def scaling_wrt(entry: ModelEntry) -> List[str]:
    """`p` when the model has it, otherwise every array parameter."""
    if "p" in entry.array_params:
        return ["p"]
    if not entry.array_params:
        raise UnknownParameter(f"model '{entry.name}' has no array parameter to scale")
    return entry.array_params


def generic_entry(func: FuncDef, dim: int = 5) -> ModelEntry:
    """Corpus-style entry for a function outside the corpus; samples doubles in [0.5, 1.5]."""
    kinds = {Type.DOUBLE: "double", Type.INT: "int", Type.DOUBLE_ARRAY: "double*"}
    params = [
        ParamSpec(name=p.name, kind=kinds[p.type], low=0.5, high=1.5, value=dim if p.type == Type.INT else None)
        for p in func.params
    ]
    return ModelEntry(name=func.name, source=print_function(func), params=params)


class GradientBackends:
    """Gradient closures for one function and wrt list, transformations done once."""

    def __init__(self, func: FuncDef, wrt: Sequence[str], eps: Optional[float] = None):
        self.func = func
        self.wrt = list(wrt)
        self.nd_config = NumDiffConfig(eps=eps) if eps is not None else NumDiffConfig()
        self._grad = None
        self._forward: Dict[tuple, Any] = {}

    def build(self, backend: Backend, args: Mapping[str, Any]) -> GradientFn:
        backend = Backend(backend)
        if backend == Backend.REV_AD:
            if self._grad is None:
                self._grad = gradient(GradRequest(self.func, tuple(self.wrt)))
            grad = self._grad
            interp = Interpreter(grad.program())
            return lambda stats: evaluate_gradient(grad, args, interp, stats)

        slots = expand_slots(self.func, self.wrt, args)
        if backend == Backend.FWD_AD:
            derivatives = []
            for slot in slots:
                key = (slot.arg, slot.index)
                if key not in self._forward:
                    self._forward[key] = differentiate(DiffRequest(self.func, slot.arg, slot.index)).derivative
                derivatives.append(self._forward[key])
            interp = Interpreter(Program((self.func,) + tuple(derivatives)))
            return lambda stats: [interp.call_counted(d.name, args, stats) for d in derivatives]

        interp = Interpreter(Program((self.func,)))
        cfg = self.nd_config

        def nd(stats: EvalStats) -> List[float]:
            f = interpreter_objective(interp, self.func.name, stats)
            return fd_gradient(f, args, slots, cfg, stats)
        return nd


def _median_ns(fn: GradientFn, reps: int) -> float:
    samples = []
    for _ in range(reps):
        start = time.perf_counter_ns()
        fn(EvalStats())
        samples.append(time.perf_counter_ns() - start)
    return float(np.median(samples))


def _tolerance(backend: Backend) -> float:
    if backend == Backend.ND:
        return config["bench"]["nd_tolerance"]
    return config["bench"]["ad_tolerance"]


def _compare(values: Sequence[float], reference: Sequence[float], tol: float) -> tuple:
    if len(values) != len(reference):
        return float("inf"), False
    err = max((abs(a - b) for a, b in zip(values, reference)), default=0.0)
    return err, all(relative_close(a, b, tol) for a, b in zip(values, reference))


def measure(backends: GradientBackends, backend: Backend, args: Dict[str, Any], reference: Sequence[float],
            model: str, dim: int, reps: int, timing: bool = True, point: Optional[str] = None,
            tolerance: Optional[float] = None) -> BenchRow:
    """One report row: validate once (counting ops), then time."""
    backend = Backend(backend)
    fn = backends.build(backend, args)
    stats = EvalStats()
    values = fn(stats)
    err, valid = _compare(values, reference, tolerance if tolerance is not None else _tolerance(backend))
    if not valid:
        logger.warning(f"{model} dim={dim} {backend.value}: gradient disagrees with reference (max abs err {err:.3g})")
    median = _median_ns(fn, reps) if timing else None
    row = BenchRow(
        model=model, dim=dim, backend=backend, median_ns=median,
        scalar_ops=stats.total_ops, func_evals=stats.func_evals,
        max_abs_err=err, valid=valid, point=point,
    )
    logger.info(f"{model} dim={dim} {backend.value}: ops={row.scalar_ops} evals={row.func_evals} median_ns={median}")
    return row


def run_scaling(model: str, dims: Iterable[int], backends: Sequence[Backend] = (Backend.REV_AD, Backend.ND),
                reps: Optional[int] = None, timing: bool = True, eps: Optional[float] = None) -> BenchReport:
    """Gradient cost of `model` over increasing input dimension, one row per (dim, backend)."""
    reps = reps if reps is not None else config["bench"]["reps"]
    dims = list(dims)
    if not dims or any(d < 1 for d in dims) or dims != sorted(dims):
        raise ValueError(f"dims must be positive and ascending, got {dims}")
    entry = get_model(model)
    wrt = scaling_wrt(entry)
    harness = GradientBackends(load_function(model), wrt, eps)

    rows = []
    for dim in dims:
        args = filler(entry, dim)
        reference = reference_gradient(model, args, wrt)
        for backend in backends:
            rows.append(measure(harness, backend, args, reference, model, dim, reps, timing))
    return BenchReport(kind="scaling", rows=rows, environment=environment(), repetitions=reps)


def run_accuracy(model: str, points: Sequence[Mapping[str, Any]], wrt: Optional[Sequence[str]] = None,
                 backends: Sequence[Backend] = (Backend.FWD_AD, Backend.REV_AD, Backend.ND),
                 eps: Optional[float] = None) -> BenchReport:
    """Each backend against the closed form at each point; dim is the slot count."""
    entry = get_model(model)
    wrt = list(wrt) if wrt else entry.array_params + entry.scalar_params
    harness = GradientBackends(load_function(model), wrt, eps)

    rows = []
    for point in points:
        args = dict(point)
        reference = reference_gradient(model, args, wrt)
        label = format_point(args)
        for backend in backends:
            rows.append(measure(harness, backend, args, reference, model, len(reference), reps=0,
                                timing=False, point=label))
    return BenchReport(kind="accuracy", rows=rows, environment=environment(), repetitions=config["bench"]["reps"])


def run_primitives(models: Optional[Sequence[str]] = None,
                   backends: Sequence[Backend] = (Backend.FWD_AD, Backend.REV_AD, Backend.ND),
                   reps: Optional[int] = None, timing: bool = True, eps: Optional[float] = None) -> BenchReport:
    """Gradient cost of fixed-dimension models wrt every double, at the middle of their domains.

    One row per (model, backend); dim is the number of gradient slots.
    """
    reps = reps if reps is not None else config["bench"]["reps"]
    models = list(models) if models else list(config["bench"]["primitives"])

    rows = []
    for model in models:
        entry = get_model(model)
        if entry.array_params:
            raise UnknownParameter(f"model '{model}' takes arrays; use a scaling run")
        wrt = entry.scalar_params
        args = domain_midpoint(entry)
        reference = reference_gradient(model, args, wrt)
        harness = GradientBackends(load_function(model), wrt, eps)
        label = format_point(args)
        for backend in backends:
            rows.append(measure(harness, backend, args, reference, model, len(reference), reps, timing, point=label))
    return BenchReport(kind="primitives", rows=rows, environment=environment(), repetitions=reps)


def run_check(func: FuncDef, points: Sequence[Mapping[str, Any]], wrt: Optional[Sequence[str]] = None,
              eps: Optional[float] = None, tolerance: Optional[float] = None) -> BenchReport:
    """AD against central differences where no closed form exists.

    Rows carry |AD - ND| as max_abs_err; valid means relative agreement within tolerance.
    """
    eps = eps if eps is not None else config["check"]["eps"]
    tolerance = tolerance if tolerance is not None else config["check"]["tolerance"]
    wrt = list(wrt) if wrt else list(GradRequest.from_names(func).wrt)
    harness = GradientBackends(func, wrt, eps)

    rows = []
    for point in points:
        args = dict(point)
        nd = harness.build(Backend.ND, args)(EvalStats())
        label = format_point(args)
        for backend in (Backend.FWD_AD, Backend.REV_AD):
            rows.append(measure(harness, backend, args, nd, func.name, len(nd), reps=0,
                                timing=False, point=label, tolerance=tolerance))
    return BenchReport(kind="accuracy", rows=rows, environment=environment(), repetitions=config["bench"]["reps"])


def op_counts(model: str, dim: int, wrt: Optional[Sequence[str]] = None) -> Dict[str, EvalStats]:
    """Interpreter costs at the filler point: the original, one forward derivative, one reverse gradient."""
    entry = get_model(model)
    func = load_function(model)
    wrt = list(wrt) if wrt else entry.array_params + entry.scalar_params
    args = filler(entry, dim)

    original = EvalStats()
    Interpreter(Program((func,))).call_counted(func.name, args, original)

    first = expand_slots(func, wrt, args)[0]
    derivative = differentiate(DiffRequest(func, first.arg, first.index)).derivative
    forward = EvalStats()
    Interpreter(Program((func, derivative))).call_counted(derivative.name, args, forward)

    reverse = EvalStats()
    evaluate_gradient(gradient(GradRequest(func, tuple(wrt))), args, stats=reverse)
    return {"original": original, "forward": forward, "reverse": reverse}
