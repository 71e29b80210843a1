"""Least-squares histogram fitting driven by AD or finite-difference gradients.

The objective is itself a DSL function, built by inlining the model body into
a loop over bins, so both backends differentiate the same code:

    sum over bins b of (model(center_b; theta) - normalized_count_b)^2
"""
import math
from typing import Dict, List, Optional

import numpy as np

from common.models import FitBackend, FitOptions, FitProblem, FitResult, Histogram, NumDiffConfig
from common.utils.logging import setup_logging
from difflang.derivatives import ZERO
from difflang.errors import DomainError, UnsupportedConstruct
from difflang.evaluator import EvalStats, Interpreter
from difflang.lang.nodes import (
    Binary,
    CompoundAssign,
    Decl,
    For,
    FuncDef,
    Index,
    Literal,
    Param,
    Program,
    Return,
    Type,
    VarRef,
    substitute,
)
from difflang.lang.parser import parse
from difflang.lang.printer import print_function
from difflang.numdiff import Slot, fd_gradient, interpreter_objective
from difflang.reverse_mode import GradRequest, evaluate_gradient, gradient

logger = setup_logging(__name__)

CENTERS = "fit_centers"
TARGET = "fit_target"
BINS = "fit_bins"


def synthesize_histogram(mu: float = 0.0, sigma: float = 1.0, n_samples: int = 100_000, bins: int = 100,
                         seed: int = 0, lo: float = -5.0, hi: float = 5.0) -> Histogram:
    """Bin n_samples Gaussian draws over [lo, hi].

    Uniforms come from numpy's PCG64 and are turned into normals with the
    Box-Muller transform, so a seed fixes the histogram on every platform.
    """
    if bins < 1 or n_samples < 1:
        raise ValueError("bins and n_samples must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = (n_samples + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])[:n_samples]
    counts, edges = np.histogram(mu + sigma * z, bins=bins, range=(lo, hi))
    return Histogram(edges=edges.tolist(), counts=counts.astype(float).tolist())


def build_objective(model: FuncDef, fitted: List[str]) -> FuncDef:
    """`<model>_objective(fit_centers, fit_target, fit_bins, theta...)`.

    The model body must be straight-line: double declarations then a return.
    """
    *decls, ret = model.body
    if not isinstance(ret, Return) or not all(isinstance(s, Decl) and s.type == Type.DOUBLE for s in decls):
        raise UnsupportedConstruct(f"cannot inline '{model.name}': body must be declarations and one return")

    x = VarRef("x", Type.DOUBLE)
    b = VarRef("fit_b", Type.INT)
    x_at = Index(CENTERS, b)
    residual = VarRef("fit_r", Type.DOUBLE)
    total = VarRef("fit_total", Type.DOUBLE)

    inner = [Decl(s.name, s.type, substitute(s.init, x, x_at) if s.init is not None else None) for s in decls]
    inner.append(Decl(residual.name, Type.DOUBLE,
                      Binary("-", substitute(ret.value, x, x_at), Index(TARGET, b), Type.DOUBLE)))
    inner.append(CompoundAssign("+=", total, Binary("*", residual, residual, Type.DOUBLE)))

    body = (
        Decl(total.name, Type.DOUBLE, ZERO),
        For(b.name, Literal(0, Type.INT), Binary("<", b, VarRef(BINS, Type.INT), Type.INT), tuple(inner)),
        Return(total),
    )
    by_name = {p.name: p for p in model.params}
    params = (
        Param(CENTERS, Type.DOUBLE_ARRAY),
        Param(TARGET, Type.DOUBLE_ARRAY),
        Param(BINS, Type.INT),
    ) + tuple(Param(name, Type.DOUBLE) for name in fitted if name in by_name)
    return FuncDef(f"{model.name}_objective", params, body)


class Fitter:
    """One fit run: objective, backend gradient and counters."""

    def __init__(self, problem: FitProblem, backend: FitBackend, opts: FitOptions):
        self.problem = problem
        self.backend = backend
        self.opts = opts
        self.names = problem.fitted_params

        model = parse(problem.model.source).get(problem.model.name)
        self.objective = build_objective(model, self.names)
        program = Program((self.objective,))
        self.grad_func = None
        if backend == FitBackend.AD:
            self.grad_func = gradient(GradRequest(self.objective, tuple(self.names)))
            program = program.with_function(self.grad_func.gradient)
        self.interp = Interpreter(program)

        hist = problem.histogram
        self.base: Dict[str, object] = {CENTERS: hist.centers, TARGET: hist.normalized(), BINS: hist.bins}
        self.grad_stats = EvalStats()
        self.search_stats = EvalStats()
        self.grad_evals = 0

    def args(self, theta: np.ndarray) -> Dict[str, object]:
        args = dict(self.base)
        args.update({name: float(v) for name, v in zip(self.names, theta)})
        return args

    def value(self, theta: np.ndarray) -> float:
        self.search_stats.func_evals += 1
        try:
            v = self.interp.call(self.objective.name, self.args(theta), self.search_stats)
        except DomainError:
            return math.inf
        return v if v == v else math.inf

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        self.grad_evals += 1
        args = self.args(theta)
        if self.grad_func is not None:
            g = evaluate_gradient(self.grad_func, args, self.interp, self.grad_stats)
        else:
            f = interpreter_objective(self.interp, self.objective.name, self.grad_stats)
            g = fd_gradient(f, args, [Slot(name) for name in self.names],
                            NumDiffConfig(eps=self.opts.fd_eps), self.grad_stats)
        return np.asarray(g, dtype=float)

    def run(self) -> FitResult:
        opts = self.opts
        theta = np.asarray(self.problem.initial, dtype=float)
        f = self.value(theta)
        if math.isinf(f):
            raise DomainError(f"initial parameters {list(theta)} are outside the model domain")
        history = [f]
        step = opts.initial_step
        converged = False
        gnorm = math.inf

        for _ in range(opts.max_iter):
            g = self.gradient(theta)
            gnorm = float(np.linalg.norm(g))
            if gnorm <= opts.gtol:
                converged = True
                break
            # Armijo backtracking along -g
            t = step
            accepted = False
            fallback = None
            while t >= opts.min_step:
                candidate = theta - t * g
                fc = self.value(candidate)
                if fc <= f - opts.armijo_c * t * gnorm * gnorm:
                    accepted = True
                    break
                if fallback is None and fc < f:
                    fallback = (t, candidate, fc)
                t *= opts.shrink
            if not accepted and fallback is not None:
                # near the minimum rounding swamps the sufficient-decrease margin
                t, candidate, fc = fallback
                accepted = True
                logger.debug(f"Armijo failed at |grad| = {gnorm:.3g}; taking the largest decreasing step {t:.3g}")
            if not accepted:
                logger.warning(f"Line search stalled at objective {f:.6g}, |grad| = {gnorm:.3g}")
                break
            theta, f = candidate, fc
            history.append(f)
            step = min(2.0 * t, opts.max_step)

        if not converged:
            logger.warning(f"Fit did not converge after {self.grad_evals} gradients, |grad| = {gnorm:.3g}")
        logger.info(f"Fit finished: {self.grad_evals} gradients, objective {f:.6g}, converged={converged}")
        return FitResult(
            params=theta.tolist(),
            objective=f,
            gradient_norm=gnorm,
            iterations=self.grad_evals,
            grad_evals=self.grad_evals,
            func_evals=self.grad_stats.func_evals,
            line_search_evals=self.search_stats.func_evals,
            scalar_ops=self.grad_stats.total_ops,
            converged=converged,
            backend=self.backend,
            history=history,
        )


def fit(problem: FitProblem, backend: FitBackend = FitBackend.AD, opts: Optional[FitOptions] = None) -> FitResult:
    """Gradient descent with backtracking until |grad| <= gtol or max_iter gradients."""
    return Fitter(problem, FitBackend(backend), opts or FitOptions()).run()


def objective_source(problem: FitProblem) -> str:
    model = parse(problem.model.source).get(problem.model.name)
    return print_function(build_objective(model, problem.fitted_params))
