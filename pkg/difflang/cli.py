"""`difflang` command line: differentiate, grad, eval, check, bench and fit.

Exit codes: 0 success, 1 a difflang/domain error or failed check, 2 usage error.
"""
import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from common.models import Backend, BenchReport, CliConfig, FitBackend, FitOptions, FitProblem, Histogram
from common.utils.config import config
from common.utils.diff_utils import (
    compute_gradient,
    derive_source,
    evaluate,
    find_function,
    format_number,
    format_values,
    load_program,
    parse_point,
)
from common.utils.logging import setup_logging
from difflang.bench import generic_entry, run_accuracy, run_check, run_primitives, run_scaling
from difflang.errors import DiffLangError
from difflang.fitting import fit, synthesize_histogram
from difflang.lang.nodes import FuncDef, Program
from difflang.models import MODEL_NAMES, get_model, load_function, load_program as load_model_program, sample_points

logger = setup_logging(__name__)


class UsageError(Exception):
    pass


def _color(text: str, code: str) -> str:
    if os.environ.get("DIFFLANG_COLOR", "0") == "1":
        return f"\033[{code}m{text}\033[0m"
    return text


def _list(text: Optional[str]) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _ints(text: str) -> List[int]:
    try:
        return [int(t) for t in _list(text)]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got '{text}'")


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in _list(text)]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="difflang", description="Source-transformation AD for a small C-like language")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, formats=("text", "json")) -> None:
        p.add_argument("--format", choices=formats, default="text")
        p.add_argument("-o", "--output", help="write to this file instead of stdout")

    p = sub.add_parser("differentiate", help="print derivative source")
    p.add_argument("-f", "--file", required=True, help="`.dl` source, `-` for stdin")
    p.add_argument("--fn", help="function name (default: last in file)")
    p.add_argument("--wrt", required=True, help="parameter, `p[k]` slot, or comma list with --mode reverse")
    p.add_argument("--mode", choices=("forward", "reverse"), default="forward")
    common(p)

    p = sub.add_parser("grad", help="print gradient source, or evaluate it with --at")
    p.add_argument("-f", "--file", required=True)
    p.add_argument("--fn")
    p.add_argument("--wrt", help="comma list (default: every double and double* parameter)")
    p.add_argument("--backend", choices=("ad", "fd"), default="ad")
    p.add_argument("--at", help="point, e.g. \"p=[1,2,3],dim=3\"")
    p.add_argument("--eps", type=float)
    common(p)

    p = sub.add_parser("eval", help="run a function at a point")
    p.add_argument("-f", "--file", required=True)
    p.add_argument("--fn")
    p.add_argument("--at", default="")
    common(p)

    p = sub.add_parser("check", help="AD against finite differences on random points")
    p.add_argument("-f", "--file", help="source file (default: the corpus model named by --fn)")
    p.add_argument("--fn", required=True)
    p.add_argument("--wrt")
    p.add_argument("--points", type=int, default=config["check"]["points"])
    p.add_argument("--dim", type=int, default=5, help="array length for functions outside the corpus")
    p.add_argument("--seed", type=int, default=config["check"]["seed"])
    p.add_argument("--eps", type=float)
    common(p, ("text", "json", "csv"))

    p = sub.add_parser("bench", help="scaling, accuracy or fixed-dimension report")
    p.add_argument("--model", help=f"one of {', '.join(MODEL_NAMES)} (default sum; primitives: the configured list)")
    p.add_argument("--kind", choices=("scaling", "accuracy", "primitives"), default="scaling")
    p.add_argument("--dims", help="comma list (default from config)")
    p.add_argument("--full", action="store_true", help="the full dimension range")
    p.add_argument("--backends", help="comma list of fwd-AD, rev-AD, ND")
    p.add_argument("--reps", type=int, default=config["bench"]["reps"])
    p.add_argument("--no-timing", action="store_true", help="skip timing; output is then deterministic")
    p.add_argument("--points", type=int, default=10, help="random points for --kind accuracy")
    p.add_argument("--at", help="single accuracy point instead of random ones")
    p.add_argument("--wrt")
    p.add_argument("--seed", type=int, default=config["check"]["seed"])
    p.add_argument("--eps", type=float)
    common(p, ("text", "json", "csv"))

    p = sub.add_parser("fit", help="least-squares fit of a model to a histogram")
    p.add_argument("--model", default="gaus")
    p.add_argument("--hist", help="histogram CSV (lo,hi,count); default: synthesize one")
    p.add_argument("--init", help="comma list of initial parameter values")
    p.add_argument("--backend", choices=("ad", "nd"), default="ad")
    p.add_argument("--seed", type=int, default=config["check"]["seed"])
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--max-iter", type=int)
    common(p)
    return parser


def to_config(args: argparse.Namespace) -> CliConfig:
    try:
        return CliConfig(
            command=args.command,
            input_path=getattr(args, "file", None) or getattr(args, "hist", None),
            model=getattr(args, "model", None),
            function=getattr(args, "fn", None),
            wrt=_list(getattr(args, "wrt", None)),
            backend=getattr(args, "backend", None),
            output_path=args.output,
            format=args.format,
            seed=getattr(args, "seed", config["check"]["seed"]),
            eps=getattr(args, "eps", None),
            dims=_ints(getattr(args, "dims", None) or ""),
        )
    except ValidationError as e:
        raise UsageError(str(e))


# --- commands ---
# Each returns (output text, exit code).

def cmd_differentiate(args: argparse.Namespace, cfg: CliConfig) -> Tuple[str, int]:
    program = load_program(cfg.input_path)
    func = find_function(program, cfg.function)
    derived = derive_source(program, func, args.wrt, args.mode)
    if cfg.format == "json":
        return derived.model_dump_json(indent=2) + "\n", 0
    return derived.source, 0


def cmd_grad(args: argparse.Namespace, cfg: CliConfig) -> Tuple[str, int]:
    program = load_program(cfg.input_path)
    func = find_function(program, cfg.function)
    if args.at is None:
        if cfg.backend == "fd":
            raise UsageError("--backend fd needs --at")
        return cmd_differentiate_reverse(program, func, cfg)
    point = parse_point(args.at, func)
    result = compute_gradient(program, func, cfg.wrt or None, point, cfg.backend, cfg.eps)
    if cfg.format == "json":
        return result.model_dump_json(indent=2) + "\n", 0
    return format_values(result.values) + "\n", 0


def cmd_differentiate_reverse(program: Program, func: FuncDef, cfg: CliConfig) -> Tuple[str, int]:
    derived = derive_source(program, func, ",".join(cfg.wrt), "reverse")
    if cfg.format == "json":
        return derived.model_dump_json(indent=2) + "\n", 0
    return derived.source, 0


def cmd_eval(args: argparse.Namespace, cfg: CliConfig) -> Tuple[str, int]:
    program = load_program(cfg.input_path)
    func = find_function(program, cfg.function)
    result = evaluate(program, func, parse_point(args.at, func))
    if cfg.format == "json":
        return result.model_dump_json(indent=2) + "\n", 0
    return format_number(result.value) + "\n", 0


def _render(report: BenchReport, fmt: str) -> str:
    if fmt == "json":
        return report.to_json() + "\n"
    if fmt == "csv":
        return report.to_csv()
    lines = [f"{'model':<16} {'dim':>6} {'backend':<7} {'median_ns':>14} {'ops':>12} {'evals':>7} {'max_abs_err':>12} valid"]
    for row in report.rows:
        median = f"{row.median_ns:.0f}" if row.median_ns is not None else "-"
        lines.append(
            f"{row.model:<16} {row.dim:>6} {row.backend.value:<7} {median:>14} {row.scalar_ops:>12} "
            f"{row.func_evals:>7} {row.max_abs_err:>12.3g} {'yes' if row.valid else 'NO'}"
            + (f"  {row.point}" if row.point else "")
        )
    if report.kind in ("scaling", "primitives"):
        for model in sorted({r.model for r in report.rows}):
            for dim, s in report.speedups(model).items():
                lines.append(f"speedup ND/rev-AD {model} dim={dim}: {s:.2f}")
    return "\n".join(lines) + "\n"


def cmd_check(args: argparse.Namespace, cfg: CliConfig) -> Tuple[str, int]:
    if cfg.input_path:
        program = load_program(cfg.input_path)
        func = find_function(program, cfg.function)
        entry = generic_entry(func, args.dim)
    else:
        entry = get_model(cfg.function)
        func = load_function(cfg.function)
    points = sample_points(entry, args.points, cfg.seed, args.dim if cfg.input_path else None)
    report = run_check(func, points, cfg.wrt or None, cfg.eps)
    failed = sum(1 for r in report.rows if not r.valid)
    if cfg.format != "text":
        return _render(report, cfg.format), 1 if failed else 0
    worst = max((r.max_abs_err for r in report.rows), default=0.0)
    status = "ok" if not failed else _color("FAILED", "31")
    text = (f"{func.name}: {len(points)} points, {len(report.rows)} comparisons, "
            f"{failed} disagreements, max |AD - FD| = {worst:.3g}: {status}\n")
    return text, 1 if failed else 0


def cmd_bench(args: argparse.Namespace, cfg: CliConfig) -> Tuple[str, int]:
    model = cfg.model or "sum"
    if args.backends:
        try:
            backends = [Backend(b) for b in _list(args.backends)]
        except ValueError:
            raise UsageError(f"--backends takes {', '.join(b.value for b in Backend)}")
    else:
        backends = None
    if args.kind == "primitives":
        report = run_primitives([cfg.model] if cfg.model else None,
                                backends or (Backend.FWD_AD, Backend.REV_AD, Backend.ND), args.reps,
                                timing=not args.no_timing, eps=cfg.eps)
    elif args.kind == "scaling":
        dims = cfg.dims or (config["bench"]["full_dims"] if args.full else config["bench"]["dims"])
        report = run_scaling(model, dims, backends or (Backend.REV_AD, Backend.ND), args.reps,
                             timing=not args.no_timing, eps=cfg.eps)
    else:
        entry = get_model(model)
        if args.at:
            points = [parse_point(args.at, load_model_program(model).get(entry.name))]
        else:
            points = sample_points(entry, args.points, cfg.seed)
        report = run_accuracy(model, points, cfg.wrt or None,
                              backends or (Backend.FWD_AD, Backend.REV_AD, Backend.ND), cfg.eps)
    return _render(report, cfg.format), 0


def cmd_fit(args: argparse.Namespace, cfg: CliConfig) -> Tuple[str, int]:
    entry = get_model(cfg.model)
    if cfg.input_path:
        histogram = Histogram.from_csv(Path(cfg.input_path).read_text())
    else:
        histogram = synthesize_histogram(args.mu, args.sigma, args.samples, args.bins, cfg.seed)
    fitted = [p for p in entry.params if p.kind == "double" and p.name != "x"]
    if args.init:
        initial = _floats(args.init)
    else:
        initial = [(p.low + p.high) / 2.0 for p in fitted]
    problem = FitProblem(model=entry, histogram=histogram, initial=initial)

    opts = FitOptions(max_iter=args.max_iter) if args.max_iter else FitOptions()
    result = fit(problem, FitBackend(cfg.backend), opts)
    if cfg.format == "json":
        return result.model_dump_json(indent=2) + "\n", 0 if result.converged else 1
    lines = [f"{p.name} = {format_number(v)}" for p, v in zip(fitted, result.params)]
    lines.append(f"objective = {result.objective:.6g}, |grad| = {result.gradient_norm:.3g}")
    lines.append(f"gradients = {result.grad_evals}, function evals = {result.func_evals} "
                 f"(+{result.line_search_evals} line search), converged = {result.converged}")
    return "\n".join(lines) + "\n", 0 if result.converged else 1


COMMANDS = {
    "differentiate": cmd_differentiate,
    "grad": cmd_grad,
    "eval": cmd_eval,
    "check": cmd_check,
    "bench": cmd_bench,
    "fit": cmd_fit,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    filename = getattr(args, "file", None) or "<input>"
    try:
        cfg = to_config(args)
        output, code = COMMANDS[args.command](args, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"difflang {args.command}: {_color('error', '31')}: {e}", file=sys.stderr)
        return 2
    except DiffLangError as e:
        print(e.diagnostic("<stdin>" if filename == "-" else filename).replace(
            f": {e.severity}:", f": {_color(e.severity, '31')}:", 1), file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        # missing files, malformed CSV and model validation failures
        print(f"difflang {args.command}: {_color('error', '31')}: {e}", file=sys.stderr)
        return 1

    if cfg.output_path:
        Path(cfg.output_path).write_text(output)
        logger.info(f"Wrote {cfg.output_path}")
    else:
        sys.stdout.write(output)
    return code


if __name__ == "__main__":
    sys.exit(main())
