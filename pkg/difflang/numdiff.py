"""Central finite differences, the numerical baseline AD is compared against."""
from typing import Callable, List, Mapping, MutableSequence, NamedTuple, Optional, Sequence, Union

from common.models import NumDiffConfig
from common.utils.logging import setup_logging
from difflang.errors import UnknownParameter
from difflang.evaluator import EvalStats, Interpreter
from difflang.lang.nodes import FuncDef, Type

logger = setup_logging(__name__)

Args = Union[MutableSequence, dict]
Objective = Callable[[Args], float]


class Slot(NamedTuple):
    """A scalar input: `args[arg]`, or `args[arg][index]` for array slots."""
    arg: Union[int, str]
    index: Optional[int] = None


def _get(args: Args, slot: Slot) -> float:
    value = args[slot.arg]
    return value if slot.index is None else value[slot.index]


def _set(args: Args, slot: Slot, value: float) -> None:
    if slot.index is None:
        args[slot.arg] = value
    else:
        args[slot.arg][slot.index] = value


def fd_partial(f: Objective, args: Args, slot: Slot, cfg: Optional[NumDiffConfig] = None,
               stats: Optional[EvalStats] = None) -> float:
    """(f(x+eps) - f(x-eps)) / (2 eps) for one slot; args are restored afterwards."""
    eps = (cfg or NumDiffConfig()).eps
    original = _get(args, slot)
    try:
        _set(args, slot, original + eps)
        v1 = f(args)
        _set(args, slot, original - eps)
        v2 = f(args)
    finally:
        _set(args, slot, original)
    if stats is not None:
        stats.func_evals += 2
    return (v1 - v2) / (2 * eps)


def fd_gradient(f: Objective, args: Args, slots: Sequence[Slot], cfg: Optional[NumDiffConfig] = None,
                stats: Optional[EvalStats] = None) -> List[float]:
    """One central difference per slot, 2 * len(slots) calls of f in total."""
    cfg = cfg or NumDiffConfig()
    logger.debug(f"Finite differences over {len(slots)} slots, eps={cfg.eps}")
    return [fd_partial(f, args, slot, cfg, stats) for slot in slots]


def expand_slots(func: FuncDef, wrt: Sequence[str], args: Args) -> List[Slot]:
    """Slots of the wrt parameters, arrays expanded; layout matches `_result`.

    Arrays come first, then doubles, each in declaration order.
    """
    by_key = isinstance(args, Mapping)
    arrays: List[Slot] = []
    scalars: List[Slot] = []
    for k, p in enumerate(func.params):
        if p.name not in wrt:
            continue
        key = p.name if by_key else k
        if p.type == Type.DOUBLE_ARRAY:
            arrays.extend(Slot(key, i) for i in range(len(args[key])))
        elif p.type == Type.DOUBLE:
            scalars.append(Slot(key))
        else:
            raise UnknownParameter(f"'{p.name}' is {p.type.value}; only double and double* can be perturbed")
    unknown = set(wrt) - {p.name for p in func.params}
    if unknown:
        raise UnknownParameter(f"'{func.name}' has no parameter(s) {', '.join(sorted(unknown))}")
    return arrays + scalars


def interpreter_objective(interp: Interpreter, fname: str, stats: Optional[EvalStats] = None) -> Objective:
    """Wrap a DSL function so its op counts land in stats.

    func_evals is left to fd_partial so every call is counted exactly once.
    """
    def f(args: Args) -> float:
        return interp.call(fname, args, stats)
    return f
