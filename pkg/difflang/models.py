"""Corpus of DSL functions driving the tests, benchmarks and fits.

Sources live as `.dl` files under `models/`; each entry records its parameter
layout and the domain random points are drawn from. `reference_gradient`
gives closed forms used as an oracle independent of both AD modes.
"""
import math
import re
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from common.models import ModelEntry, ParamSpec
from common.utils.logging import setup_logging
from difflang.errors import DomainError, UnknownModel, UnknownParameter
from difflang.lang.nodes import FuncDef, Program
from difflang.lang.parser import parse

logger = setup_logging(__name__)

MODELS_DIR = Path(__file__).resolve().parents[1] / "models"

_MIXTURE = re.compile(r"gaus_mix(\d+)$")

# name -> (file, params, reference description)
_CORPUS = {
    "sum": (
        "sum.dl",
        [ParamSpec(name="p", kind="double*", low=-1.0, high=1.0), ParamSpec(name="dim", kind="int", value=5)],
        "d/dp_i = 1",
    ),
    "mvn": (
        "mvn.dl",
        [
            ParamSpec(name="x", kind="double*", low=-1.0, high=1.0),
            ParamSpec(name="p", kind="double*", low=-1.0, high=1.0),
            ParamSpec(name="sigma", kind="double", low=0.5, high=2.0),
            ParamSpec(name="dim", kind="int", value=3),
        ],
        "d/dp_i = mvn * (x_i - p_i) / sigma^2",
    ),
    "breitwigner_pdf": (
        "breitwigner.dl",
        [
            ParamSpec(name="x", kind="double", low=-2.0, high=2.0),
            ParamSpec(name="gamma", kind="double", low=0.5, high=3.0),
            ParamSpec(name="x0", kind="double", low=-1.0, high=1.0),
        ],
        "d/dgamma = 2 (4u^2 - gamma^2) / (pi (4u^2 + gamma^2)^2), u = x - x0",
    ),
    "gaus": (
        "gaus.dl",
        [
            ParamSpec(name="x", kind="double", low=-2.0, high=2.0),
            ParamSpec(name="A", kind="double", low=0.5, high=2.0),
            ParamSpec(name="mu", kind="double", low=-1.0, high=1.0),
            ParamSpec(name="sigma", kind="double", low=0.5, high=2.0),
        ],
        "d/dmu = gaus * (x - mu) / sigma^2, d/dsigma = gaus * (x - mu)^2 / sigma^3",
    ),
    "expo": (
        "expo.dl",
        [
            ParamSpec(name="x", kind="double", low=-1.0, high=1.0),
            ParamSpec(name="a", kind="double", low=-1.0, high=1.0),
            ParamSpec(name="b", kind="double", low=-1.0, high=1.0),
        ],
        "d/da = expo, d/db = x * expo",
    ),
}

MODEL_NAMES = tuple(_CORPUS)


def list_models() -> List[str]:
    return list(MODEL_NAMES)


@lru_cache(maxsize=None)
def get_model(name: str) -> ModelEntry:
    """Corpus entry by function name; `gaus_mix<k>` builds a k-component mixture."""
    m = _MIXTURE.match(name)
    if m:
        return gaus_mixture(int(m.group(1)))
    if name not in _CORPUS:
        raise UnknownModel(name, MODEL_NAMES)
    filename, params, reference = _CORPUS[name]
    source = (MODELS_DIR / filename).read_text()
    return ModelEntry(name=name, source=source, params=params, reference=reference, note=filename)


def gaus_mixture(k: int) -> ModelEntry:
    """Sum of k gaus terms; scales the fitted parameter count as 3k."""
    if k < 1:
        raise UnknownModel(f"gaus_mix{k}", MODEL_NAMES)
    params = ["double x"]
    terms = []
    specs = [ParamSpec(name="x", kind="double", low=-2.0, high=2.0)]
    for j in range(k):
        params += [f"double A{j}", f"double mu{j}", f"double sigma{j}"]
        terms.append(f"A{j} * exp(-((x - mu{j})*(x - mu{j})) / (2*sigma{j}*sigma{j}))")
        specs += [
            ParamSpec(name=f"A{j}", kind="double", low=0.5, high=2.0),
            ParamSpec(name=f"mu{j}", kind="double", low=-1.0, high=1.0),
            ParamSpec(name=f"sigma{j}", kind="double", low=0.5, high=2.0),
        ]
    source = (
        f"// {k}-component Gaussian mixture.\n"
        f"double gaus_mix{k}({', '.join(params)}) {{\n"
        f"  return {' + '.join(terms)};\n"
        f"}}\n"
    )
    return ModelEntry(name=f"gaus_mix{k}", source=source, params=specs, reference="sum of gaus gradients")


@lru_cache(maxsize=None)
def load_program(name: str) -> Program:
    return parse(get_model(name).source)


def load_function(name: str) -> FuncDef:
    return load_program(name).get(name)


def default_args(entry: ModelEntry, dim: Optional[int] = None) -> Dict[str, int]:
    """Values for the int (dimension) parameters."""
    return {p.name: (dim if dim is not None else p.value) for p in entry.params if p.kind == "int"}


def sample_point(entry: ModelEntry, rng: np.random.Generator, dim: Optional[int] = None) -> Dict[str, Any]:
    """One random point from the entry's sample domains, in parameter order."""
    ints = default_args(entry, dim)
    size = next(iter(ints.values()), 0)
    point: Dict[str, Any] = {}
    for p in entry.params:
        if p.kind == "int":
            point[p.name] = ints[p.name]
        elif p.kind == "double*":
            point[p.name] = rng.uniform(p.low, p.high, size=size).tolist()
        else:
            point[p.name] = float(rng.uniform(p.low, p.high))
    return point


def domain_midpoint(entry: ModelEntry) -> Dict[str, float]:
    """Every double parameter at the middle of its sample domain."""
    return {p.name: (p.low + p.high) / 2.0 for p in entry.params if p.kind == "double"}


def sample_points(entry: ModelEntry, n: int, seed: int = 0, dim: Optional[int] = None) -> List[Dict[str, Any]]:
    rng = np.random.default_rng(seed)
    return [sample_point(entry, rng, dim) for _ in range(n)]


# --- closed forms ---

def _within(point: Mapping[str, Any], *arrays: str) -> int:
    dim = point["dim"]
    for name in arrays:
        if dim > len(point[name]):
            raise DomainError(f"dim = {dim} reads past the {len(point[name])} entries of {name}")
    return dim


def _pad(values: List[float], size: int) -> List[float]:
    """Slots past dim are never read, so their partials are zero."""
    return values + [0.0] * (size - len(values))


def _sum(point: Mapping[str, Any]) -> Dict[str, List[float]]:
    dim = _within(point, "p")
    return {"p": _pad([1.0] * dim, len(point["p"]))}


def _mvn(point: Mapping[str, Any]) -> Dict[str, List[float]]:
    x, p, sigma = point["x"], point["p"], point["sigma"]
    dim = _within(point, "x", "p")
    if sigma <= 0:
        raise DomainError(f"mvn needs sigma > 0, got {sigma}")
    diff = [x[i] - p[i] for i in range(dim)]
    s = sum(d * d for d in diff)
    value = (2 * math.pi) ** (-dim / 2.0) * sigma ** -0.5 * math.exp(-s / (2 * sigma * sigma))
    return {
        "x": _pad([-value * d / sigma**2 for d in diff], len(x)),
        "p": _pad([value * d / sigma**2 for d in diff], len(p)),
        "sigma": [value * (-0.5 / sigma + s / sigma**3)],
    }


def _breitwigner(point: Mapping[str, Any]) -> Dict[str, List[float]]:
    x, gamma, x0 = point["x"], point["gamma"], point.get("x0", 0.0)
    u = x - x0
    g = gamma / 2.0
    denom = u * u + g * g
    if denom == 0:
        raise DomainError("breitwigner_pdf is singular at x == x0, gamma == 0")
    dx = -2.0 * g * u / (math.pi * denom * denom)
    # written so the gamma = 2|x - x0| zero is exact
    dgamma = 2.0 * (4.0 * u * u - gamma * gamma) / (math.pi * (4.0 * u * u + gamma * gamma) ** 2)
    return {"x": [dx], "gamma": [dgamma], "x0": [-dx]}


def _gaus_terms(x: float, a: float, mu: float, sigma: float) -> List[float]:
    if sigma == 0:
        raise DomainError("gaus needs sigma != 0")
    e = math.exp(-((x - mu) ** 2) / (2 * sigma * sigma))
    return [-a * e * (x - mu) / sigma**2, e, a * e * (x - mu) / sigma**2, a * e * (x - mu) ** 2 / sigma**3]


def _gaus(point: Mapping[str, Any]) -> Dict[str, List[float]]:
    dx, da, dmu, dsigma = _gaus_terms(point["x"], point["A"], point["mu"], point["sigma"])
    return {"x": [dx], "A": [da], "mu": [dmu], "sigma": [dsigma]}


def _expo(point: Mapping[str, Any]) -> Dict[str, List[float]]:
    x, a, b = point["x"], point["a"], point["b"]
    value = math.exp(a + b * x)
    return {"x": [b * value], "a": [value], "b": [x * value]}


def _mixture(point: Mapping[str, Any], k: int) -> Dict[str, List[float]]:
    x = point["x"]
    out: Dict[str, List[float]] = {"x": [0.0]}
    for j in range(k):
        dx, da, dmu, dsigma = _gaus_terms(x, point[f"A{j}"], point[f"mu{j}"], point[f"sigma{j}"])
        out["x"][0] += dx
        out.update({f"A{j}": [da], f"mu{j}": [dmu], f"sigma{j}": [dsigma]})
    return out


_REFERENCES = {
    "sum": _sum,
    "mvn": _mvn,
    "breitwigner_pdf": _breitwigner,
    "gaus": _gaus,
    "expo": _expo,
}


def reference_gradient(name: str, point: Mapping[str, Any], wrt: Optional[Sequence[str]] = None) -> List[float]:
    """Closed-form gradient at point, laid out like `_result`.

    Array parameters first, then doubles, each in declaration order; `wrt`
    defaults to every double and double* parameter.
    """
    entry = get_model(name)
    m = _MIXTURE.match(name)
    partials = _mixture(point, int(m.group(1))) if m else _REFERENCES[name](point)
    if wrt is None:
        wrt = entry.array_params + entry.scalar_params
    missing = set(wrt) - set(partials)
    if missing:
        raise UnknownParameter(f"{name} has no closed form for {', '.join(sorted(missing))}")
    out: List[float] = []
    for p in entry.array_params + entry.scalar_params:
        if p in wrt:
            out.extend(partials[p])
    return out


def relative_close(a: float, b: float, tol: float) -> bool:
    """|a - b| <= tol * (1 + |b|), with b the trusted value."""
    return abs(a - b) <= tol * (1.0 + abs(b))
