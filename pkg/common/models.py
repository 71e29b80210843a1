import csv
import io
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from common.utils.config import config


class Backend(str, Enum):
    FWD_AD = "fwd-AD"
    REV_AD = "rev-AD"
    ND = "ND"


class FitBackend(str, Enum):
    AD = "ad"
    ND = "nd"


class NumDiffConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps: float = Field(
        default=config["numdiff"]["eps"],
        gt=0,
        description="Central-difference step"
    )


class ParamSpec(BaseModel):
    """One parameter of a corpus model and where random points are drawn from."""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: str = Field(pattern=r"^(double|int|double\*)$")
    low: Optional[float] = None
    high: Optional[float] = None
    # Default sample value for int parameters (dimensions)
    value: Optional[int] = None


class ModelEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    source: str
    params: List[ParamSpec]
    reference: Optional[str] = None
    note: Optional[str] = None

    @property
    def array_params(self) -> List[str]:
        return [p.name for p in self.params if p.kind == "double*"]

    @property
    def scalar_params(self) -> List[str]:
        return [p.name for p in self.params if p.kind == "double"]


class Histogram(BaseModel):
    edges: List[float]
    counts: List[float]

    @model_validator(mode="after")
    def check_shape(self) -> "Histogram":
        if len(self.edges) != len(self.counts) + 1 or not self.counts:
            raise ValueError("a histogram needs len(edges) == len(counts) + 1 >= 2")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("bin edges must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise ValueError("bin counts must be non-negative")
        return self

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def centers(self) -> List[float]:
        return [(a + b) / 2.0 for a, b in zip(self.edges, self.edges[1:])]

    @property
    def widths(self) -> List[float]:
        return [b - a for a, b in zip(self.edges, self.edges[1:])]

    def normalized(self) -> List[float]:
        """count / (N * width); a density comparable to a normalized pdf."""
        total = sum(self.counts)
        if total == 0:
            return [0.0] * self.bins
        return [c / (total * w) for c, w in zip(self.counts, self.widths)]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["lo", "hi", "count"])
        for lo, hi, count in zip(self.edges, self.edges[1:], self.counts):
            writer.writerow([repr(lo), repr(hi), repr(count)])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Histogram":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"lo", "hi", "count"}:
            raise ValueError("histogram CSV needs the header lo,hi,count and at least one row")
        edges = [float(rows[0]["lo"])]
        counts = []
        for row in rows:
            if float(row["lo"]) != edges[-1]:
                raise ValueError(f"bins are not contiguous at lo={row['lo']}")
            edges.append(float(row["hi"]))
            counts.append(float(row["count"]))
        return cls(edges=edges, counts=counts)


class FitOptions(BaseModel):
    gtol: float = Field(default=config["fitting"]["gtol"], gt=0)
    max_iter: int = Field(default=config["fitting"]["max_iter"], ge=1)
    armijo_c: float = Field(default=config["fitting"]["armijo_c"], gt=0, lt=1)
    shrink: float = Field(default=config["fitting"]["shrink"], gt=0, lt=1)
    initial_step: float = Field(default=config["fitting"]["initial_step"], gt=0)
    max_step: float = Field(default=config["fitting"]["max_step"], gt=0)
    # Smallest step tried before the line search gives up
    min_step: float = Field(default=1e-20, gt=0)
    fd_eps: float = Field(default=config["fitting"]["fd_eps"], gt=0)


class FitProblem(BaseModel):
    """Least-squares fit of `model` (evaluated at bin centers through its `x`) to a histogram."""
    model: ModelEntry
    histogram: Histogram
    initial: List[float]

    @property
    def fitted_params(self) -> List[str]:
        return [name for name in self.model.scalar_params if name != "x"]

    @model_validator(mode="after")
    def check_arity(self) -> "FitProblem":
        if "x" not in self.model.scalar_params or self.model.array_params:
            raise ValueError(f"model '{self.model.name}' must be a function of a double x and double parameters")
        if len(self.initial) != len(self.fitted_params):
            raise ValueError(
                f"model '{self.model.name}' fits {len(self.fitted_params)} parameters "
                f"({', '.join(self.fitted_params)}), got {len(self.initial)} initial values"
            )
        return self


class FitResult(BaseModel):
    params: List[float]
    objective: float
    gradient_norm: float
    iterations: int
    grad_evals: int
    func_evals: int
    line_search_evals: int
    scalar_ops: int
    converged: bool
    backend: FitBackend
    history: List[float] = Field(default_factory=list)


class BenchRow(BaseModel):
    model: str
    dim: int
    backend: Backend
    median_ns: Optional[float] = None
    scalar_ops: int
    func_evals: int
    max_abs_err: float
    valid: bool = True
    point: Optional[str] = None

    CSV_FIELDS: ClassVar[Tuple[str, ...]] = (
        "model", "dim", "backend", "median_ns", "scalar_ops",
        "func_evals", "max_abs_err", "valid", "point",
    )


class BenchReport(BaseModel):
    kind: str = Field(pattern=r"^(scaling|accuracy|primitives)$")
    rows: List[BenchRow] = Field(default_factory=list)
    environment: str = ""
    repetitions: int = Field(default=config["bench"]["reps"], ge=5)

    @field_validator("rows")
    @classmethod
    def sort_rows(cls, rows: List[BenchRow]) -> List[BenchRow]:
        # stable: backend order within a (model, dim) group is kept
        return sorted(rows, key=lambda r: (r.model, r.dim))

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=BenchRow.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            data = row.model_dump(mode="json")
            writer.writerow({k: "" if data[k] is None else data[k] for k in BenchRow.CSV_FIELDS})
        return out.getvalue()

    def speedups(self, model: str) -> Dict[int, float]:
        """t_ND / t_rev-AD per dim, where both medians were timed."""
        times: Dict[int, Dict[Backend, float]] = {}
        for row in self.rows:
            if row.model == model and row.median_ns is not None:
                times.setdefault(row.dim, {})[row.backend] = row.median_ns
        return {
            dim: t[Backend.ND] / t[Backend.REV_AD]
            for dim, t in sorted(times.items())
            if Backend.ND in t and Backend.REV_AD in t and t[Backend.REV_AD] > 0
        }


class CliConfig(BaseModel):
    command: str = Field(pattern=r"^(differentiate|grad|eval|check|bench|fit)$")
    input_path: Optional[str] = None
    model: Optional[str] = None
    function: Optional[str] = None
    wrt: List[str] = Field(default_factory=list)
    backend: Optional[str] = None
    output_path: Optional[str] = None
    format: str = Field(default="text", pattern=r"^(text|json|csv)$")
    seed: int = config["check"]["seed"]
    eps: Optional[float] = Field(default=None, gt=0)
    dims: List[int] = Field(default_factory=list)


# --- HTTP surface ---

class DifferentiateRequest(BaseModel):
    source: str
    function: str
    wrt: str
    mode: str = Field(default="forward", pattern=r"^(forward|reverse)$")


class GradientRequest(BaseModel):
    source: str
    function: str
    wrt: List[str] = Field(default_factory=list)
    at: Dict[str, Any]
    backend: str = Field(default="ad", pattern=r"^(ad|fd)$")
    eps: Optional[float] = Field(default=None, gt=0)


class EvaluateRequest(BaseModel):
    source: str
    function: str
    args: Dict[str, Any]


class SourceResponse(BaseModel):
    function: str
    source: str


class GradientResponse(BaseModel):
    function: str
    slots: List[str]
    values: List[float]
    func_evals: int
    scalar_ops: int


class EvaluateResponse(BaseModel):
    function: str
    value: float
    scalar_ops: int
