import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator


class SketchStrategy(str, Enum):
    uniform = "uniform"
    leverage = "leverage"
    gaussian = "gaussian"


class Method(str, Enum):
    householder = "householder"
    cholqr = "cholqr"
    cholqr2 = "cholqr2"
    scholqr3 = "scholqr3"
    rlu = "rlu"
    rqr = "rqr"
    rqr_gauss = "rqr_gauss"

RANDOMIZED = {Method.rlu, Method.rqr, Method.rqr_gauss}
PARALLEL_METHODS = [m for m in Method if m != Method.householder] # householder has no Grammian to distribute


class StageName(str, Enum):
    householder = "householder"
    sketch = "sketch"
    precondition = "precondition"
    shifted_cholesky = "shifted_cholesky"
    cholesky_qr = "cholesky_qr"


class RunStatus(str, Enum):
    ok = "ok"
    breakdown = "breakdown"
    singular = "singular"


class ShiftKind(str, Enum):
    theory = "theory"
    fixed = "fixed"


class ShiftMode(BaseModel):
    """Diagonal shift of the first Grammian in shifted CholeskyQR3."""
    kind: ShiftKind = ShiftKind.theory
    value: Optional[float] = None

    @model_validator(mode="after")
    def _check_value(self):
        if self.kind == ShiftKind.fixed and (self.value is None or not self.value > 0):
            raise ValueError("A fixed shift needs a positive value.")
        return self

    @classmethod
    def theory(cls) -> "ShiftMode":
        return cls(kind=ShiftKind.theory)

    @classmethod
    def fixed(cls, value: float) -> "ShiftMode":
        return cls(kind=ShiftKind.fixed, value=value)

    @classmethod
    def parse(cls, text: str) -> "ShiftMode":
        """Accepts 'theory', 'fixed' (1e-15) or 'fixed:<eps>'."""
        text = text.strip().lower()
        if text == "theory":
            return cls.theory()
        if text == "fixed":
            return cls.fixed(1e-15)
        if text.startswith("fixed:"):
            return cls.fixed(float(text.split(":", 1)[1]))
        raise ValueError(f"Invalid shift mode: {text}. Must be 'theory', 'fixed' or 'fixed:<eps>'.")

# the shift used by the benchmark reproductions
BENCH_SHIFT = ShiftMode.fixed(1e-15)


class MatrixSpec(BaseModel):
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    kappa: float = Field(ge=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _tall(self):
        if self.m < self.n:
            raise ValueError(f"MatrixSpec needs m >= n, got m={self.m}, n={self.n}.")
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite.")
        return self


class SketchConfig(BaseModel):
    strategy: SketchStrategy = SketchStrategy.uniform
    # either an explicit sample size or a rate l/n; neither means l = 2n
    size: Optional[int] = Field(default=None, ge=1)
    rate: Optional[float] = Field(default=None, ge=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_retries: int = Field(default=2, ge=0)
    retry_growth: float = Field(default=2.0, gt=1.0)
    without_replacement: bool = False

    @model_validator(mode="after")
    def _one_size(self):
        if self.size is not None and self.rate is not None:
            raise ValueError("Give either size or rate, not both.")
        return self

    def resolve_size(self, m: int, n: int) -> int:
        """The sample size l for an m x n input; must land in [n, m]."""
        if self.size is not None:
            l = self.size
        else:
            rate = 2.0 if self.rate is None else self.rate
            # tolerance keeps 1.1 * 100 at 110 rather than 111
            l = math.ceil(rate * n - 1e-9)
        if not n <= l <= m:
            raise ValueError(f"Sketch size l={l} must satisfy n={n} <= l <= m={m}.")
        return l

    def grown_size(self, l0: int, attempt: int, m: int) -> int:
        """Sample size of the given (0-based) retry attempt, capped at m."""
        return min(m, math.ceil(l0 * self.retry_growth ** attempt))


class Stage(BaseModel):
    name: StageName
    cond_estimate: Optional[float] = None
    shift: Optional[float] = None
    retries: int = 0
    sketch_size: Optional[int] = None
    wall_ms: float = 0.0


class StageReport(BaseModel):
    stages: List[Stage] = Field(min_length=1)
    r_less: bool = False

    @property
    def retries(self) -> int:
        return sum(s.retries for s in self.stages)

    def stage(self, name: StageName) -> Optional[Stage]:
        """First stage with the given name, if any."""
        for s in self.stages:
            if s.name == name:
                return s
        return None

    def wall_ms_by_stage(self) -> Dict[str, float]:
        totals: Dict[str, float] = {}
        for s in self.stages:
            totals[s.name.value] = totals.get(s.name.value, 0.0) + s.wall_ms
        return totals


@dataclass
class QRFactorization:
    q: np.ndarray
    r: Optional[np.ndarray]  # None in r_less mode
    report: StageReport


@dataclass
class Sketch:
    a1: np.ndarray
    strategy: SketchStrategy
    indices: Optional[np.ndarray] = None  # extraction strategies, in draw order
    seed: Optional[int] = None            # gaussian projection seed
    weights: Optional[np.ndarray] = None  # leverage rescaling per sampled row


class BoundReport(BaseModel):
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    tail_probability: float = Field(ge=0.0)
    cond_threshold: float
    # the two bracketed powers of the Chernoff bounds
    lower_term: Optional[float] = None
    upper_term: Optional[float] = None


@dataclass
class FlopEstimate:
    total: float
    critical_path: Optional[float]


@dataclass
class StabilityBound:
    gamma: float
    factor: float          # (1+gamma)/(1-gamma)
    cond_inflation: float  # factor * cond(X)


@dataclass
class CommunicationCost:
    times: int
    volume: float


class RunRecord(BaseModel):
    method: str
    m: int
    n: int
    l: Optional[int] = None
    p: int = 1
    kappa: float
    seed: int
    status: RunStatus = RunStatus.ok
    orth_err: Optional[float] = None
    res_err: Optional[float] = None
    cond_x: Optional[float] = None
    retries: int = 0
    wall_ms: Dict[str, float] = Field(default_factory=dict)
    messages: Optional[int] = None
    volume: Optional[float] = None
    speedup: Optional[float] = None
    error: Optional[str] = None

    @model_validator(mode="after")
    def _ok_has_errors(self):
        if self.status == RunStatus.ok:
            for name in ("orth_err", "res_err"):
                value = getattr(self, name)
                if value is None or not math.isfinite(value):
                    raise ValueError(f"status=ok requires a finite {name}.")
        return self


@dataclass
class RSVDResult:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    iterations: int
    per_iteration_orth_time: List[float] = field(default_factory=list)
