"""Latin hypercube generation of synthetic client profiles.

Profiles are drawn on a unit hypercube, one stratum per sample in every
column, then mapped onto discrete value grids (continuous dimensions) or
level lists (categorical dimensions). Pairwise Pearson correlation across
the continuous dimensions is checked against a threshold and the draw is
repeated with ``seed + 1`` until it passes or the retry budget runs out.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateDimensionError, OrthogonalityError

Kind = Literal["continuous", "categorical"]

PROFILE_FIELDS = (
    "age",
    "annual_income",
    "total_savings",
    "outstanding_debt",
    "dependents",
    "risk_tolerance",
    "investment_experience",
    "investment_timeline",
    "education",
    "marital_status",
)

RISK_LEVELS = ("Conservative", "Moderate", "Moderately Aggressive", "Aggressive")
EXPERIENCE_LEVELS = ("None", "Limited", "Some", "Moderate", "Extensive")
TIMELINE_LEVELS = ("1-5 Years", "5-15 Years", "15-30 Years", "30+ Years")
EDUCATION_LEVELS = ("High School", "Associate's", "Bachelor's", "Master's", "Doctorate")
MARITAL_LEVELS = ("Single", "Married", "Divorced", "Widowed")

AGE_GRID = tuple(range(25, 76, 5))
# Geometric spacing 15k..920k rounded to the nearest thousand.
INCOME_GRID = (15_000, 27_000, 49_000, 88_000, 158_000, 284_000, 511_000, 920_000)
SAVINGS_GRID = (0,) + tuple(1000 * 2**k for k in range(14))
DEBT_GRID = (0,) + tuple(1000 * 2**k for k in range(12))
DEPENDENTS_GRID = tuple(range(6))


@dataclass(frozen=True)
class DimensionSpec:
    name: str
    kind: Kind
    values: tuple
    units: str | None = None

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"dimension {self.name!r}: empty grid")
        if self.kind == "continuous":
            vals = list(self.values)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"dimension {self.name!r}: grid must be strictly increasing")
        elif self.kind == "categorical":
            if len(set(self.values)) != len(self.values):
                raise ValueError(f"dimension {self.name!r}: duplicate level labels")
        else:
            raise ValueError(f"dimension {self.name!r}: unknown kind {self.kind!r}")

    def pick(self, u: float):
        n = len(self.values)
        return self.values[min(int(math.floor(u * n)), n - 1)]


@dataclass(frozen=True)
class SamplingPlan:
    dimensions: tuple[DimensionSpec, ...]
    n_samples: int
    seed: int = 42
    orthogonality_threshold: float = 0.07
    max_retries: int = 20

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not 0 < self.orthogonality_threshold < 1:
            raise ValueError("orthogonality_threshold must lie in (0, 1)")
        names = [d.name for d in self.dimensions]
        if sorted(names) != sorted(PROFILE_FIELDS):
            raise ValueError(f"plan must define exactly the profile fields {PROFILE_FIELDS}, got {names}")

    def dimension(self, name: str) -> DimensionSpec:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def continuous(self) -> list[str]:
        return [d.name for d in self.dimensions if d.kind == "continuous"]

    @property
    def categorical(self) -> list[str]:
        return [d.name for d in self.dimensions if d.kind == "categorical"]


def profile_dimensions(income_grid: Sequence[float] = INCOME_GRID) -> tuple[DimensionSpec, ...]:
    """The ten profile dimensions with the default value grids."""
    return (
        DimensionSpec("age", "continuous", AGE_GRID, "years"),
        DimensionSpec("annual_income", "continuous", tuple(income_grid), "currency"),
        DimensionSpec("total_savings", "continuous", SAVINGS_GRID, "currency"),
        DimensionSpec("outstanding_debt", "continuous", DEBT_GRID, "currency"),
        DimensionSpec("dependents", "continuous", DEPENDENTS_GRID, "count"),
        DimensionSpec("risk_tolerance", "categorical", RISK_LEVELS),
        DimensionSpec("investment_experience", "categorical", EXPERIENCE_LEVELS),
        DimensionSpec("investment_timeline", "categorical", TIMELINE_LEVELS),
        DimensionSpec("education", "categorical", EDUCATION_LEVELS),
        DimensionSpec("marital_status", "categorical", MARITAL_LEVELS),
    )


def default_plan(n_samples: int = 1000, seed: int = 42, **kwargs) -> SamplingPlan:
    return SamplingPlan(profile_dimensions(), n_samples=n_samples, seed=seed, **kwargs)


@dataclass(frozen=True)
class ClientProfile:
    profile_id: int
    age: float
    annual_income: float
    total_savings: float
    outstanding_debt: float
    dependents: float
    risk_tolerance: str
    investment_experience: str
    investment_timeline: str
    education: str
    marital_status: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ClientProfile":
        return cls(**{f.name: data[f.name] for f in fields(cls)})


def lhs_unit(n: int, d: int, seed: int) -> np.ndarray:
    """Latin hypercube sample on [0, 1)^d.

    Each column holds exactly one value in every stratum ``[i/n, (i+1)/n)``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    out = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        u = (strata + rng.random(n)) / n
        # guard the upper stratum edge against rounding
        out[:, j] = np.minimum(u, np.nextafter((strata + 1) / n, 0.0))
    return out


def materialize(plan: SamplingPlan, unit: np.ndarray) -> list[ClientProfile]:
    unit = np.asarray(unit, dtype=float)
    if unit.ndim != 2 or unit.shape[1] != len(plan.dimensions):
        raise ValueError(f"unit matrix must have {len(plan.dimensions)} columns")
    profiles = []
    for i, row in enumerate(unit):
        values = {dim.name: dim.pick(float(u)) for dim, u in zip(plan.dimensions, row)}
        profiles.append(ClientProfile(profile_id=i, **values))
    return profiles


@dataclass
class OrthogonalityCheck:
    names: list[str]
    matrix: np.ndarray
    threshold: float
    passed: bool = field(init=False)
    max_abs: float = field(init=False)

    def __post_init__(self):
        k = len(self.names)
        off = self.matrix[~np.eye(k, dtype=bool)]
        self.max_abs = float(np.max(np.abs(off))) if off.size else 0.0
        self.passed = self.max_abs < self.threshold

    def to_dict(self) -> dict:
        return {
            "names": self.names,
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "threshold": self.threshold,
            "max_abs_offdiagonal": self.max_abs,
            "passed": self.passed,
        }


def _pearson(x: list[float], y: list[float]) -> float:
    # fsum is exactly rounded, which makes the result independent of row order
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    return sxy / math.sqrt(sxx * syy)


def check_orthogonality(
    profiles: Sequence[ClientProfile],
    threshold: float = 0.07,
    names: Sequence[str] = PROFILE_FIELDS[:5],
) -> OrthogonalityCheck:
    if len(profiles) < 2:
        raise ValueError("need at least 2 profiles")
    cols = {name: [float(getattr(p, name)) for p in profiles] for name in names}
    for name, col in cols.items():
        if max(col) == min(col):
            raise DegenerateDimensionError(name)
    k = len(names)
    r = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            r[a, b] = r[b, a] = _pearson(cols[names[a]], cols[names[b]])
    return OrthogonalityCheck(list(names), r, threshold)


@dataclass
class SampleResult:
    profiles: list[ClientProfile]
    check: OrthogonalityCheck
    seed_used: int
    attempts: int


def generate_profiles(plan: SamplingPlan) -> SampleResult:
    """Draw profiles, redrawing with seed+1 until the orthogonality check passes."""
    for attempt in range(plan.max_retries + 1):
        seed = plan.seed + attempt
        unit = lhs_unit(plan.n_samples, len(plan.dimensions), seed)
        profiles = materialize(plan, unit)
        check = check_orthogonality(profiles, plan.orthogonality_threshold, plan.continuous)
        if check.passed:
            return SampleResult(profiles, check, seed, attempt + 1)
    raise OrthogonalityError(
        f"no draw in {plan.max_retries + 1} attempts met |r| < {plan.orthogonality_threshold}"
        f" (last max |r| = {check.max_abs:.4f})"
    )


def category_counts(profiles: Sequence[ClientProfile], name: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in profiles:
        v = getattr(p, name)
        counts[v] = counts.get(v, 0) + 1
    return counts
