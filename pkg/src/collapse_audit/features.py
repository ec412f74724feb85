"""Derived client features and the design-matrix encoder.

Numeric columns (continuous profile fields plus derived features) are
standardized with population statistics of the fitting set. Categorical
fields are one-hot encoded over their full level list, with no reference
level dropped. Every column records the variable it came from so that
importances can be regrouped by variable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import UnseenCategoryError
from .sampling import ClientProfile, SamplingPlan

DERIVED_FEATURES = (
    "savings_rate",
    "liquid_assets",
    "debt_to_income",
    "has_education_goal",
    "has_retirement_goal",
)


@dataclass(frozen=True)
class DerivedFeatureConfig:
    enabled: tuple[str, ...] = DERIVED_FEATURES
    education_max_age: float = 55
    education_min_dependents: float = 1
    retirement_min_age: float = 50
    retirement_timelines: tuple[str, ...] = ("15-30 Years", "30+ Years")

    def __post_init__(self):
        unknown = set(self.enabled) - set(DERIVED_FEATURES)
        if unknown:
            raise ValueError(f"unknown derived features: {sorted(unknown)}")


def derive(profile: ClientProfile, config: DerivedFeatureConfig = DerivedFeatureConfig()) -> dict:
    """Profile fields plus the enabled derived features (booleans as 0/1)."""
    row = profile.to_dict()
    income = max(float(profile.annual_income), 1.0)
    formulas = {
        "savings_rate": lambda: float(profile.total_savings) / income,
        "liquid_assets": lambda: float(profile.total_savings),
        "debt_to_income": lambda: float(profile.outstanding_debt) / income,
        "has_education_goal": lambda: float(
            profile.dependents >= config.education_min_dependents and profile.age <= config.education_max_age
        ),
        "has_retirement_goal": lambda: float(
            profile.investment_timeline in config.retirement_timelines or profile.age >= config.retirement_min_age
        ),
    }
    for name in config.enabled:
        row[name] = formulas[name]()
    return row


@dataclass
class FeatureMatrix:
    values: np.ndarray
    column_names: list[str]
    column_origin: dict[str, str]
    encoder: "Encoder"
    warnings: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def origins(self) -> list[str]:
        """Origin variable of each column, in column order."""
        return [self.column_origin[c] for c in self.column_names]

    def groups(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for j, origin in enumerate(self.origins()):
            out.setdefault(origin, []).append(j)
        return out


@dataclass
class Encoder:
    numeric: list[str]
    categorical: dict[str, list[str]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    @property
    def zero_variance(self) -> list[str]:
        return [n for n in self.numeric if self.std[n] == 0.0]

    @property
    def column_names(self) -> list[str]:
        cols = list(self.numeric)
        for var, levels in self.categorical.items():
            cols += [f"{var}={lvl}" for lvl in levels]
        return cols

    @property
    def column_origin(self) -> dict[str, str]:
        origin = {n: n for n in self.numeric}
        for var, levels in self.categorical.items():
            origin.update({f"{var}={lvl}": var for lvl in levels})
        return origin

    def transform(self, rows: Sequence[Mapping]) -> FeatureMatrix:
        n = len(rows)
        blocks = []
        for name in self.numeric:
            col = np.array([float(r[name]) for r in rows])
            sd = self.std[name]
            blocks.append(np.zeros(n) if sd == 0.0 else (col - self.mean[name]) / sd)
        for var, levels in self.categorical.items():
            index = {lvl: i for i, lvl in enumerate(levels)}
            onehot = np.zeros((n, len(levels)))
            for i, r in enumerate(rows):
                if r[var] not in index:
                    raise UnseenCategoryError(var, r[var])
                onehot[i, index[r[var]]] = 1.0
            blocks.extend(onehot.T)
        values = np.column_stack(blocks) if blocks else np.zeros((n, 0))
        warnings = [f"zero-variance numeric column {name!r} encoded as zeros" for name in self.zero_variance]
        return FeatureMatrix(values, self.column_names, self.column_origin, self, warnings)

    def to_dict(self) -> dict:
        return {
            "numeric": self.numeric,
            "categorical": self.categorical,
            "mean": self.mean,
            "std": self.std,
            "zero_variance": self.zero_variance,
            "standardization": "population (ddof=0)",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "Encoder":
        return cls(
            numeric=list(data["numeric"]),
            categorical={k: list(v) for k, v in data["categorical"].items()},
            mean={k: float(v) for k, v in data["mean"].items()},
            std={k: float(v) for k, v in data["std"].items()},
        )


def fit_encoder(rows: Sequence[Mapping], numeric: Sequence[str], categorical: Mapping[str, Sequence[str]]) -> Encoder:
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to fit the encoder")
    enc = Encoder(list(numeric), {k: list(v) for k, v in categorical.items()})
    for name in numeric:
        col = np.array([float(r[name]) for r in rows])
        enc.mean[name] = float(col.mean())
        sd = float(col.std())
        # a column that is constant up to rounding has no usable spread
        enc.std[name] = 0.0 if sd <= 1e-12 * max(1.0, abs(enc.mean[name])) else sd
    return enc


def encoder_for_plan(rows: Sequence[Mapping], plan: SamplingPlan, config: DerivedFeatureConfig = DerivedFeatureConfig()) -> Encoder:
    numeric = list(plan.continuous) + list(config.enabled)
    categorical = {name: list(plan.dimension(name).values) for name in plan.categorical}
    return fit_encoder(rows, numeric, categorical)


def build_matrix(
    profiles: Sequence[ClientProfile], plan: SamplingPlan, config: DerivedFeatureConfig = DerivedFeatureConfig()
) -> FeatureMatrix:
    rows = [derive(p, config) for p in profiles]
    return encoder_for_plan(rows, plan, config).transform(rows)
