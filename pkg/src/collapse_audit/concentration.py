"""Importance shares, feature concentration and the collapse diagnosis.

Feature concentration is the sum of squared importance shares: ``1/k``
when importance is spread evenly over ``k`` columns, ``1`` when a single
column carries all of it. It is reported twice, over encoded columns and
over original variables (one-hot columns summed back to their variable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import UndefinedSharesError
from .surrogate import DegenerateClass

HEURISTIC_COLLAPSE = "heuristic_collapse"
HOLISTIC = "holistic"
UNCHARACTERIZED = "uncharacterized"


@dataclass(frozen=True)
class Thresholds:
    r2_min: float = 0.5
    fc_high: float = 0.5

    def to_dict(self) -> dict:
        return {"r2_min": self.r2_min, "fc_high": self.fc_high}


@dataclass
class ImportanceShares:
    s: np.ndarray
    column_names: list[str]
    grouped_shares: dict[str, float]


def normalize(w, column_names: Sequence[str] | None = None, column_origin: Mapping[str, str] | None = None) -> ImportanceShares:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("importances must be finite and non-negative")
    total = math.fsum(w)
    if total <= 0:
        raise UndefinedSharesError("all importances are zero (degenerate surrogate)")
    s = w / total
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(len(w))]
    origin = column_origin or {n: n for n in names}
    grouped: dict[str, float] = {}
    for name, share in zip(names, s):
        key = origin[name]
        grouped[key] = grouped.get(key, 0.0) + float(share)
    return ImportanceShares(s, names, grouped)


def feature_concentration(s) -> float:
    s = np.asarray(list(s.values()) if isinstance(s, Mapping) else s, dtype=float)
    return float(np.sum(s * s))


def diagnose(fc: float, cv_r2: float, thresholds: Thresholds = Thresholds()) -> str:
    if cv_r2 is None or cv_r2 < thresholds.r2_min:
        return UNCHARACTERIZED
    return HEURISTIC_COLLAPSE if fc >= thresholds.fc_high else HOLISTIC


@dataclass
class ClassConcentration:
    asset_class: str
    fc_column: float | None
    fc_grouped: float | None
    cv_r2: float | None
    full_fit_r2: float | None
    model_kind: str | None
    top_features: list[tuple[str, float]] = field(default_factory=list)
    reliability: str = "low_fidelity"
    diagnosis: str = UNCHARACTERIZED
    # same rule applied to variable-level FC; one-hot splitting can hide a single-variable collapse
    diagnosis_grouped: str = UNCHARACTERIZED
    note: str | None = None
    k: int = 0
    g: int = 0

    def to_dict(self) -> dict:
        return {
            "asset_class": self.asset_class,
            "fc_column": self.fc_column,
            "fc_grouped": self.fc_grouped,
            "cv_r2": self.cv_r2,
            "full_fit_r2": self.full_fit_r2,
            "model_kind": self.model_kind,
            "top_features": [{"feature": n, "share": v} for n, v in self.top_features],
            "reliability": self.reliability,
            "diagnosis": self.diagnosis,
            "diagnosis_grouped": self.diagnosis_grouped,
            "note": self.note,
            "n_columns": self.k,
            "n_variables": self.g,
        }


def class_concentration(
    fit, column_origin: Mapping[str, str], thresholds: Thresholds = Thresholds(), top_n: int = 3
) -> ClassConcentration:
    """Concentration summary for one surrogate fit (or a degenerate-target marker)."""
    g = len(set(column_origin.values()))
    if isinstance(fit, DegenerateClass):
        return ClassConcentration(fit.asset_class, None, None, None, None, None, note=f"degenerate target: {fit.reason}", k=len(column_origin), g=g)
    try:
        shares = normalize(fit.importance, fit.column_names, column_origin)
    except UndefinedSharesError as exc:
        return ClassConcentration(
            fit.asset_class, None, None, fit.cv_r2, fit.full_fit_r2, fit.model_kind, note=str(exc), k=len(fit.column_names), g=g
        )
    fc_col = feature_concentration(shares.s)
    fc_grp = feature_concentration(shares.grouped_shares)
    top = sorted(shares.grouped_shares.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return ClassConcentration(
        asset_class=fit.asset_class,
        fc_column=fc_col,
        fc_grouped=fc_grp,
        cv_r2=fit.cv_r2,
        full_fit_r2=fit.full_fit_r2,
        model_kind=fit.model_kind,
        top_features=[(n, float(v)) for n, v in top],
        reliability="reliable" if fit.cv_r2 >= thresholds.r2_min else "low_fidelity",
        diagnosis=diagnose(fc_col, fit.cv_r2, thresholds),
        diagnosis_grouped=diagnose(fc_grp, fit.cv_r2, thresholds),
        k=len(fit.column_names),
        g=g,
    )


def concentration_report(fits: Mapping, column_origin: Mapping[str, str], thresholds: Thresholds = Thresholds()) -> dict:
    classes = [class_concentration(f, column_origin, thresholds).to_dict() for f in fits.values()]
    return {"thresholds": thresholds.to_dict(), "headline_fc": "fc_column", "classes": classes}


def _pct(v: float | None) -> str:
    return "---" if v is None else f"{100 * v:.1f}%"


def _num(v: float | None) -> str:
    return "---" if v is None else f"{v:.3f}"


def markdown_table(reports: Mapping[str, dict]) -> str:
    """Top grouped feature and share per asset class, one column pair per condition."""
    conditions = list(reports)
    header = "| Asset Class | " + " | ".join(f"{c}: Top Feature | {c}: Share | {c}: FC | {c}: R² | {c}: Diagnosis" for c in conditions) + " |"
    sep = "|---|" + "|".join(["---|---:|---:|---:|---"] * len(conditions)) + "|"
    by_class: dict[str, dict[str, dict]] = {}
    for cond, rep in reports.items():
        for row in rep["classes"]:
            by_class.setdefault(row["asset_class"], {})[cond] = row
    lines = [header, sep]
    for cls, rows in by_class.items():
        cells = []
        for cond in conditions:
            row = rows.get(cond)
            if row is None or not row["top_features"]:
                cells.append("--- | --- | --- | --- | " + (row["diagnosis"] if row else "---"))
                continue
            name, share = row["top_features"][0]["feature"], row["top_features"][0]["share"]
            cells.append(f"{name} | {_pct(share)} | {_num(row['fc_column'])} | {_num(row['cv_r2'])} | {row['diagnosis']}")
        lines.append(f"| {cls} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
