"""Cross-validated grid search over ridge and random-forest surrogates."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import DegenerateTargetError
from .forest import RandomForest
from .ridge import ridge_fit

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class HyperparameterGrid:
    ridge_lambdas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    forest_trees: tuple[int, ...] = (100, 300)
    forest_depths: tuple[int | None, ...] = (4, 8, None)
    forest_min_leaf: tuple[int, ...] = (2, 5)
    forest_max_features: int | None = None
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if any(lam < 0 for lam in self.ridge_lambdas):
            raise ValueError("ridge penalties must be >= 0")
        if any(t < 1 for t in self.forest_trees):
            raise ValueError("tree counts must be >= 1")
        if any(m < 1 for m in self.forest_min_leaf):
            raise ValueError("min leaf sizes must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if not self.ridge_lambdas and not self.forest_trees:
            raise ValueError("grid is empty")

    def specs(self) -> list["ModelSpec"]:
        out = [ModelSpec("ridge", {"lam": float(lam)}) for lam in self.ridge_lambdas]
        for trees in self.forest_trees:
            for depth in self.forest_depths:
                for leaf in self.forest_min_leaf:
                    out.append(
                        ModelSpec(
                            "forest",
                            {"n_trees": int(trees), "max_depth": depth, "min_samples_leaf": int(leaf), "max_features": self.forest_max_features},
                        )
                    )
        return out


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: Mapping

    def preference(self) -> tuple:
        """Sort key for breaking cv ties: ridge first, then the smaller model."""
        if self.kind == "ridge":
            return (0, -self.params["lam"])
        depth = self.params["max_depth"]
        return (1, self.params["n_trees"], math.inf if depth is None else depth, -self.params["min_samples_leaf"])

    def fit(self, X, y, seed: int = 0):
        if self.kind == "ridge":
            return ridge_fit(X, y, self.params["lam"])
        p = self.params
        return RandomForest(p["n_trees"], p["max_depth"], p["min_samples_leaf"], p.get("max_features"), seed).fit(X, y)

    def to_dict(self) -> dict:
        return {"model": self.kind, **self.params}


def r2_score(y: np.ndarray, pred: np.ndarray) -> float | None:
    """1 - SSE/SST, or None when the targets have no spread."""
    resid = y - pred
    dev = y - y.mean()
    sst = float(dev @ dev)
    if sst <= 1e-12 * max(1.0, float(y @ y)):
        return None
    return 1.0 - float(resid @ resid) / sst


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    if folds < 2 or n < folds:
        raise ValueError(f"need folds >= 2 and n >= folds (n={n}, folds={folds})")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


@dataclass
class CVResult:
    mean: float
    fold_r2: list[float | None]
    warnings: list[str] = field(default_factory=list)


def _summarize(scores: list[float | None]) -> CVResult:
    used = [s for s in scores if s is not None]
    if not used:
        raise DegenerateTargetError("every cross-validation fold has constant targets")
    warnings = [f"fold {i} skipped: constant test targets" for i, s in enumerate(scores) if s is None]
    return CVResult(float(np.mean(used)), scores, warnings)


def cv_r2(spec: ModelSpec, X: np.ndarray, y: np.ndarray, folds: int = 5, seed: int = 0) -> CVResult:
    """Mean out-of-fold R^2 with a seeded shuffle; folds with constant test targets are skipped."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scores = []
    for test in fold_indices(len(y), folds, seed):
        train = np.setdiff1d(np.arange(len(y)), test)
        model = spec.fit(X[train], y[train], seed)
        scores.append(r2_score(y[test], model.predict(X[test])))
    return _summarize(scores)


def _grid_scores(X, y, grid: HyperparameterGrid) -> list[tuple[ModelSpec, CVResult]]:
    specs = grid.specs()
    splits = fold_indices(len(y), grid.cv_folds, grid.seed)
    scores: dict[int, list] = {i: [] for i in range(len(specs))}
    ridge_ids = [i for i, s in enumerate(specs) if s.kind == "ridge"]
    forest_ids = [i for i, s in enumerate(specs) if s.kind == "forest"]

    # forests sharing min_leaf/max_features come from one fit per fold: a
    # smaller tree count is a prefix, and with all features tried per split
    # a shallower depth is a truncation
    groups: dict[tuple, list[int]] = {}
    for i in forest_ids:
        p = specs[i].params
        key = (p["min_samples_leaf"], p["max_features"])
        if p["max_features"] is not None and p["max_features"] < X.shape[1]:
            key += (p["max_depth"],)
        groups.setdefault(key, []).append(i)

    all_rows = np.arange(len(y))
    for test in splits:
        train = np.setdiff1d(all_rows, test)
        Xtr, ytr, Xte, yte = X[train], y[train], X[test], y[test]
        for i in ridge_ids:
            model = specs[i].fit(Xtr, ytr)
            scores[i].append(r2_score(yte, model.predict(Xte)))
        for ids in groups.values():
            params = [specs[i].params for i in ids]
            depths = [p["max_depth"] for p in params]
            depth = None if any(d is None for d in depths) else max(depths)
            big = RandomForest(
                max(p["n_trees"] for p in params), depth, params[0]["min_samples_leaf"], params[0]["max_features"], grid.seed
            ).fit(Xtr, ytr)
            per_depth = {}
            for i, p in zip(ids, params):
                d = p["max_depth"]
                if d not in per_depth:
                    per_depth[d] = np.cumsum(big.tree_predictions(Xte, d), axis=0)
                pred = per_depth[d][p["n_trees"] - 1] / p["n_trees"]
                scores[i].append(r2_score(yte, pred))
    return [(specs[i], _summarize(scores[i])) for i in range(len(specs))]


@dataclass
class SurrogateFit:
    asset_class: str
    model_kind: str
    hyperparameters: dict
    cv_r2: float
    full_fit_r2: float
    importance: np.ndarray
    column_names: list[str]
    grid_results: list[dict]
    low_fidelity: bool
    degenerate_importance: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "asset_class": self.asset_class,
            "model_kind": self.model_kind,
            "hyperparameters": self.hyperparameters,
            "cv_r2": self.cv_r2,
            "full_fit_r2": self.full_fit_r2,
            "low_fidelity": self.low_fidelity,
            "degenerate_importance": self.degenerate_importance,
            "importance": {c: float(v) for c, v in zip(self.column_names, self.importance)},
            "grid_results": self.grid_results,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateFit":
        names = list(data["importance"])
        return cls(
            asset_class=data["asset_class"],
            model_kind=data["model_kind"],
            hyperparameters=data["hyperparameters"],
            cv_r2=data["cv_r2"],
            full_fit_r2=data["full_fit_r2"],
            importance=np.array([data["importance"][c] for c in names]),
            column_names=names,
            grid_results=data["grid_results"],
            low_fidelity=data["low_fidelity"],
            degenerate_importance=data.get("degenerate_importance", False),
            warnings=data.get("warnings", []),
        )


def select(
    X: np.ndarray,
    y: np.ndarray,
    grid: HyperparameterGrid = HyperparameterGrid(),
    column_names: Sequence[str] | None = None,
    asset_class: str = "",
    r2_min: float = 0.5,
) -> SurrogateFit:
    """Pick the grid point with the best mean CV R^2 and refit it on all rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if r2_score(y, np.full_like(y, y.mean())) is None:
        raise DegenerateTargetError(f"target {asset_class!r} is constant")
    results = _grid_scores(X, y, grid)
    best = max(r.mean for _, r in results)
    tied = [(s, r) for s, r in results if r.mean >= best - TIE_TOL]
    spec, res = min(tied, key=lambda sr: sr[0].preference())

    model = spec.fit(X, y, grid.seed)
    if spec.kind == "ridge":
        importance = model.importance
        degenerate = not np.any(importance > 0)
    else:
        importance = model.importance()
        degenerate = model.is_degenerate()
    full = r2_score(y, model.predict(X))
    table = [
        {**s.to_dict(), "cv_r2": r.mean, "fold_r2": r.fold_r2, "selected": s is spec} for s, r in results
    ]
    return SurrogateFit(
        asset_class=asset_class,
        model_kind=spec.kind,
        hyperparameters=dict(spec.params),
        cv_r2=res.mean,
        full_fit_r2=float(full),
        importance=np.asarray(importance, dtype=float),
        column_names=list(column_names) if column_names is not None else [f"x{j}" for j in range(X.shape[1])],
        grid_results=table,
        low_fidelity=res.mean < r2_min,
        degenerate_importance=bool(degenerate),
        warnings=list(res.warnings),
    )


@dataclass
class DegenerateClass:
    asset_class: str
    reason: str

    def to_dict(self) -> dict:
        return {"asset_class": self.asset_class, "degenerate_target": True, "reason": self.reason}


def fit_all(
    X: np.ndarray,
    targets: Mapping[str, np.ndarray],
    grid: HyperparameterGrid = HyperparameterGrid(),
    column_names: Sequence[str] | None = None,
    r2_min: float = 0.5,
    n_jobs: int = 1,
) -> dict[str, SurrogateFit | DegenerateClass]:
    """One independent surrogate per target, returned in the order of ``targets``."""

    def one(name):
        try:
            return select(X, targets[name], grid, column_names, name, r2_min)
        except DegenerateTargetError as exc:
            log.info("skipping %s: %s", name, exc)
            return DegenerateClass(name, str(exc))

    names = list(targets)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fits = list(pool.map(one, names))
    else:
        fits = [one(n) for n in names]
    return dict(zip(names, fits))
