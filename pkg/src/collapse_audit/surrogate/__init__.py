"""Surrogate models of the advisor's input-to-allocation mapping."""

from .forest import RandomForest, Tree, grow_tree
from .ridge import RidgeModel, ridge_fit
from .select import (
    CVResult,
    DegenerateClass,
    HyperparameterGrid,
    ModelSpec,
    SurrogateFit,
    cv_r2,
    fit_all,
    fold_indices,
    r2_score,
    select,
)

__all__ = [
    "CVResult",
    "DegenerateClass",
    "HyperparameterGrid",
    "ModelSpec",
    "RandomForest",
    "RidgeModel",
    "SurrogateFit",
    "Tree",
    "cv_r2",
    "fit_all",
    "fold_indices",
    "grow_tree",
    "r2_score",
    "ridge_fit",
    "select",
]
