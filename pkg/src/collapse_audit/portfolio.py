"""Diversification, personalization and rounding metrics over recommendations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .advisory.catalog import ProductCatalog
from .advisory.recommendation import Recommendation

NULL_P5 = 0.20


@dataclass
class PortfolioWeights:
    weights: np.ndarray
    class_weights: np.ndarray


def to_weights(rec: Recommendation, catalog: ProductCatalog) -> PortfolioWeights:
    w = np.zeros(len(catalog.products))
    for item in rec.recommended_products:
        w[catalog.index(item.name)] = item.allocation_pct / 100.0
    cw = np.zeros(len(catalog.classes))
    np.add.at(cw, catalog.class_index(), w)
    return PortfolioWeights(w, cw)


def hhi(weights) -> float:
    """Sum of squared weights: 1/m for an even split over m entries, 1 when fully concentrated."""
    w = np.asarray(weights, dtype=float)
    return math.fsum(w * w)


def weighted_jaccard(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    top = math.fsum(np.maximum(p, q))
    if top == 0:
        return 1.0
    return math.fsum(np.minimum(p, q)) / top


def pairwise_jaccard(W: np.ndarray) -> np.ndarray:
    """All unordered pair similarities, rows ``i < j`` in lexicographic order."""
    W = np.asarray(W, dtype=float)
    n = len(W)
    out = np.empty(n * (n - 1) // 2)
    pos = 0
    for i in range(n - 1):
        rest = W[i + 1 :]
        mins = np.minimum(W[i], rest).sum(axis=1)
        maxs = np.maximum(W[i], rest).sum(axis=1)
        out[pos : pos + len(rest)] = mins / maxs
        pos += len(rest)
    return out


def mean_pairwise_jaccard(W) -> tuple[float, float]:
    """Mean and sample standard deviation of J over all unordered client pairs."""
    W = np.asarray(W, dtype=float)
    if len(W) < 2:
        raise ValueError("need at least 2 portfolios")
    # sort rows so the reduction order does not depend on input order
    W = W[np.lexsort(W.T[::-1])]
    vals = pairwise_jaccard(W)
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return math.fsum(vals) / len(vals), sd


def per_client_jaccard(W) -> np.ndarray:
    """Each client's mean similarity to every other client (pairs the conditions per client)."""
    W = np.asarray(W, dtype=float)
    n = len(W)
    mins = np.zeros(n)
    for i in range(n):
        sims = np.minimum(W[i], W).sum(axis=1) / np.maximum(W[i], W).sum(axis=1)
        mins[i] = (sims.sum() - sims[i]) / (n - 1)
    return mins


def is_multiple_of_5(a: float) -> bool:
    return abs(a - 5.0 * round(a / 5.0)) < 1e-9


@dataclass
class RoundingBias:
    p5_hat: float
    b: float
    n: int

    def to_dict(self) -> dict:
        return {"p5_hat": self.p5_hat, "b": self.b, "n_allocations": self.n}


def bias_index(p5_hat: float) -> float:
    return (p5_hat - NULL_P5) / (1.0 - NULL_P5)


def rounding_bias(allocations: Sequence[float]) -> RoundingBias:
    """Excess share of multiple-of-5 allocations over the uniform-null 20%."""
    if len(allocations) == 0:
        raise ValueError("no allocations")
    hits = sum(is_multiple_of_5(a) for a in allocations)
    p5 = hits / len(allocations)
    return RoundingBias(p5, bias_index(p5), len(allocations))


def stated_allocations(recs: Sequence[Recommendation]) -> list[float]:
    return [item.stated_pct for r in recs for item in r.recommended_products]


def per_recommendation_p5(recs: Sequence[Recommendation]) -> np.ndarray:
    return np.array([np.mean([is_multiple_of_5(i.stated_pct) for i in r.recommended_products]) for r in recs])


def weight_matrix(recs: Sequence[Recommendation], catalog: ProductCatalog) -> tuple[np.ndarray, np.ndarray]:
    pw = [to_weights(r, catalog) for r in recs]
    return np.array([p.weights for p in pw]), np.array([p.class_weights for p in pw])


@dataclass
class ConditionMetrics:
    """Per-client vectors and pooled summaries for one condition, in profile_id order."""

    condition: str
    profile_ids: list[int]
    hhi_product: np.ndarray
    hhi_class: np.ndarray
    jaccard_client: np.ndarray
    jaccard_mean: float
    jaccard_sd: float
    p5_client: np.ndarray
    rounding: RoundingBias

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "n_clients": len(self.profile_ids),
            "hhi": {
                "level": "product",
                "mean": float(np.mean(self.hhi_product)),
                "sd": _sd(self.hhi_product),
            },
            "hhi_class": {"level": "asset_class", "mean": float(np.mean(self.hhi_class)), "sd": _sd(self.hhi_class)},
            "jaccard": {"mean": self.jaccard_mean, "sd": self.jaccard_sd, "sd_over": "client_pairs", "universe": "product"},
            "rounding_bias": self.rounding.to_dict(),
            "per_client": {
                "profile_id": list(self.profile_ids),
                "hhi": [float(v) for v in self.hhi_product],
                "hhi_class": [float(v) for v in self.hhi_class],
                "jaccard": [float(v) for v in self.jaccard_client],
                "p5": [float(v) for v in self.p5_client],
            },
        }


def _sd(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def condition_metrics(recs: Sequence[Recommendation], catalog: ProductCatalog, condition: str = "") -> ConditionMetrics:
    recs = sorted(recs, key=lambda r: r.profile_id)
    W, C = weight_matrix(recs, catalog)
    mean, sd = mean_pairwise_jaccard(W)
    return ConditionMetrics(
        condition=condition,
        profile_ids=[r.profile_id for r in recs],
        hhi_product=np.array([hhi(w) for w in W]),
        hhi_class=np.array([hhi(c) for c in C]),
        jaccard_client=per_client_jaccard(W),
        jaccard_mean=mean,
        jaccard_sd=sd,
        p5_client=per_recommendation_p5(recs),
        rounding=rounding_bias(stated_allocations(recs)),
    )


def _cell(mean: float, sd: float) -> str:
    return f"{mean:.2f} ± {sd:.2f}"


def _delta(comp: dict | None) -> str:
    """Signed change with significance stars, bold when |d| > 0.2."""
    if not comp:
        return "---"
    text = f"{comp['delta']:+.2f}"
    d = comp.get("cohen_d")
    if d is not None and abs(d) > 0.2:
        text = f"**{text}**"
    return text + (comp.get("stars") or "")


def markdown_table(rows: Sequence[tuple[str, dict, dict | None]]) -> str:
    """Baseline mean ± sd and search-minus-baseline change for HHI and Jaccard.

    ``rows`` holds ``(label, baseline_metrics_dict, comparison_dict_or_None)``.
    The ± is the sample sd across clients for HHI and across client pairs
    for Jaccard.
    """
    lines = [
        "| Advisor | HHI Baseline | HHI Δ_search | Jaccard Baseline | Jaccard Δ_search |",
        "|---|---:|---:|---:|---:|",
    ]
    for label, base, comp in rows:
        comp = comp or {}
        lines.append(
            f"| {label} | {_cell(base['hhi']['mean'], base['hhi']['sd'])} | {_delta(comp.get('hhi'))} | "
            f"{_cell(base['jaccard']['mean'], base['jaccard']['sd'])} | {_delta(comp.get('jaccard'))} |"
        )
    return "\n".join(lines) + "\n"
