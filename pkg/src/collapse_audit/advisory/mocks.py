"""Planted-oracle advisors with known decision functions.

Each mock maps a profile to a response body that then goes through the
same parser as real advisor output, so every mock recommendation satisfies
the Recommendation invariants by construction.
"""

from __future__ import annotations

import json
from typing import Callable

import numpy as np

from ..sampling import PROFILE_FIELDS, ClientProfile, SamplingPlan, default_plan
from .catalog import ProductCatalog
from .prompts import WEB_SEARCH, normalize_condition
from .recommendation import Recommendation, parse_recommendation

EQUITY = "Index Funds - S&P 500"
BONDS = "Short-Term Treasury Bonds"
CASH = "High-Yield Savings Account"

DEFAULT_EQUITY_BY_RISK = {
    "Conservative": 20.0,
    "Moderate": 40.0,
    "Moderately Aggressive": 60.0,
    "Aggressive": 80.0,
}

# products the holistic mock spreads over; at least one per asset class
HOLISTIC_PRODUCTS = (
    "High-Yield Savings Account",
    "Certificates of Deposit (CDs)",
    "Short-Term Treasury Bonds",
    "Investment-Grade Corporate Bonds",
    "Index Funds - S&P 500",
    "Index Funds - International Stocks",
    "Growth Stocks",
    "Target-Date Retirement Funds",
    "Real Estate Investment Trusts (REITs)",
    "Commodities/Gold",
    "529 College Savings Plan",
    "Health Savings Account (HSA)",
)

MOCK_NAMES = (
    "planted_heuristic_categorical",
    "planted_heuristic_continuous",
    "planted_holistic",
    "planted_noise",
)

SEARCH_NOTE = " Current interest rates, recent market performance and economic conditions were reviewed before allocating."


def _item(name: str, catalog: ProductCatalog, pct: float, why: str) -> dict:
    return {"name": name, "type": catalog.class_of[name], "allocation_pct": pct, "rationale": why}


def _finish(body: dict, profile: ClientProfile, catalog: ProductCatalog, condition: str) -> Recommendation:
    condition = normalize_condition(condition)
    if condition == WEB_SEARCH:
        body["rationale"] += SEARCH_NOTE
    raw = json.dumps(body)
    return parse_recommendation(
        raw, catalog, profile_id=profile.profile_id, condition=condition, tool_use_observed=condition == WEB_SEARCH
    )


def heuristic_categorical(profile, catalog, condition, equity_by_risk=None, bond_cash_ratio=(3.0, 1.0)):
    table = dict(DEFAULT_EQUITY_BY_RISK if equity_by_risk is None else equity_by_risk)
    equity = float(table[profile.risk_tolerance])
    rest = 100.0 - equity
    bonds = rest * bond_cash_ratio[0] / (bond_cash_ratio[0] + bond_cash_ratio[1])
    cash = rest - bonds
    items = [
        _item(EQUITY, catalog, equity, "Equity share set by stated risk tolerance."),
        _item(BONDS, catalog, bonds, "Remainder split toward bonds."),
        _item(CASH, catalog, cash, "Remainder split toward cash."),
    ]
    body = {
        "recommended_products": [i for i in items if i["allocation_pct"] > 0],
        "rationale": f"Risk tolerance is {profile.risk_tolerance}, so equities receive {equity:g}%.",
    }
    return _finish(body, profile, catalog, condition)


def heuristic_continuous(profile, catalog, condition):
    equity = float(min(max(100.0 - profile.age, 0.0), 100.0))
    items = [
        _item(EQUITY, catalog, equity, "Equity share is 100 minus age."),
        _item(BONDS, catalog, 100.0 - equity, "Remainder to bonds."),
    ]
    body = {
        "recommended_products": [i for i in items if i["allocation_pct"] > 0],
        "rationale": f"The client is {profile.age:g}, so {equity:g}% goes to equities and the rest to bonds.",
    }
    return _finish(body, profile, catalog, condition)


class HolisticMap:
    """Fixed linear map from ten standardized profile features to product allocations.

    Features are standardized with the mean and population standard
    deviation of each dimension's grid (categorical levels by ordinal
    index), so the map depends on the profile alone. Coefficient columns sum
    to zero across products, which keeps the total at exactly 100, and the
    scale is capped so no allocation can go negative anywhere on the grid.
    """

    def __init__(self, plan: SamplingPlan | None = None, seed: int = 2024, products=HOLISTIC_PRODUCTS, headroom: float = 0.9):
        plan = plan or default_plan()
        self.products = tuple(products)
        self.fields = PROFILE_FIELDS
        self.center = {}
        self.scale = {}
        zmax = []
        for name in self.fields:
            dim = plan.dimension(name)
            vals = (
                np.asarray(dim.values, dtype=float)
                if dim.kind == "continuous"
                else np.arange(len(dim.values), dtype=float)
            )
            self.center[name] = float(vals.mean())
            self.scale[name] = float(vals.std())
            zmax.append(float(np.max(np.abs(vals - vals.mean())) / vals.std()))
        self.plan = plan
        rng = np.random.default_rng(seed)
        p, f = len(self.products), len(self.fields)
        g = rng.choice([-1.0, 1.0], size=(p, f)) * rng.uniform(0.5, 1.0, size=(p, f))
        g -= g.mean(axis=0, keepdims=True)
        self.base = 100.0 / p
        worst = np.abs(g) @ np.asarray(zmax)
        self.coef = g * (headroom * self.base / worst.max())

    def features(self, profile: ClientProfile) -> np.ndarray:
        z = []
        for name in self.fields:
            dim = self.plan.dimension(name)
            v = getattr(profile, name)
            x = float(v) if dim.kind == "continuous" else float(dim.values.index(v))
            z.append((x - self.center[name]) / self.scale[name])
        return np.asarray(z)

    def allocations(self, profile: ClientProfile) -> np.ndarray:
        a = np.maximum(self.base + self.coef @ self.features(profile), 0.0)
        return a * (100.0 / a.sum())


def holistic(profile, catalog, condition, mapping: HolisticMap):
    alloc = mapping.allocations(profile)
    items = [_item(name, catalog, float(a), "Weighted blend of all profile factors.") for name, a in zip(mapping.products, alloc)]
    body = {"recommended_products": items, "rationale": "Allocation integrates age, income, savings, debt, dependents and all stated preferences."}
    return _finish(body, profile, catalog, condition)


def noise(profile, catalog, condition, seed: int = 0, max_products: int = 8):
    rng = np.random.default_rng([seed, profile.profile_id, 0 if normalize_condition(condition) != WEB_SEARCH else 1])
    k = int(rng.integers(2, max_products + 1))
    picks = sorted(rng.choice(len(catalog.products), size=k, replace=False))
    raw = np.round(rng.dirichlet(np.ones(k)) * 100.0, 2)
    raw[-1] = round(100.0 - float(raw[:-1].sum()), 2)
    if raw[-1] < 0:
        raw[-1] = 0.0
        raw[0] = round(100.0 - float(raw[1:].sum()), 2)
    items = [_item(catalog.products[i], catalog, float(a), "Random draw.") for i, a in zip(picks, raw)]
    body = {"recommended_products": items, "rationale": "Allocations drawn at random."}
    return _finish(body, profile, catalog, condition)


def make_mock(
    name: str, catalog: ProductCatalog, params: dict | None = None, plan: SamplingPlan | None = None
) -> Callable[[ClientProfile, str], Recommendation]:
    """Return ``advise(profile, condition) -> Recommendation`` for a planted mock."""
    params = dict(params or {})
    if name == "planted_heuristic_categorical":
        ratio = tuple(params.get("bond_cash_ratio", (3.0, 1.0)))
        table = params.get("equity_by_risk")
        return lambda p, c: heuristic_categorical(p, catalog, c, table, ratio)
    if name == "planted_heuristic_continuous":
        return lambda p, c: heuristic_continuous(p, catalog, c)
    if name == "planted_holistic":
        mapping = HolisticMap(plan, seed=int(params.get("seed", 2024)))
        return lambda p, c: holistic(p, catalog, c, mapping)
    if name == "planted_noise":
        seed = int(params.get("seed", 0))
        return lambda p, c: noise(p, catalog, c, seed=seed)
    raise ValueError(f"unknown mock advisor {name!r}; choose from {MOCK_NAMES}")
