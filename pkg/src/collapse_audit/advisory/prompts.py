"""Advisor prompt templates and the structured-output schema."""

from __future__ import annotations

from ..sampling import ClientProfile
from .catalog import ProductCatalog

BASELINE = "baseline"
WEB_SEARCH = "web_search_required"
CONDITIONS = (BASELINE, WEB_SEARCH)

BASELINE_TEMPLATE = """\
You are an experienced financial advisor. Select investment products from the provided list and allocate across them based on the client's profile. Allocations must sum to 100%.

Client profile:
{profile}

{products}

Provide a rationale explaining how the client's profile drove your allocation decisions."""

WEB_SEARCH_ADDENDUM = (
    "You have access to a web_search tool to look up current financial information, market data, "
    "interest rates, and investment research. Use it to inform your recommendations with up-to-date "
    "information. You MUST use web_search to look up: (1) current interest rates, (2) recent market "
    "performance, and (3) current economic conditions before providing advice."
)

PROFILE_LABELS = (
    ("age", "Age", "{:g} years"),
    ("annual_income", "Annual Income", "${:,.0f}"),
    ("total_savings", "Total Savings", "${:,.0f}"),
    ("outstanding_debt", "Outstanding Debt", "${:,.0f}"),
    ("dependents", "Dependents", "{:g}"),
    ("risk_tolerance", "Risk Tolerance", "{}"),
    ("investment_experience", "Investment Experience", "{}"),
    ("investment_timeline", "Investment Timeline", "{}"),
    ("education", "Education", "{}"),
    ("marital_status", "Marital Status", "{}"),
)


def normalize_condition(condition: str) -> str:
    if condition in ("web_search", WEB_SEARCH):
        return WEB_SEARCH
    if condition == BASELINE:
        return BASELINE
    raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")


def render_profile(profile: ClientProfile) -> str:
    return "\n".join(f"{label}: {fmt.format(getattr(profile, key))}" for key, label, fmt in PROFILE_LABELS)


def render_products(catalog: ProductCatalog) -> str:
    lines = ["Available Investment Products:"]
    lines += [f"{i}. {name}" for i, name in enumerate(catalog.products, start=1)]
    return "\n".join(lines)


def build_prompt(profile: ClientProfile, catalog: ProductCatalog, condition: str = BASELINE) -> str:
    text = BASELINE_TEMPLATE.format(profile=render_profile(profile), products=render_products(catalog))
    if normalize_condition(condition) == WEB_SEARCH:
        text += "\n\n" + WEB_SEARCH_ADDENDUM
    return text


def recommendation_schema(catalog: ProductCatalog) -> dict:
    """JSON schema for the structured output requested from HTTP advisors."""
    item = {
        "type": "object",
        "properties": {
            "name": {"type": "string", "enum": list(catalog.products)},
            "type": {"type": "string"},
            "allocation_pct": {"type": "number"},
            "rationale": {"type": "string"},
        },
        "required": ["name", "type", "allocation_pct", "rationale"],
        "additionalProperties": False,
    }
    return {
        "type": "object",
        "properties": {
            "recommended_products": {"type": "array", "items": item},
            "rationale": {"type": "string"},
        },
        "required": ["recommended_products", "rationale"],
        "additionalProperties": False,
    }
