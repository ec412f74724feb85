from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass

from ..errors import DuplicateProduct, SchemaViolation, SumViolation, UnknownProduct
from .catalog import ProductCatalog
from .prompts import BASELINE

SUM_TOLERANCE = 0.01
RENORMALIZE_BAND = 0.5


@dataclass
class ProductAllocation:
    name: str
    type: str
    allocation_pct: float
    rationale: str
    # percent as emitted by the advisor, before any renormalization
    stated_pct: float


@dataclass
class Recommendation:
    profile_id: int
    condition: str
    recommended_products: list[ProductAllocation]
    rationale: str
    tool_use_observed: bool = False
    raw_response: str = ""
    renormalized: bool = False

    @property
    def total_pct(self) -> float:
        return math.fsum(p.allocation_pct for p in self.recommended_products)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Recommendation":
        data = dict(data)
        data["recommended_products"] = [ProductAllocation(**p) for p in data["recommended_products"]]
        return cls(**data)

    def validate(self, catalog: ProductCatalog) -> None:
        seen = set()
        for p in self.recommended_products:
            if p.name not in catalog.products:
                raise UnknownProduct(f"unknown product {p.name!r}", "name", p.name)
            if p.name in seen:
                raise DuplicateProduct(f"duplicate product {p.name!r}", "name", p.name)
            if not p.allocation_pct >= 0:
                raise SchemaViolation("negative allocation", "allocation_pct", p.allocation_pct)
            seen.add(p.name)
        if abs(self.total_pct - 100.0) > SUM_TOLERANCE:
            raise SumViolation(f"allocations sum to {self.total_pct:g}, not 100", "allocation_pct", self.total_pct)


_FENCE = re.compile(r"^\s*```(?:json)?\s*(.*?)\s*```\s*$", re.S)


def _load(raw: str):
    if isinstance(raw, (bytes, bytearray)):
        raw = raw.decode("utf-8", "replace")
    m = _FENCE.match(raw)
    try:
        return json.loads(m.group(1) if m else raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise SchemaViolation(f"response is not valid JSON: {exc}", "<body>", raw[:200] if raw else raw) from None


def _require(obj: dict, key: str, types, where: str):
    if key not in obj:
        raise SchemaViolation(f"missing field {where}{key}", f"{where}{key}")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise SchemaViolation(f"field {where}{key} has wrong type", f"{where}{key}", value)
    return value


def parse_recommendation(
    raw: str,
    catalog: ProductCatalog,
    profile_id: int = -1,
    condition: str = BASELINE,
    tool_use_observed: bool = False,
) -> Recommendation:
    """Validate an advisor response body against the output schema and catalog.

    Sums within ``SUM_TOLERANCE`` of 100 are accepted as is. Sums off by at
    most ``RENORMALIZE_BAND`` are rescaled to 100 and flagged; anything else
    raises :class:`SumViolation`.
    """
    body = _load(raw)
    if not isinstance(body, dict):
        raise SchemaViolation("response must be a JSON object", "<body>", type(body).__name__)
    items = _require(body, "recommended_products", list, "")
    rationale = _require(body, "rationale", str, "")
    if not items:
        raise SchemaViolation("recommended_products is empty", "recommended_products", [])

    products: list[ProductAllocation] = []
    seen: set[str] = set()
    for i, item in enumerate(items):
        where = f"recommended_products[{i}]."
        if not isinstance(item, dict):
            raise SchemaViolation(f"{where[:-1]} is not an object", where[:-1], item)
        name = _require(item, "name", str, where)
        kind = _require(item, "type", str, where)
        pct = _require(item, "allocation_pct", (int, float), where)
        note = _require(item, "rationale", str, where)
        if not math.isfinite(pct) or pct < 0:
            raise SchemaViolation(f"{where}allocation_pct must be finite and >= 0", f"{where}allocation_pct", pct)
        resolved = catalog.resolve(name)
        if resolved is None:
            raise UnknownProduct(f"unknown product {name!r}", f"{where}name", name)
        if resolved in seen:
            raise DuplicateProduct(f"product {resolved!r} listed twice", f"{where}name", resolved)
        seen.add(resolved)
        products.append(ProductAllocation(resolved, kind, float(pct), note, float(pct)))

    total = math.fsum(p.allocation_pct for p in products)
    renormalized = False
    if abs(total - 100.0) > SUM_TOLERANCE:
        if abs(total - 100.0) > RENORMALIZE_BAND or total <= 0:
            raise SumViolation(f"allocations sum to {total:g}, not 100", "allocation_pct", total)
        for p in products:
            p.allocation_pct = p.stated_pct * 100.0 / total
        renormalized = True

    return Recommendation(
        profile_id=profile_id,
        condition=condition,
        recommended_products=products,
        rationale=rationale,
        tool_use_observed=tool_use_observed,
        raw_response=raw if isinstance(raw, str) else json.dumps(body),
        renormalized=renormalized,
    )
