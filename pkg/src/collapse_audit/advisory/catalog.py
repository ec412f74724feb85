from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

ASSET_CLASSES = (
    "Cash & Savings",
    "Fixed Income",
    "Equities",
    "Target-Date Funds",
    "Real Estate",
    "Alternatives",
    "Tax-Advantaged Accounts",
)

PRODUCTS = (
    "High-Yield Savings Account",
    "Money Market Funds",
    "Short-Term Treasury Bonds",
    "Long-Term Treasury Bonds",
    "Investment-Grade Corporate Bonds",
    "High-Yield Corporate Bonds",
    "Municipal Bonds",
    "Index Funds - S&P 500",
    "Index Funds - Total Stock Market",
    "Index Funds - International Stocks",
    "Index Funds - Small Cap Stocks",
    "Target-Date Retirement Funds",
    "Real Estate Investment Trusts (REITs)",
    "Dividend Growth Stocks",
    "Growth Stocks",
    "Commodities/Gold",
    "Cryptocurrency",
    "529 College Savings Plan",
    "Health Savings Account (HSA)",
    "Certificates of Deposit (CDs)",
)

DEFAULT_CLASS_OF = {
    "High-Yield Savings Account": "Cash & Savings",
    "Money Market Funds": "Cash & Savings",
    "Certificates of Deposit (CDs)": "Cash & Savings",
    "Short-Term Treasury Bonds": "Fixed Income",
    "Long-Term Treasury Bonds": "Fixed Income",
    "Investment-Grade Corporate Bonds": "Fixed Income",
    "High-Yield Corporate Bonds": "Fixed Income",
    "Municipal Bonds": "Fixed Income",
    "Index Funds - S&P 500": "Equities",
    "Index Funds - Total Stock Market": "Equities",
    "Index Funds - International Stocks": "Equities",
    "Index Funds - Small Cap Stocks": "Equities",
    "Dividend Growth Stocks": "Equities",
    "Growth Stocks": "Equities",
    "Target-Date Retirement Funds": "Target-Date Funds",
    "Real Estate Investment Trusts (REITs)": "Real Estate",
    "Commodities/Gold": "Alternatives",
    "Cryptocurrency": "Alternatives",
    "529 College Savings Plan": "Tax-Advantaged Accounts",
    "Health Savings Account (HSA)": "Tax-Advantaged Accounts",
}


@dataclass(frozen=True)
class ProductCatalog:
    products: tuple[str, ...] = PRODUCTS
    class_of: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_CLASS_OF))
    classes: tuple[str, ...] = ASSET_CLASSES

    def __post_init__(self):
        if len(self.products) != 20 or len(set(self.products)) != 20:
            raise ValueError("catalog must list 20 distinct products")
        missing = [p for p in self.products if p not in self.class_of]
        if missing:
            raise ValueError(f"products without an asset class: {missing}")
        bad = {p: c for p, c in self.class_of.items() if c not in self.classes}
        if bad:
            raise ValueError(f"unknown asset classes in mapping: {bad}")

    def index(self, name: str) -> int:
        return self.products.index(name)

    def resolve(self, name: str) -> str | None:
        """Catalog spelling of ``name``, tolerant to case and surrounding whitespace."""
        key = " ".join(name.split()).casefold()
        for p in self.products:
            if p.casefold() == key:
                return p
        return None

    def class_index(self) -> list[int]:
        return [self.classes.index(self.class_of[p]) for p in self.products]

    def products_in(self, asset_class: str) -> list[str]:
        return [p for p in self.products if self.class_of[p] == asset_class]


def class_slug(asset_class: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", asset_class.lower()).strip("_")


def make_catalog(class_of: Mapping[str, str] | None = None, products: Sequence[str] | None = None) -> ProductCatalog:
    return ProductCatalog(
        products=tuple(products) if products else PRODUCTS,
        class_of=dict(class_of) if class_of else dict(DEFAULT_CLASS_OF),
    )
