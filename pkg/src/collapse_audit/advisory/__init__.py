"""Product catalog, prompts, response parsing and advisor collection."""

from .catalog import ASSET_CLASSES, PRODUCTS, ProductCatalog, class_slug, make_catalog
from .collect import CollectResult, RecommendationStore, collect
from .http import ChatClient, ChatEndpoint, HttpAdvisor
from .mocks import MOCK_NAMES, HolisticMap, make_mock
from .prompts import BASELINE, CONDITIONS, WEB_SEARCH, build_prompt, normalize_condition, recommendation_schema
from .recommendation import ProductAllocation, Recommendation, parse_recommendation

__all__ = [
    "ASSET_CLASSES",
    "BASELINE",
    "CONDITIONS",
    "ChatClient",
    "ChatEndpoint",
    "CollectResult",
    "HolisticMap",
    "HttpAdvisor",
    "MOCK_NAMES",
    "PRODUCTS",
    "ProductAllocation",
    "ProductCatalog",
    "Recommendation",
    "RecommendationStore",
    "WEB_SEARCH",
    "build_prompt",
    "class_slug",
    "collect",
    "make_catalog",
    "make_mock",
    "normalize_condition",
    "parse_recommendation",
    "recommendation_schema",
]
