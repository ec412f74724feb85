"""Run configuration loaded from YAML or JSON and validated up front."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .advisory.catalog import ProductCatalog, make_catalog
from .advisory.http import ChatEndpoint
from .advisory.mocks import MOCK_NAMES
from .advisory.prompts import BASELINE, CONDITIONS, WEB_SEARCH, normalize_condition
from .errors import ConfigError
from .features import DERIVED_FEATURES, DerivedFeatureConfig
from .sampling import INCOME_GRID, SamplingPlan, profile_dimensions
from .surrogate import HyperparameterGrid


class _Strict(BaseModel):
    # defaults go through validation too, so a config read back from config.json has identical types
    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)


class SamplingConfig(_Strict):
    n_samples: int = Field(1000, ge=1)
    orthogonality_threshold: float = Field(0.07, gt=0, le=1)
    max_retries: int = Field(20, ge=0)
    income_grid: tuple[float, ...] = INCOME_GRID


class AdvisorConfig(_Strict):
    kind: Literal["mock", "http"] = "mock"
    mock: Optional[str] = "planted_heuristic_continuous"
    params: dict = Field(default_factory=dict)
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout_s: float = Field(120.0, gt=0)
    max_retries: int = Field(3, ge=0)
    backoff_s: float = Field(1.0, ge=0)
    extra_body: dict = Field(default_factory=dict)
    max_in_flight: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "mock" and self.mock not in MOCK_NAMES:
            raise ValueError(f"unknown mock {self.mock!r}; choose from {MOCK_NAMES}")
        if self.kind == "http" and not (self.endpoint and self.model):
            raise ValueError("http advisors need endpoint and model")
        return self

    def endpoint_spec(self) -> ChatEndpoint:
        return ChatEndpoint(
            self.endpoint, self.model, self.api_key_env, self.timeout_s, self.max_retries, self.backoff_s, dict(self.extra_body)
        )


class JudgeConfig(_Strict):
    name: str
    kind: Literal["mock", "http"] = "mock"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout_s: float = Field(120.0, gt=0)
    max_retries: int = Field(3, ge=0)
    backoff_s: float = Field(1.0, ge=0)
    extra_body: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "http" and not (self.endpoint and self.model):
            raise ValueError(f"judge {self.name!r}: http judges need endpoint and model")
        return self

    def endpoint_spec(self) -> ChatEndpoint:
        return ChatEndpoint(
            self.endpoint, self.model, self.api_key_env, self.timeout_s, self.max_retries, self.backoff_s, dict(self.extra_body)
        )


class JudgingConfig(_Strict):
    n_clients: int = Field(100, ge=1)
    judges: tuple[JudgeConfig, ...] = (JudgeConfig(name="length_a"), JudgeConfig(name="length_b"))
    max_in_flight: int = Field(1, ge=1)

    @field_validator("judges")
    @classmethod
    def _unique(cls, v):
        names = [j.name for j in v]
        if len(set(names)) != len(names):
            raise ValueError("judge names must be unique")
        return v


class FeatureConfig(_Strict):
    enabled: tuple[str, ...] = DERIVED_FEATURES
    education_max_age: float = 55
    education_min_dependents: float = 1
    retirement_min_age: float = 50
    retirement_timelines: tuple[str, ...] = ("15-30 Years", "30+ Years")

    def derived(self) -> DerivedFeatureConfig:
        return DerivedFeatureConfig(**self.model_dump())


class GridConfig(_Strict):
    ridge_lambdas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    forest_trees: tuple[int, ...] = (100, 300)
    forest_depths: tuple[Optional[int], ...] = (4, 8, None)
    forest_min_leaf: tuple[int, ...] = (2, 5)
    forest_max_features: Optional[int] = None
    cv_folds: int = Field(5, ge=2)

    def grid(self, seed: int) -> HyperparameterGrid:
        return HyperparameterGrid(**self.model_dump(), seed=seed)


class ThresholdConfig(_Strict):
    r2_min: float = 0.5
    fc_high: float = Field(0.5, gt=0, le=1)
    exact_max_n: int = Field(20, ge=0, le=60)


class Seeds(_Strict):
    sampling: int = 42
    surrogate: int = 0
    judge: int = 7


class RunConfig(_Strict):
    seeds: Seeds = Seeds()
    sampling: SamplingConfig = SamplingConfig()
    advisors: dict[str, AdvisorConfig] = Field(
        default_factory=lambda: {BASELINE: AdvisorConfig(), WEB_SEARCH: AdvisorConfig()}
    )
    asset_class_mapping: Optional[dict[str, str]] = None
    features: FeatureConfig = FeatureConfig()
    grid: GridConfig = GridConfig()
    thresholds: ThresholdConfig = ThresholdConfig()
    judging: JudgingConfig = JudgingConfig()
    surrogate_targets: Literal["asset_class", "product"] = "asset_class"
    max_failure_fraction: float = Field(0.05, ge=0, le=1)
    n_jobs: int = Field(1, ge=1)
    run_dir: Optional[str] = None

    @field_validator("advisors")
    @classmethod
    def _conditions(cls, v):
        out = {normalize_condition(k): a for k, a in v.items()}
        if not out:
            raise ValueError("at least one advisor condition is required")
        return out

    @model_validator(mode="after")
    def _mapping(self):
        if self.asset_class_mapping is not None:
            make_catalog(self.asset_class_mapping)
        return self

    def plan(self) -> SamplingPlan:
        s = self.sampling
        return SamplingPlan(
            profile_dimensions(s.income_grid),
            n_samples=s.n_samples,
            seed=self.seeds.sampling,
            orthogonality_threshold=s.orthogonality_threshold,
            max_retries=s.max_retries,
        )

    def catalog(self) -> ProductCatalog:
        return make_catalog(self.asset_class_mapping)

    def conditions(self) -> list[str]:
        return [c for c in CONDITIONS if c in self.advisors]

    def canonical_json(self) -> str:
        data = self.model_dump(mode="json", exclude={"run_dir"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def check_credentials(self) -> list[str]:
        """Names of credential variables referenced by the config but absent from the environment."""
        names = [a.api_key_env for a in self.advisors.values() if a.kind == "http" and a.api_key_env]
        names += [j.api_key_env for j in self.judging.judges if j.kind == "http" and j.api_key_env]
        return sorted({n for n in names if not os.environ.get(n)})

    def with_overrides(self, seed: int | None = None, advisor: str | None = None, condition: str | None = None) -> "RunConfig":
        """Copy with the sampling seed and/or one or all advisors replaced (``http`` or ``mock:<name>``)."""
        data = self.model_dump()
        if seed is not None:
            data["seeds"]["sampling"] = seed
        if advisor is not None:
            targets = [normalize_condition(condition)] if condition else list(CONDITIONS)
            for cond in targets:
                current = dict(data["advisors"].get(cond) or AdvisorConfig().model_dump())
                if advisor == "http":
                    current["kind"] = "http"
                elif advisor.startswith("mock:"):
                    current.update(kind="mock", mock=advisor.split(":", 1)[1])
                else:
                    raise ConfigError(f"--advisor must be 'http' or 'mock:<name>', got {advisor!r}")
                data["advisors"][cond] = current
        return load_config_dict(data)


def load_config_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read a YAML or JSON config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return load_config_dict(data or {})

