import dataclasses

import numpy as np
import pytest

from collapse_audit.errors import UnseenCategoryError
from collapse_audit.features import (
    DERIVED_FEATURES,
    DerivedFeatureConfig,
    Encoder,
    build_matrix,
    derive,
    encoder_for_plan,
    fit_encoder,
)
from collapse_audit.sampling import RISK_LEVELS


class TestDerive:
    def test_savings_rate(self, profiles):
        p = dataclasses.replace(profiles[0], annual_income=100_000, total_savings=50_000)
        assert derive(p)["savings_rate"] == 0.5

    def test_zero_debt(self, profiles):
        p = dataclasses.replace(profiles[0], annual_income=15_000, outstanding_debt=0)
        assert derive(p)["debt_to_income"] == 0.0

    def test_education_goal(self, profiles):
        p = dataclasses.replace(profiles[0], age=30, dependents=2)
        assert derive(p)["has_education_goal"] == 1.0
        assert derive(dataclasses.replace(p, dependents=0))["has_education_goal"] == 0.0

    def test_retirement_goal(self, profiles):
        p = dataclasses.replace(profiles[0], age=30, investment_timeline="1-5 Years")
        assert derive(p)["has_retirement_goal"] == 0.0
        assert derive(dataclasses.replace(p, age=60))["has_retirement_goal"] == 1.0

    def test_subset(self, profiles):
        row = derive(profiles[0], DerivedFeatureConfig(enabled=("savings_rate",)))
        assert "savings_rate" in row and "liquid_assets" not in row

    def test_unknown_feature(self):
        with pytest.raises(ValueError):
            DerivedFeatureConfig(enabled=("wealth_vibes",))


class TestEncoder:
    def test_shape_and_provenance(self, profiles, plan):
        fm = build_matrix(profiles, plan)
        assert fm.k == 10 + 22
        assert len(set(fm.column_origin.values())) == 15
        groups = fm.groups()
        assert [fm.column_names[j] for j in groups["risk_tolerance"]] == [f"risk_tolerance={lvl}" for lvl in RISK_LEVELS]

    def test_standardized(self, profiles, plan):
        fm = build_matrix(profiles, plan)
        n_num = len(fm.encoder.numeric)
        X = fm.values[:, :n_num]
        assert np.all(np.abs(X.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(X.std(axis=0) - 1) < 1e-9)

    def test_one_hot_rows(self, profiles, plan):
        fm = build_matrix(profiles, plan)
        for cols in fm.groups().values():
            if len(cols) > 1:
                assert np.all(fm.values[:, cols].sum(axis=1) == 1.0)

    def test_population_sd(self):
        enc = fit_encoder([{"age": 25}, {"age": 75}], ["age"], {})
        assert enc.transform([{"age": 25}, {"age": 75}]).values[:, 0].tolist() == [-1.0, 1.0]

    def test_zero_variance(self):
        rows = [{"dependents": 2}, {"dependents": 2}, {"dependents": 2}]
        fm = fit_encoder(rows, ["dependents"], {}).transform(rows)
        assert np.all(fm.values == 0)
        assert fm.warnings

    def test_unseen_level(self):
        enc = fit_encoder([{"x": 1, "c": "a"}, {"x": 2, "c": "b"}], ["x"], {"c": ["a", "b"]})
        with pytest.raises(UnseenCategoryError):
            enc.transform([{"x": 1, "c": "z"}])

    def test_unobserved_level_kept(self, profiles, plan):
        few = [p for p in profiles if p.risk_tolerance != "Aggressive"][:50]
        fm = build_matrix(few, plan)
        assert "risk_tolerance=Aggressive" in fm.column_names
        assert np.all(fm.values[:, fm.column_names.index("risk_tolerance=Aggressive")] == 0)

    def test_round_trip(self, profiles, plan):
        rows = [derive(p) for p in profiles[:100]]
        enc = encoder_for_plan(rows, plan)
        again = Encoder.from_dict(enc.to_dict())
        assert np.array_equal(enc.transform(rows).values, again.transform(rows).values)

    def test_importance_grouping_conserves_mass(self, profiles, plan, rng):
        fm = build_matrix(profiles[:50], plan)
        w = rng.random(fm.k)
        grouped = {}
        for name, v in zip(fm.column_names, w):
            grouped[fm.column_origin[name]] = grouped.get(fm.column_origin[name], 0.0) + v
        assert sum(grouped.values()) == pytest.approx(w.sum(), abs=1e-12)
        assert set(grouped) == set(fm.encoder.numeric) | set(fm.encoder.categorical)

    def test_derived_names(self, plan, profiles):
        fm = build_matrix(profiles[:20], plan)
        assert all(name in fm.column_names for name in DERIVED_FEATURES)
