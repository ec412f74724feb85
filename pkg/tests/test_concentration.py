import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapse_audit.concentration import (
    HEURISTIC_COLLAPSE,
    HOLISTIC,
    UNCHARACTERIZED,
    Thresholds,
    class_concentration,
    concentration_report,
    diagnose,
    feature_concentration,
    markdown_table,
    normalize,
)
from collapse_audit.errors import UndefinedSharesError
from collapse_audit.surrogate import DegenerateClass, SurrogateFit


def make_fit(importance, names, cv=0.9, cls="Equities"):
    return SurrogateFit(cls, "forest", {}, cv, cv, np.asarray(importance, float), list(names), [], cv < 0.5)


class TestNormalize:
    def test_shares(self):
        assert np.allclose(normalize([3, 1, 0]).s, [0.75, 0.25, 0.0])

    def test_all_zero(self):
        with pytest.raises(UndefinedSharesError):
            normalize([0, 0, 0])

    def test_negative(self):
        with pytest.raises(ValueError):
            normalize([1, -1])

    def test_grouping(self):
        sh = normalize([1, 1, 2], ["a", "r=x", "r=y"], {"a": "a", "r=x": "r", "r=y": "r"})
        assert sh.grouped_shares == pytest.approx({"a": 0.25, "r": 0.75})


class TestFeatureConcentration:
    @pytest.mark.parametrize(
        "w,expected", [([1, 0, 0], 1.0), ([1, 1, 1, 1], 0.25), ([3, 1], 0.625), ([2, 2, 0, 0], 0.5)]
    )
    def test_known_values(self, w, expected):
        assert feature_concentration(normalize(w).s) == pytest.approx(expected)

    def test_uniform_is_one_over_k(self):
        for k in (1, 5, 32):
            assert feature_concentration(normalize(np.ones(k)).s) == pytest.approx(1 / k)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=12).filter(lambda w: sum(w) > 1e-3), st.floats(0.1, 100))
    def test_scale_and_permutation_invariant(self, w, c):
        fc = feature_concentration(normalize(w).s)
        assert feature_concentration(normalize(np.asarray(w) * c).s) == pytest.approx(fc)
        assert feature_concentration(normalize(w[::-1]).s) == pytest.approx(fc)
        assert 1 / len(w) - 1e-12 <= fc <= 1 + 1e-12

    def test_grouping_never_lowers(self):
        rng = np.random.default_rng(0)
        names = [f"c{j}" for j in range(8)]
        origin = {n: f"v{j // 3}" for j, n in enumerate(names)}
        for _ in range(20):
            sh = normalize(rng.uniform(size=8), names, origin)
            assert feature_concentration(sh.grouped_shares) >= feature_concentration(sh.s) - 1e-12


class TestDiagnose:
    @pytest.mark.parametrize(
        "fc,r2,expected",
        [(0.78, 0.88, HEURISTIC_COLLAPSE), (0.9, 0.05, UNCHARACTERIZED), (0.1, 0.9, HOLISTIC), (0.5, 0.5, HEURISTIC_COLLAPSE)],
    )
    def test_rule(self, fc, r2, expected):
        assert diagnose(fc, r2) == expected

    def test_custom_thresholds(self):
        assert diagnose(0.4, 0.6, Thresholds(r2_min=0.7, fc_high=0.3)) == UNCHARACTERIZED
        assert diagnose(0.4, 0.8, Thresholds(r2_min=0.7, fc_high=0.3)) == HEURISTIC_COLLAPSE


class TestClassConcentration:
    origin = {"age": "age", "risk=Low": "risk", "risk=High": "risk", "income": "income"}

    def test_split_one_hot_gives_grouped_collapse(self):
        fit = make_fit([0.02, 0.5, 0.46, 0.02], self.origin)
        row = class_concentration(fit, self.origin)
        assert row.fc_column < 0.5 and row.diagnosis == HOLISTIC
        assert row.fc_grouped > 0.9 and row.diagnosis_grouped == HEURISTIC_COLLAPSE
        assert row.top_features[0][0] == "risk"

    def test_degenerate_target(self):
        row = class_concentration(DegenerateClass("Cash & Savings", "constant"), self.origin)
        assert row.diagnosis == UNCHARACTERIZED and row.fc_column is None

    def test_zero_importance(self):
        row = class_concentration(make_fit([0, 0, 0, 0], self.origin), self.origin)
        assert row.fc_column is None and row.note

    def test_low_fidelity(self):
        row = class_concentration(make_fit([1, 0, 0, 0], self.origin, cv=0.1), self.origin)
        assert row.reliability == "low_fidelity" and row.diagnosis == UNCHARACTERIZED

    def test_table(self):
        fits = {"Equities": make_fit([1, 0, 0, 0], self.origin), "Cash & Savings": DegenerateClass("Cash & Savings", "c")}
        rep = concentration_report(fits, self.origin)
        text = markdown_table({"baseline": rep})
        assert "| Equities | age | 100.0% | 1.000 | 0.900 | heuristic_collapse |" in text
        assert "| Cash & Savings | --- | --- | --- | --- | uncharacterized |" in text
