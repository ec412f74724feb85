import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapse_audit.advisory import BASELINE, make_catalog, make_mock
from collapse_audit.advisory.recommendation import ProductAllocation, Recommendation
from collapse_audit.portfolio import (
    bias_index,
    condition_metrics,
    hhi,
    markdown_table,
    mean_pairwise_jaccard,
    pairwise_jaccard,
    per_client_jaccard,
    rounding_bias,
    to_weights,
    weighted_jaccard,
)

weights = st.lists(st.floats(0, 1), min_size=5, max_size=5)


def rec(pid, allocs):
    items = [ProductAllocation(n, "t", v, "", v) for n, v in allocs.items()]
    return Recommendation(pid, BASELINE, items, "why")


class TestHHI:
    def test_reference_values(self):
        assert hhi(np.full(20, 0.05)) == pytest.approx(0.05)
        assert hhi([1.0] + [0.0] * 19) == 1.0
        assert hhi([0.5, 0.5]) == 0.5


class TestJaccard:
    def test_worked_example(self):
        assert weighted_jaccard([0.5, 0.5, 0], [0.3, 0.3, 0.4]) == pytest.approx(0.6 / 1.4)
        assert weighted_jaccard([0.6, 0.4, 0], [0.4, 0.4, 0.2]) == pytest.approx(0.8 / 1.2)

    def test_identity_and_disjoint(self):
        p = np.array([0.2, 0.3, 0.5])
        assert weighted_jaccard(p, p) == 1.0
        assert weighted_jaccard([1, 0], [0, 1]) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(weights, weights)
    def test_symmetric_and_bounded(self, p, q):
        j = weighted_jaccard(p, q)
        assert j == weighted_jaccard(q, p)
        assert 0.0 <= j <= 1.0

    @settings(max_examples=60, deadline=None)
    @given(weights, weights, st.integers(0, 4), st.floats(0.01, 1))
    def test_moving_toward_raises_similarity(self, p, q, k, step):
        p, q = np.array(p), np.array(q)
        if p[k] == q[k] or (p.sum() == 0 and q.sum() == 0):
            return
        moved = p.copy()
        moved[k] += step * (q[k] - p[k])
        assert weighted_jaccard(moved, q) >= weighted_jaccard(p, q) - 1e-12

    def test_pairwise_matches_loop(self, rng):
        W = rng.dirichlet(np.ones(6), size=9)
        expected = [weighted_jaccard(W[i], W[j]) for i, j in itertools.combinations(range(9), 2)]
        assert np.allclose(pairwise_jaccard(W), expected, atol=1e-14)
        per = [np.mean([weighted_jaccard(W[i], W[j]) for j in range(9) if j != i]) for i in range(9)]
        assert np.allclose(per_client_jaccard(W), per, atol=1e-14)

    def test_row_order_invariant(self, rng):
        W = rng.dirichlet(np.ones(5), size=30)
        assert mean_pairwise_jaccard(W) == mean_pairwise_jaccard(W[rng.permutation(30)])

    def test_categorical_mock_closed_form(self, profiles, catalog):
        # weights per risk level: equity e, then the rest split 3:1 between bonds and cash
        levels = {"Conservative": 0.2, "Moderate": 0.4, "Moderately Aggressive": 0.6, "Aggressive": 0.8}
        vec = {k: np.array([e, 0.75 * (1 - e), 0.25 * (1 - e)]) for k, e in levels.items()}
        counts = {k: sum(p.risk_tolerance == k for p in profiles) for k in levels}
        n = len(profiles)
        total = sum(math.comb(c, 2) for c in counts.values())
        for a, b in itertools.combinations(levels, 2):
            j = np.minimum(vec[a], vec[b]).sum() / np.maximum(vec[a], vec[b]).sum()
            total += counts[a] * counts[b] * j
        expected = total / math.comb(n, 2)
        advise = make_mock("planted_heuristic_categorical", catalog)
        W = np.array([to_weights(advise(p, BASELINE), catalog).weights for p in profiles])
        assert mean_pairwise_jaccard(W)[0] == pytest.approx(expected, abs=1e-12)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            mean_pairwise_jaccard(np.ones((1, 3)))


class TestRounding:
    @pytest.mark.parametrize("p5,b", [(1.0, 1.0), (0.96, 0.95), (0.20, 0.0), (0.0, -0.25)])
    def test_bias_index(self, p5, b):
        assert bias_index(p5) == pytest.approx(b)

    def test_counts_multiples(self):
        r = rounding_bias([25, 30, 33.3, 10.0000000001, 1.5])
        assert r.p5_hat == pytest.approx(0.6) and r.n == 5

    def test_empty(self):
        with pytest.raises(ValueError):
            rounding_bias([])

    def test_uniform_integers_sit_near_null(self, rng):
        r = rounding_bias(rng.integers(1, 101, 20000).astype(float))
        assert abs(r.b) < 0.02


class TestWeights:
    def test_class_mapping(self, catalog):
        pw = to_weights(rec(0, {"Index Funds - S&P 500": 50.0, "Short-Term Treasury Bonds": 50.0}), catalog)
        assert pw.weights.sum() == pytest.approx(1.0)
        assert pw.class_weights[catalog.classes.index("Equities")] == 0.5
        assert pw.class_weights[catalog.classes.index("Fixed Income")] == 0.5

    def test_categorical_aggressive(self, catalog, profiles):
        prof = next(p for p in profiles if p.risk_tolerance == "Aggressive")
        pw = to_weights(make_mock("planted_heuristic_categorical", catalog)(prof, BASELINE), catalog)
        assert pw.class_weights[catalog.classes.index("Equities")] == pytest.approx(0.8)

    def test_custom_mapping_changes_classes(self):
        mapping = dict(make_catalog().class_of)
        mapping["Growth Stocks"] = "Alternatives"
        cat = make_catalog(mapping)
        pw = to_weights(rec(0, {"Growth Stocks": 100.0}), cat)
        assert pw.class_weights[cat.classes.index("Alternatives")] == 1.0


class TestConditionMetrics:
    def test_summary_and_table(self, catalog):
        recs = [
            rec(2, {"Index Funds - S&P 500": 100.0}),
            rec(0, {"Index Funds - S&P 500": 50.0, "Growth Stocks": 50.0}),
            rec(1, {"Short-Term Treasury Bonds": 100.0}),
        ]
        m = condition_metrics(recs, catalog, BASELINE)
        assert m.profile_ids == [0, 1, 2]
        assert np.allclose(m.hhi_product, [0.5, 1.0, 1.0])
        assert np.allclose(m.hhi_class, [1.0, 1.0, 1.0])
        assert m.jaccard_mean == pytest.approx((1 / 3) / 3)
        d = m.to_dict()
        assert d["rounding_bias"]["p5_hat"] == 1.0
        comp = {"hhi": {"delta": -0.1, "cohen_d": -0.5, "stars": "**"}, "jaccard": {"delta": 0.01, "cohen_d": 0.1, "stars": ""}}
        text = markdown_table([("mock", d, comp)])
        assert "**-0.10**" in text and "| +0.01 |" in text
        assert "0.83 ± 0.29" in text
