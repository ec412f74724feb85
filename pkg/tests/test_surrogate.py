import numpy as np
import pytest

from collapse_audit.advisory import BASELINE, make_mock
from collapse_audit.errors import DegenerateTargetError, SingularSystemError
from collapse_audit.features import build_matrix
from collapse_audit.portfolio import to_weights
from collapse_audit.surrogate import (
    DegenerateClass,
    HyperparameterGrid,
    ModelSpec,
    RandomForest,
    SurrogateFit,
    cv_r2,
    fit_all,
    grow_tree,
    ridge_fit,
    select,
)
from collapse_audit.surrogate.select import _grid_scores

SMALL_GRID = HyperparameterGrid(
    ridge_lambdas=(0.01, 1.0), forest_trees=(10, 25), forest_depths=(2, 4, None), forest_min_leaf=(1, 3), cv_folds=3
)


def ridge_oracle(X, y, lam):
    """Augmented normal equations with an unpenalized intercept column, solved densely."""
    A = np.column_stack([np.ones(len(X)), X])
    P = lam * np.eye(A.shape[1])
    P[0, 0] = 0.0
    sol = np.linalg.solve(A.T @ A + P, A.T @ y)
    return sol[0], sol[1:]


def brute_cart(X, y, idx, depth, max_depth, min_leaf, out):
    """Exhaustive best-split recursion in preorder; ties keep the first (feature, threshold) found."""
    yy = y[idx]
    if (max_depth is not None and depth == max_depth) or len(idx) < 2 * min_leaf or yy.var() <= 1e-15:
        out.append(("leaf", yy.mean()))
        return
    sse = ((yy - yy.mean()) ** 2).sum()
    best = (0.0, None, None)
    for f in range(X.shape[1]):
        u = np.unique(X[idx, f])
        for a, b in zip(u[:-1], u[1:]):
            t = (a + b) / 2
            L, R = idx[X[idx, f] <= t], idx[X[idx, f] > t]
            if len(L) < min_leaf or len(R) < min_leaf:
                continue
            gain = sse - ((y[L] - y[L].mean()) ** 2).sum() - ((y[R] - y[R].mean()) ** 2).sum()
            if gain > best[0] + 1e-12:
                best = (gain, f, t)
    if best[1] is None:
        out.append(("leaf", yy.mean()))
        return
    f, t = best[1], best[2]
    out.append((f, t))
    brute_cart(X, y, idx[X[idx, f] <= t], depth + 1, max_depth, min_leaf, out)
    brute_cart(X, y, idx[X[idx, f] > t], depth + 1, max_depth, min_leaf, out)


def preorder(tree):
    out = []

    def walk(n):
        if tree.feature[n] < 0:
            out.append(("leaf", tree.value[n]))
            return
        out.append((int(tree.feature[n]), tree.threshold[n]))
        walk(tree.left[n])
        walk(tree.right[n])

    walk(0)
    return out


class TestRidge:
    @pytest.mark.parametrize("lam", [0.01, 1.0, 100.0])
    def test_matches_oracle(self, lam):
        rng = np.random.default_rng(0)
        for _ in range(50):
            X, y = rng.normal(size=(10, 5)), rng.normal(size=10)
            m = ridge_fit(X, y, lam)
            b0, b = ridge_oracle(X, y, lam)
            assert np.max(np.abs(m.coef - b)) < 1e-8
            assert abs(m.intercept - b0) < 1e-8

    def test_interpolates_when_unpenalized(self, rng):
        X = rng.normal(size=(40, 4))
        y = 3 + X @ np.array([1.0, -2.0, 0.5, 0.0])
        assert np.max(np.abs(ridge_fit(X, y, 0.0).predict(X) - y)) < 1e-8

    def test_infinite_penalty(self, rng):
        X, y = rng.normal(size=(30, 3)), rng.normal(size=30) + 5
        m = ridge_fit(X, y, 1e9)
        assert np.all(np.abs(m.coef) < 1e-3)
        assert m.intercept == pytest.approx(y.mean(), abs=1e-3)

    def test_rank_deficient(self, rng):
        X = rng.normal(size=(20, 2))
        X = np.column_stack([X, X[:, 0] + X[:, 1]])
        with pytest.raises(SingularSystemError):
            ridge_fit(X, rng.normal(size=20), 0.0)
        ridge_fit(X, rng.normal(size=20), 0.1)

    def test_negative_penalty(self, rng):
        with pytest.raises(ValueError):
            ridge_fit(rng.normal(size=(5, 2)), rng.normal(size=5), -1.0)

    def test_sklearn_cross_check(self, rng):
        sk = pytest.importorskip("sklearn.linear_model")
        X, y = rng.normal(size=(60, 6)), rng.normal(size=60)
        ref = sk.Ridge(alpha=2.5).fit(X, y)
        m = ridge_fit(X, y, 2.5)
        assert np.allclose(m.coef, ref.coef_, atol=1e-10)
        assert m.intercept == pytest.approx(ref.intercept_, abs=1e-10)


class TestTree:
    @pytest.mark.parametrize("max_depth,min_leaf", [(6, 3), (None, 5), (3, 1)])
    def test_matches_exhaustive_cart(self, max_depth, min_leaf):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(150, 5))
        y = np.sin(X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.normal(size=150)
        tree = grow_tree(X, y, max_depth=max_depth, min_samples_leaf=min_leaf)
        expected = []
        brute_cart(X, y, np.arange(150), 0, max_depth, min_leaf, expected)
        mine = preorder(tree)
        assert len(mine) == len(expected)
        for (fa, ta), (fb, tb) in zip(mine, expected):
            assert fa == fb
            assert ta == pytest.approx(tb, abs=1e-9)

    def test_integer_weights_equal_duplicated_rows(self, rng):
        X = rng.normal(size=(60, 3))
        y = X[:, 0] + rng.normal(size=60) * 0.1
        w = rng.integers(0, 3, 60)
        a = grow_tree(X, y, w.astype(float), max_depth=4)
        b = grow_tree(np.repeat(X, w, axis=0), np.repeat(y, w), max_depth=4)
        assert np.allclose(a.predict(X), b.predict(X), atol=1e-12)
        assert np.allclose(a.importance, b.importance, atol=1e-12)

    def test_mdi_sums_to_total_decrease(self, rng):
        X = rng.normal(size=(120, 4))
        y = X[:, 0] * X[:, 1] + rng.normal(size=120)
        t = grow_tree(X, y, max_depth=5, min_samples_leaf=2)
        assert np.all(t.importance >= 0)
        assert t.importance.sum() == pytest.approx(t.total_decrease(), abs=1e-12)

    def test_truncation_equals_shallow_tree(self, rng):
        X = rng.normal(size=(200, 5))
        y = X[:, 0] - X[:, 2] ** 2 + rng.normal(size=200) * 0.3
        deep = grow_tree(X, y, min_samples_leaf=2)
        for d in (1, 2, 4, 7):
            shallow = grow_tree(X, y, max_depth=d, min_samples_leaf=2)
            assert np.array_equal(deep.predict(X, d), shallow.predict(X))
            assert np.allclose(deep.importance_at_depth(d), shallow.importance, atol=1e-15)


class TestForest:
    def test_constant_target(self, rng):
        X = rng.normal(size=(30, 3))
        f = RandomForest(10, seed=0).fit(X, np.full(30, 7.0))
        assert np.all(f.predict(X) == 7.0)
        assert f.is_degenerate()
        assert np.all(f.importance() == 0)

    def test_single_step_column(self, rng):
        X = rng.normal(size=(80, 4))
        y = (X[:, 2] > 0).astype(float)
        f = RandomForest(20, max_depth=1, min_samples_leaf=1, seed=3).fit(X, y)
        assert f.importance()[2] == 1.0

    def test_one_informative_among_six(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(50, 6))
        y = (X[:, 0] > 0.2) * 10.0 + rng.normal(size=50) * 0.01
        f = RandomForest(100, min_samples_leaf=2, seed=0).fit(X, y)
        assert f.importance()[0] >= 0.9

    def test_importance_normalized(self, rng):
        X = rng.normal(size=(100, 5))
        f = RandomForest(15, max_depth=3, seed=1).fit(X, X[:, 0] + X[:, 1])
        assert f.importance().sum() == pytest.approx(1.0, abs=1e-12)

    def test_prefix_property(self, rng):
        X = rng.normal(size=(90, 4))
        y = X[:, 0] + rng.normal(size=90)
        big = RandomForest(30, max_depth=None, min_samples_leaf=2, seed=9).fit(X, y)
        small = RandomForest(10, max_depth=3, min_samples_leaf=2, seed=9).fit(X, y)
        assert np.array_equal(big.predict(X, n_trees=10, max_depth=3), small.predict(X))
        assert np.allclose(big.mdi(10, 3), small.mdi(), atol=1e-15)

    def test_deterministic(self, rng):
        X = rng.normal(size=(70, 3))
        y = X[:, 1] + rng.normal(size=70)
        a = RandomForest(12, seed=4).fit(X, y).predict(X)
        b = RandomForest(12, seed=4).fit(X, y).predict(X)
        assert np.array_equal(a, b)

    def test_random_feature_subsets_block_truncation(self, rng):
        X = rng.normal(size=(40, 4))
        f = RandomForest(5, max_depth=None, max_features=2, seed=0).fit(X, X[:, 0])
        with pytest.raises(ValueError):
            f.predict(X, max_depth=2)

    def test_sklearn_importance_agrees_on_clear_signal(self, rng):
        ens = pytest.importorskip("sklearn.ensemble")
        X = rng.normal(size=(300, 5))
        y = 3 * X[:, 0] + X[:, 3] + 0.1 * rng.normal(size=300)
        ours = RandomForest(50, max_depth=6, min_samples_leaf=2, seed=0).fit(X, y).importance()
        ref = ens.RandomForestRegressor(50, max_depth=6, min_samples_leaf=2, random_state=0).fit(X, y).feature_importances_
        assert np.argmax(ours) == np.argmax(ref) == 0
        assert np.max(np.abs(ours - ref)) < 0.05


class TestCrossValidation:
    def test_linear_target(self, rng):
        X = rng.normal(size=(100, 4))
        y = X @ np.array([1.0, 2.0, -1.0, 0.5])
        assert cv_r2(ModelSpec("ridge", {"lam": 0.0}), X, y).mean > 0.999

    def test_noise_target(self, rng):
        X = rng.normal(size=(200, 5))
        y = rng.normal(size=200)
        assert cv_r2(ModelSpec("ridge", {"lam": 1.0}), X, y).mean <= 0.1

    def test_bitwise_repeatable(self, rng):
        X, y = rng.normal(size=(80, 3)), rng.normal(size=80)
        spec = ModelSpec("forest", {"n_trees": 10, "max_depth": 3, "min_samples_leaf": 2, "max_features": None})
        assert cv_r2(spec, X, y, 5, 1).fold_r2 == cv_r2(spec, X, y, 5, 1).fold_r2

    def test_shared_grid_fits_equal_direct_cv(self, rng):
        X = rng.normal(size=(90, 4))
        y = np.where(X[:, 0] > 0, 2.0, -1.0) + X[:, 1] + 0.2 * rng.normal(size=90)
        for spec, res in _grid_scores(X, y, SMALL_GRID):
            direct = cv_r2(spec, X, y, SMALL_GRID.cv_folds, SMALL_GRID.seed)
            assert res.fold_r2 == pytest.approx(direct.fold_r2, abs=1e-12), spec


class TestSelect:
    def test_linear_prefers_ridge(self, rng):
        X = rng.normal(size=(120, 5))
        fit = select(X, 2 + X @ np.arange(1.0, 6.0), SMALL_GRID)
        assert fit.model_kind == "ridge"
        assert fit.cv_r2 > 0.999

    def test_step_target_prefers_forest(self, profiles, plan, catalog):
        sub = profiles[:300]
        advise = make_mock("planted_heuristic_categorical", catalog)
        y = np.array([to_weights(advise(p, BASELINE), catalog).class_weights[2] * 100 for p in sub])
        fm = build_matrix(sub, plan)
        fit = select(fm.values, y, SMALL_GRID, fm.column_names)
        assert fit.model_kind == "forest"
        assert fit.cv_r2 >= 0.95

    def test_noise_low_fidelity(self, rng):
        X, y = rng.normal(size=(150, 6)), rng.normal(size=150)
        fit = select(X, y, SMALL_GRID)
        assert fit.cv_r2 <= 0.1 and fit.low_fidelity

    def test_selected_is_best(self, rng):
        X = rng.normal(size=(100, 4))
        fit = select(X, np.abs(X[:, 0]) + rng.normal(size=100) * 0.1, SMALL_GRID)
        assert all(fit.cv_r2 >= row["cv_r2"] for row in fit.grid_results)
        assert sum(row["selected"] for row in fit.grid_results) == 1

    def test_noise_columns_do_not_inflate(self, rng):
        X = rng.normal(size=(150, 3))
        y = np.where(X[:, 0] > 0, 1.0, 0.0) + 0.3 * rng.normal(size=150)
        base = select(X, y, SMALL_GRID).cv_r2
        wide = select(np.column_stack([X, rng.normal(size=(150, 6))]), y, SMALL_GRID).cv_r2
        assert wide <= base + 0.05

    def test_constant_target(self, rng):
        with pytest.raises(DegenerateTargetError):
            select(rng.normal(size=(20, 2)), np.ones(20), SMALL_GRID)

    def test_fit_all_marks_degenerate(self, rng):
        X = rng.normal(size=(60, 3))
        fits = fit_all(X, {"a": X[:, 0] * 2, "b": np.zeros(60)}, SMALL_GRID, ["x", "y", "z"])
        assert isinstance(fits["b"], DegenerateClass)
        assert isinstance(fits["a"], SurrogateFit)
        assert list(fits) == ["a", "b"]

    def test_round_trip(self, rng):
        X = rng.normal(size=(60, 3))
        fit = select(X, X[:, 1], SMALL_GRID, ["p", "q", "r"], "Equities")
        again = SurrogateFit.from_dict(fit.to_dict())
        assert again.column_names == ["p", "q", "r"]
        assert np.array_equal(again.importance, fit.importance)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            HyperparameterGrid(ridge_lambdas=(-1.0,))
        with pytest.raises(ValueError):
            HyperparameterGrid(cv_folds=1)
