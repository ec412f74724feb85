"""Random forest regression with mean-decrease-in-impurity importances.

Trees are CART regressors grown on bootstrap samples with the squared-error
(variance) criterion. Split search is exact: candidate thresholds are the
midpoints between consecutive distinct training values of a column, scanned
through per-node histograms over those distinct values. The bootstrap enters
as integer sample weights.

Tree ``i`` draws its randomness from ``default_rng([seed, i])``, so the first
``m`` trees of a forest are identical to an ``m``-tree forest with the same
seed. Grid search uses this to score several tree counts from one fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

# node variance below this (relative to 1 + mean^2) is treated as pure
PURE_TOL = 1e-15


@numba.njit(cache=True, nogil=True)
def _node_stats(rows, start, end, y, w):
    wsum = 0.0
    s = 0.0
    for i in range(start, end):
        r = rows[i]
        wsum += w[r]
        s += w[r] * y[r]
    mean = s / wsum
    sse = 0.0
    for i in range(start, end):
        r = rows[i]
        d = y[r] - mean
        sse += w[r] * d * d
    return wsum, mean, sse / wsum


@numba.njit(cache=True, nogil=True)
def _build(codes, vals, nbins, y, w, rows, max_depth, min_leaf, max_features, seed):
    k = codes.shape[0]
    m = rows.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap)
    impurity = np.zeros(cap)
    wnode = np.zeros(cap)
    ndepth = np.zeros(cap, np.int32)
    importance = np.zeros(k)

    np.random.seed(seed)
    order = np.arange(k)
    bmax = 1
    for f in range(k):
        if nbins[f] > bmax:
            bmax = nbins[f]
    hw = np.zeros(bmax)
    hs = np.zeros(bmax)

    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)

    wroot, mroot, iroot = _node_stats(rows, 0, m, y, w)
    value[0] = mroot
    impurity[0] = iroot
    wnode[0] = wroot
    n_nodes = 1
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        wn = wnode[node]
        mean = value[node]
        if max_depth >= 0 and depth >= max_depth:
            continue
        if wn < 2.0 * min_leaf:
            continue
        if impurity[node] <= PURE_TOL * (1.0 + mean * mean):
            continue

        if max_features < k:
            for i in range(max_features):
                j = i + np.random.randint(0, k - i)
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
        n_try = max_features if max_features < k else k

        s_node = 0.0
        for i in range(start, end):
            r = rows[i]
            s_node += w[r] * (y[r] - mean)
        base = s_node * s_node / wn
        best = 0.0
        best_f = -1
        best_bin = -1
        best_thr = 0.0
        for t in range(n_try):
            f = order[t] if max_features < k else t
            nb = nbins[f]
            if nb < 2:
                continue
            for b in range(nb):
                hw[b] = 0.0
                hs[b] = 0.0
            for i in range(start, end):
                r = rows[i]
                b = codes[f, r]
                hw[b] += w[r]
                hs[b] += w[r] * (y[r] - mean)
            cw = 0.0
            cs = 0.0
            prev = -1
            for b in range(nb):
                if hw[b] == 0.0:
                    continue
                if prev >= 0:
                    rw = wn - cw
                    if cw >= min_leaf and rw >= min_leaf:
                        rs = s_node - cs
                        gain = cs * cs / cw + rs * rs / rw - base
                        if gain > best:
                            best = gain
                            best_f = f
                            best_bin = prev
                            best_thr = 0.5 * (vals[f, prev] + vals[f, b])
                cw += hw[b]
                cs += hs[b]
                prev = b

        if best_f < 0 or best <= PURE_TOL * wn * (1.0 + mean * mean):
            continue

        i = start
        j = end - 1
        while i <= j:
            if codes[best_f, rows[i]] <= best_bin:
                i += 1
            else:
                tmp = rows[i]
                rows[i] = rows[j]
                rows[j] = tmp
                j -= 1
        mid = i

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode
        wl, ml, il = _node_stats(rows, start, mid, y, w)
        wr, mr, ir = _node_stats(rows, mid, end, y, w)
        value[lnode] = ml
        impurity[lnode] = il
        wnode[lnode] = wl
        value[rnode] = mr
        impurity[rnode] = ir
        wnode[rnode] = wr
        ndepth[lnode] = depth + 1
        ndepth[rnode] = depth + 1
        dec = (wn * impurity[node] - wl * il - wr * ir) / wroot
        if dec > 0.0:
            importance[best_f] += dec

        stack_node[top] = rnode
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        impurity[:n_nodes].copy(),
        wnode[:n_nodes].copy(),
        ndepth[:n_nodes].copy(),
        importance,
    )


@numba.njit(cache=True, nogil=True)
def _predict(feature, threshold, left, right, value, depth, max_depth, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0 and (max_depth < 0 or depth[node] < max_depth):
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray
    depth: np.ndarray
    importance: np.ndarray

    def predict(self, X: np.ndarray, max_depth: int | None = None) -> np.ndarray:
        """Predict, optionally as if the tree had been grown with ``max_depth``.

        Growth at a node never depends on the depth limit, so cutting an
        unlimited tree at depth ``d`` gives exactly the depth-``d`` tree when
        every feature is tried at every split.
        """
        X = np.ascontiguousarray(X, dtype=float)
        d = -1 if max_depth is None else int(max_depth)
        return _predict(self.feature, self.threshold, self.left, self.right, self.value, self.depth, d, X)

    def importance_at_depth(self, max_depth: int | None) -> np.ndarray:
        if max_depth is None:
            return self.importance
        imp = np.zeros_like(self.importance)
        split = (self.feature >= 0) & (self.depth < max_depth)
        for node in np.flatnonzero(split):
            l, r = self.left[node], self.right[node]
            dec = (
                self.weight[node] * self.impurity[node]
                - self.weight[l] * self.impurity[l]
                - self.weight[r] * self.impurity[r]
            ) / self.weight[0]
            if dec > 0:
                imp[self.feature[node]] += dec
        return imp

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def total_decrease(self) -> float:
        """Root impurity minus the weighted impurity of the leaves."""
        leaves = self.feature < 0
        return float(self.impurity[0] - np.sum(self.weight[leaves] * self.impurity[leaves]) / self.weight[0])


def _bin(X: np.ndarray):
    k = X.shape[1]
    uniq = [np.unique(X[:, j]) for j in range(k)]
    nbins = np.array([len(u) for u in uniq], dtype=np.int32)
    vals = np.zeros((k, int(nbins.max())))
    codes = np.empty((k, X.shape[0]), dtype=np.int32)
    for j, u in enumerate(uniq):
        vals[j, : len(u)] = u
        codes[j] = np.searchsorted(u, X[:, j])
    return codes, vals, nbins


def grow_tree(X, y, weights=None, max_depth=None, min_samples_leaf=1, max_features=None, seed=0, _binned=None) -> Tree:
    """Fit one CART regression tree; ``weights`` are integer sample multiplicities."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    codes, vals, nbins = _binned if _binned is not None else _bin(X)
    rows = np.flatnonzero(w > 0).astype(np.int64)
    parts = _build(
        codes,
        vals,
        nbins,
        y,
        w,
        rows,
        -1 if max_depth is None else int(max_depth),
        float(min_samples_leaf),
        k if max_features is None else int(max_features),
        int(seed),
    )
    return Tree(*parts)


@dataclass
class RandomForest:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: int | None = None
    seed: int = 0
    trees: list[Tree] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        if n < 2 * self.min_samples_leaf:
            raise ValueError(f"need at least {2 * self.min_samples_leaf} rows for min_samples_leaf={self.min_samples_leaf}")
        binned = _bin(X)
        self.trees = []
        for i in range(self.n_trees):
            rng = np.random.default_rng([self.seed, i])
            w = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
            tree_seed = int(rng.integers(0, 2**31 - 1))
            self.trees.append(
                grow_tree(X, y, w, self.max_depth, self.min_samples_leaf, self.max_features, tree_seed, binned)
            )
        return self

    @property
    def all_features(self) -> bool:
        return self.max_features is None or (self.trees and self.max_features >= len(self.trees[0].importance))

    def _view_depth(self, max_depth):
        if max_depth is None or (self.max_depth is not None and max_depth >= self.max_depth):
            return None
        if not self.all_features:
            raise ValueError("depth truncation is exact only when every feature is tried at each split")
        return max_depth

    def tree_predictions(self, X: np.ndarray, max_depth: int | None = None) -> np.ndarray:
        """Per-tree predictions, shape ``(n_trees, n_rows)``."""
        d = self._view_depth(max_depth)
        X = np.ascontiguousarray(X, dtype=float)
        return np.stack([t.predict(X, d) for t in self.trees])

    def predict(self, X: np.ndarray, n_trees: int | None = None, max_depth: int | None = None) -> np.ndarray:
        """Forest mean; ``n_trees``/``max_depth`` evaluate the smaller forest this one contains."""
        d = self._view_depth(max_depth)
        X = np.ascontiguousarray(X, dtype=float)
        trees = self.trees if n_trees is None else self.trees[:n_trees]
        return np.mean([t.predict(X, d) for t in trees], axis=0)

    def per_tree_mdi(self, n_trees: int | None = None, max_depth: int | None = None) -> np.ndarray:
        d = self._view_depth(max_depth)
        trees = self.trees if n_trees is None else self.trees[:n_trees]
        return np.stack([t.importance_at_depth(d) for t in trees])

    def mdi(self, n_trees: int | None = None, max_depth: int | None = None) -> np.ndarray:
        """Unnormalized MDI: per-tree weighted impurity decrease, averaged over trees."""
        return self.per_tree_mdi(n_trees, max_depth).mean(axis=0)

    def importance(self, n_trees: int | None = None, max_depth: int | None = None) -> np.ndarray:
        """MDI normalized to sum to one; all zeros when no tree ever split."""
        mdi = self.mdi(n_trees, max_depth)
        total = mdi.sum()
        return mdi / total if total > 0 else np.zeros_like(mdi)

    def is_degenerate(self, n_trees: int | None = None, max_depth: int | None = None) -> bool:
        return not np.any(self.mdi(n_trees, max_depth) > 0)
