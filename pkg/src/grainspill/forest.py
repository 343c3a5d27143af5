"""From-scratch regression trees, random forests and hyperparameter search."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.model_selection import KFold
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

logger = logging.getLogger(__name__)

DEFAULT_GRID = {
    "n_estimators": [100, 300, 500],
    "max_depth": [4, 8, 16, None],
    "max_features": ["third", "sqrt", None],
}


def resolve_max_features(max_features, d):
    if max_features is None or max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "third":
        return max(1, int(d / 3))
    if isinstance(max_features, (int, np.integer)) and not isinstance(max_features, bool):
        if max_features < 1:
            raise ValueError("max_features must be positive")
        return min(d, int(max_features))
    if isinstance(max_features, float) and 0 < max_features <= 1:
        return max(1, int(max_features * d))
    raise ValueError(f"invalid max_features {max_features!r}")


def mae(y, yhat):
    y, yhat = np.asarray(y, dtype=float), np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} != {yhat.shape}")
    return float(np.mean(np.abs(y - yhat)))


def mse(y, yhat):
    y, yhat = np.asarray(y, dtype=float), np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} != {yhat.shape}")
    return float(np.mean((y - yhat) ** 2))


class RegressionTree(RegressorMixin, BaseEstimator):
    """CART regression tree grown by greedy variance reduction.

    Each node draws ``max_features`` candidate features without
    replacement and takes the split with the smallest summed squared error.
    """

    def __init__(self, max_depth=None, max_features=None, min_samples_leaf=1, random_state=0):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n, d = X.shape
        m = resolve_max_features(self.max_features, d)
        leaf = max(1, int(self.min_samples_leaf))
        max_depth = math.inf if self.max_depth is None else int(self.max_depth)
        rng = np.random.default_rng(self.random_state)

        feature, threshold, left, right, value, count = [], [], [], [], [], []
        importance = np.zeros(d)
        stack = [(np.arange(n), 0, -1, False)]
        while stack:
            idx, depth, parent, is_right = stack.pop()
            node = len(feature)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            ys = y[idx]
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            pure = np.ptp(ys) == 0
            # a pure node predicts its value exactly, not a rounded mean
            value.append(float(ys[0]) if pure else float(ys.mean()))
            count.append(idx.size)
            split = None
            if depth < max_depth and idx.size >= 2 * leaf and not pure:
                feats = rng.choice(d, m, replace=False) if m < d else np.arange(d)
                split = self._best_split(X[np.ix_(idx, feats)], ys, leaf)
            if split is None:
                continue
            col, pos, thr, gain, order = split
            f = int(feats[col])
            feature[node] = f
            threshold[node] = thr
            importance[f] += gain
            sorted_idx = idx[order[:, col]]
            # right child pushed first so the left subtree is numbered first
            stack.append((np.sort(sorted_idx[pos:]), depth + 1, node, True))
            stack.append((np.sort(sorted_idx[:pos]), depth + 1, node, False))

        self.feature_ = np.array(feature, dtype=int)
        self.threshold_ = np.array(threshold)
        self.children_left_ = np.array(left, dtype=int)
        self.children_right_ = np.array(right, dtype=int)
        self.value_ = np.array(value)
        self.n_node_samples_ = np.array(count, dtype=int)
        self.n_features_in_ = d
        total = importance.sum()
        self.raw_importances_ = importance
        self.feature_importances_ = importance / total if total > 0 else importance
        return self

    @staticmethod
    def _best_split(Xs, ys, leaf):
        n = ys.size
        order = np.argsort(Xs, axis=0, kind="stable")
        xs = np.take_along_axis(Xs, order, axis=0)
        cs = np.cumsum(ys[order], axis=0)
        total = cs[-1]
        p = np.arange(leaf, n - leaf + 1)  # left-child sizes
        if p.size == 0:
            return None
        sl = cs[p - 1]
        score = sl * sl / p[:, None] + (total - sl) ** 2 / (n - p)[:, None]
        valid = xs[p - 1] < xs[np.minimum(p, n - 1)]
        score = np.where(valid, score, -np.inf)
        flat = int(np.argmax(score))
        r, col = divmod(flat, score.shape[1])
        if not np.isfinite(score[r, col]):
            return None
        parent_sse = float(np.sum((ys - ys.mean()) ** 2))
        gain = float(score[r, col] - total[col] * total[col] / n)
        if gain <= 1e-12 * parent_sse:
            return None
        pos = int(p[r])
        lo, hi = xs[pos - 1, col], xs[pos, col]
        thr = float(lo + (hi - lo) / 2.0)
        if not lo <= thr < hi:
            thr = float(lo)
        return col, pos, thr, gain, order

    def apply(self, X):
        X = check_array(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=int)
        active = np.flatnonzero(self.feature_[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature_[nd]] <= self.threshold_[nd]
            node[active] = np.where(go_left, self.children_left_[nd], self.children_right_[nd])
            active = active[self.feature_[node[active]] >= 0]
        return node

    def predict(self, X):
        check_is_fitted(self, "value_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.value_[self.apply(X)]

    @property
    def depth_(self):
        depth = np.zeros(self.feature_.size, dtype=int)
        for i in range(self.feature_.size):
            for c in (self.children_left_[i], self.children_right_[i]):
                if c >= 0:
                    depth[c] = depth[i] + 1
        return int(depth.max())


def fit_tree(X, y, params=None, seed=0) -> RegressionTree:
    return RegressionTree(**(params or {}), random_state=seed).fit(X, y)


def tree_seeds(seed, n):
    """Per-tree integer seeds; the first ``m`` of ``tree_seeds(s, n)`` equal ``tree_seeds(s, m)``."""
    return [int(c.generate_state(1, np.uint64)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


class RandomForestRegressor(RegressorMixin, BaseEstimator):
    """Bagged regression trees; prediction is the mean of the tree predictions."""

    def __init__(
        self,
        n_estimators=100,
        max_depth=None,
        max_features="sqrt",
        min_samples_leaf=2,
        bootstrap=True,
        random_state=0,
        n_jobs=1,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _fit_one(self, X, y, seed):
        if self.bootstrap:
            idx = np.random.default_rng([seed, 1]).integers(0, X.shape[0], size=X.shape[0])
            X, y = X[idx], y[idx]
        tree = RegressionTree(self.max_depth, self.max_features, self.min_samples_leaf, random_state=seed)
        return tree.fit(X, y)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if int(self.n_estimators) < 1:
            raise ValueError("n_estimators must be at least 1")
        seeds = tree_seeds(self.random_state, int(self.n_estimators))
        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=int(self.n_jobs)) as pool:
                self.estimators_ = list(pool.map(lambda s: self._fit_one(X, y, s), seeds))
        else:
            self.estimators_ = [self._fit_one(X, y, s) for s in seeds]
        self.tree_seeds_ = seeds
        self.n_features_in_ = X.shape[1]
        imp = np.mean([t.feature_importances_ for t in self.estimators_], axis=0)
        total = imp.sum()
        self.feature_importances_ = imp / total if total > 0 else imp
        return self

    def tree_predictions(self, X, n_trees=None):
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=np.float64)
        trees = self.estimators_[: n_trees or len(self.estimators_)]
        return np.stack([t.predict(X) for t in trees])

    def predict(self, X, n_trees=None):
        return self.tree_predictions(X, n_trees).mean(axis=0)


def fit_forest(X, y, params=None, seed=0) -> RandomForestRegressor:
    return RandomForestRegressor(**(params or {}), random_state=seed).fit(X, y)


def evaluate(model, X, y):
    """(MAE, MSE) of ``model`` on ``(X, y)``."""
    yhat = model.predict(X)
    return mae(y, yhat), mse(y, yhat)


def permutation_importance(model, X, y, n_repeats=5, seed=0):
    """Mean increase in MSE when each feature column is shuffled."""
    X = check_array(X, dtype=np.float64)
    y = np.asarray(y, dtype=float)
    base = mse(y, model.predict(X))
    rng = np.random.default_rng(seed)
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        for _ in range(n_repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            out[j] += mse(y, model.predict(Xp)) - base
    return out / n_repeats


# -- data preparation ---------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    X_train: np.ndarray
    X_test: np.ndarray
    y_train: np.ndarray
    y_test: np.ndarray
    feature_names: list
    train_index: np.ndarray
    test_index: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    dropped: list


def standardize_split(features, target, ratio=0.8, mode="random", seed=0) -> Dataset:
    """Split rows and z-score with training-set moments.

    ``mode="chronological"`` keeps the first rows for training.
    """
    names = list(features.columns) if isinstance(features, pd.DataFrame) else None
    X = check_array(features, dtype=np.float64)
    y = np.asarray(target, dtype=float).ravel()
    n, d = X.shape
    names = names or [f"x{j + 1}" for j in range(d)]
    if y.size != n:
        raise ValueError(f"target length {y.size} != feature rows {n}")
    if n < 20:
        raise ValueError(f"need at least 20 observations, got {n}")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    n_train = int(round(ratio * n))
    if mode == "random":
        perm = np.random.default_rng(seed).permutation(n)
        tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    elif mode == "chronological":
        tr, te = np.arange(n_train), np.arange(n_train, n)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    mu = X[tr].mean(axis=0)
    sd = X[tr].std(axis=0, ddof=0)
    keep = sd > 0
    dropped = [nm for nm, k in zip(names, keep) if not k]
    if dropped:
        logger.warning("dropping zero-variance features: %s", ", ".join(dropped))
    ym, ys = float(y[tr].mean()), float(y[tr].std(ddof=0))
    if ys <= 0:
        raise ValueError("target has zero variance on the training set")
    Z = (X[:, keep] - mu[keep]) / sd[keep]
    yz = (y - ym) / ys
    return Dataset(
        Z[tr], Z[te], yz[tr], yz[te],
        [nm for nm, k in zip(names, keep) if k],
        tr, te, mu[keep], sd[keep], ym, ys, dropped,
    )


# -- grid search --------------------------------------------------------------


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    results: pd.DataFrame


def _depth_key(depth):
    return math.inf if depth is None else depth


def grid_search(X, y, grid=None, cv=5, seed=0, shuffle=True, min_samples_leaf=2, n_jobs=1) -> GridSearchResult:
    """Exhaustive search by K-fold CV MSE on the training data.

    Ties go to fewer trees, then to shallower trees. Forests differing only
    in size share their first trees, so each (depth, features) pair is fit
    once per fold at the largest size and scored on prefixes.
    """
    grid = DEFAULT_GRID if grid is None else grid
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    sizes = sorted(set(int(k) for k in grid.get("n_estimators", [100])))
    depths = list(dict.fromkeys(grid.get("max_depth", [None])))
    feats = list(dict.fromkeys(grid.get("max_features", ["sqrt"])))
    if not sizes or not depths or not feats:
        raise ValueError("empty hyperparameter grid")
    folds = list(KFold(n_splits=cv, shuffle=shuffle, random_state=seed if shuffle else None).split(X))
    rows = []
    for depth, mf in itertools.product(depths, feats):
        errs = np.zeros((len(folds), len(sizes)))
        for f, (tr, va) in enumerate(folds):
            model = RandomForestRegressor(
                sizes[-1], depth, mf, min_samples_leaf, True, random_state=seed, n_jobs=n_jobs
            ).fit(X[tr], y[tr])
            preds = model.tree_predictions(X[va])
            csum = np.cumsum(preds, axis=0)
            for s, k in enumerate(sizes):
                errs[f, s] = mse(y[va], csum[k - 1] / k)
        for s, k in enumerate(sizes):
            rows.append({"n_estimators": k, "max_depth": depth, "max_features": mf, "cv_mse": float(errs[:, s].mean())})
    rows.sort(key=lambda r: (r["cv_mse"], r["n_estimators"], _depth_key(r["max_depth"])))
    best = {k: rows[0][k] for k in ("n_estimators", "max_depth", "max_features")}
    best["min_samples_leaf"] = min_samples_leaf
    return GridSearchResult(best, pd.DataFrame(rows))


def model_summary(model, dataset: Dataset, permutation=False, seed=0):
    """Plain-dict summary: params, train/test errors and importance ranking."""
    tr = evaluate(model, dataset.X_train, dataset.y_train)
    te = evaluate(model, dataset.X_test, dataset.y_test) if dataset.y_test.size else (math.nan, math.nan)
    imp = model.feature_importances_
    ranking = sorted(zip(dataset.feature_names, imp.tolist()), key=lambda t: -t[1])
    out = {
        "params": {k: v for k, v in model.get_params().items() if k != "n_jobs"},
        "train": {"mae": tr[0], "mse": tr[1]},
        "test": {"mae": te[0], "mse": te[1]},
        "importance": [{"feature": f, "score": s} for f, s in ranking],
    }
    if permutation and dataset.y_test.size:
        perm = permutation_importance(model, dataset.X_test, dataset.y_test, seed=seed)
        out["permutation_importance"] = dict(zip(dataset.feature_names, perm.tolist()))
    return out
