"""Gradient-boosted regression trees with exact (histogram-free) splits.

Squared-error boosting: each tree is fit to the current residuals, split
gains and leaf values use an L2 penalty on leaf weights, and leaf values
are stored already scaled by the learning rate, so a prediction is
``base_score + sum(leaf values)``. Prediction compares ``x <= threshold``
exactly, so a serialized model predicts identically everywhere.
"""

from __future__ import annotations

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

LEAF = -1


@numba.njit(cache=True)
def _build_tree(X, grad, sorted_idx, max_depth, min_samples_leaf, min_samples_split,
                reg_lambda, min_gain, learning_rate):
    n_features, n = sorted_idx.shape
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap)

    goes_left = np.zeros(X.shape[0], np.bool_)
    buf = np.empty(n, np.int64)
    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    top = 0
    stack_node[0], stack_start[0], stack_end[0], stack_depth[0] = 0, 0, n, 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        count = end - start

        total = 0.0
        for i in range(start, end):
            total += grad[sorted_idx[0, i]]
        value[node] = learning_rate * total / (count + reg_lambda)

        if depth >= max_depth or count < min_samples_split or count < 2 * min_samples_leaf:
            continue

        parent = total * total / (count + reg_lambda)
        best_gain = min_gain
        best_f = -1
        best_i = -1
        best_thr = 0.0
        for f in range(n_features):
            sl = 0.0
            for i in range(start, end - 1):
                s = sorted_idx[f, i]
                sl += grad[s]
                nl = i - start + 1
                nr = count - nl
                if nr < min_samples_leaf:
                    break
                if nl < min_samples_leaf:
                    continue
                xv = X[s, f]
                xn = X[sorted_idx[f, i + 1], f]
                if xv == xn:
                    continue
                sr = total - sl
                gain = sl * sl / (nl + reg_lambda) + sr * sr / (nr + reg_lambda) - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_i = i
                    mid = 0.5 * (xv + xn)
                    best_thr = mid if mid < xn else xv

        if best_f < 0:
            continue

        for i in range(start, end):
            goes_left[sorted_idx[best_f, i]] = i <= best_i
        for f in range(n_features):
            k = 0
            for i in range(start, end):
                s = sorted_idx[f, i]
                if goes_left[s]:
                    buf[k] = s
                    k += 1
            for i in range(start, end):
                s = sorted_idx[f, i]
                if not goes_left[s]:
                    buf[k] = s
                    k += 1
            for i in range(count):
                sorted_idx[f, start + i] = buf[i]

        mid_pos = best_i + 1
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc
        # right pushed first so the left subtree is expanded first
        stack_node[top], stack_start[top], stack_end[top], stack_depth[top] = rc, mid_pos, end, depth + 1
        top += 1
        stack_node[top], stack_start[top], stack_end[top], stack_depth[top] = lc, start, mid_pos, depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True)
def _predict_flat(X, feature, threshold, left, right, value, roots, out):
    for i in range(X.shape[0]):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] != LEAF:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] += acc


def _flatten(trees):
    offsets = np.cumsum([0] + [len(t["feature"]) for t in trees[:-1]]).astype(np.int64)
    if not trees:
        empty_i, empty_f = np.empty(0, np.int32), np.empty(0)
        return empty_i, empty_f, empty_i, empty_i, empty_f, np.empty(0, np.int64)
    feature = np.concatenate([t["feature"] for t in trees]).astype(np.int32)
    threshold = np.concatenate([t["threshold"] for t in trees])
    value = np.concatenate([t["value"] for t in trees])
    left = np.concatenate([np.where(t["left"] >= 0, t["left"] + o, -1)
                           for t, o in zip(trees, offsets)]).astype(np.int32)
    right = np.concatenate([np.where(t["right"] >= 0, t["right"] + o, -1)
                            for t, o in zip(trees, offsets)]).astype(np.int32)
    return feature, threshold, left, right, value, offsets


class GradientBoostedRegressor(RegressorMixin, BaseEstimator):
    """Boosted regression trees for squared error.

    Parameters
    ----------
    n_estimators : int, default=400
    max_depth : int, default=10
    learning_rate : float, default=0.1
    min_samples_leaf : int, default=1
    min_samples_split : int, default=2
    reg_lambda : float, default=1.0
        L2 penalty on leaf values.
    min_split_gain : float, default=0.0
        A split must improve the penalized loss by strictly more than this.
    subsample : float, default=1.0
        Row fraction drawn (without replacement) for each tree.
    random_state : int, default=0
        Seed for row subsampling.
    """

    def __init__(self, n_estimators=400, max_depth=10, learning_rate=0.1, min_samples_leaf=1,
                 min_samples_split=2, reg_lambda=1.0, min_split_gain=0.0, subsample=1.0,
                 random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.min_samples_split = min_samples_split
        self.reg_lambda = reg_lambda
        self.min_split_gain = min_split_gain
        self.subsample = subsample
        self.random_state = random_state

    def _validate_params(self):
        if self.n_estimators < 0 or self.max_depth < 0:
            raise ValueError("n_estimators and max_depth must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2 or self.reg_lambda < 0:
            raise ValueError("invalid leaf-size or regularization parameter")

    def fit(self, X, y):
        self._validate_params()
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        X = np.ascontiguousarray(X)
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        self.n_features_in_ = d
        self.base_score_ = float(y[0]) if np.all(y == y[0]) else float(np.mean(y))
        order = np.argsort(X, axis=0, kind="stable").T.copy()
        rng = np.random.default_rng(self.random_state)
        pred = np.full(n, self.base_score_)
        self.trees_ = []
        for _ in range(self.n_estimators):
            if self.subsample < 1.0:
                k = max(1, int(round(self.subsample * n)))
                mask = np.zeros(n, bool)
                mask[rng.choice(n, k, replace=False)] = True
                sorted_idx = np.ascontiguousarray(
                    np.vstack([row[mask[row]] for row in order]))
            else:
                sorted_idx = order.copy()
            grad = y - pred
            f, t, l, r, v = _build_tree(X, grad, sorted_idx, self.max_depth,
                                        self.min_samples_leaf, self.min_samples_split,
                                        float(self.reg_lambda), float(self.min_split_gain),
                                        float(self.learning_rate))
            tree = {"feature": f, "threshold": t, "left": l, "right": r, "value": v}
            self.trees_.append(tree)
            _predict_flat(X, f, t, l, r, v, np.zeros(1, np.int64), pred)
        self._flat = None
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model expects {self.n_features_in_}")
        if getattr(self, "_flat", None) is None:
            self._flat = _flatten(self.trees_)
        out = np.full(X.shape[0], self.base_score_)
        _predict_flat(np.ascontiguousarray(X), *self._flat, out)
        return out

    @property
    def n_nodes_(self) -> int:
        return sum(len(t["feature"]) for t in self.trees_)

    def to_dict(self) -> dict:
        """JSON-ready state; each node is ``[feature, threshold, left, right, value]``."""
        check_is_fitted(self, "trees_")
        trees = []
        for t in self.trees_:
            nodes = [[int(f), float(th), int(l), int(r), float(v)]
                     for f, th, l, r, v in zip(t["feature"], t["threshold"], t["left"],
                                               t["right"], t["value"])]
            trees.append({"nodes": nodes})
        return {"params": self.get_params(), "n_features": self.n_features_in_,
                "base_score": self.base_score_, "trees": trees}

    @classmethod
    def from_dict(cls, state) -> "GradientBoostedRegressor":
        model = cls(**state.get("params", {}))
        model.n_features_in_ = int(state["n_features"])
        model.base_score_ = float(state["base_score"])
        model.trees_ = []
        for tree in state["trees"]:
            nodes = tree["nodes"]
            cols = list(zip(*nodes)) if nodes else [(), (), (), (), ()]
            t = {
                "feature": np.asarray(cols[0], dtype=np.int32),
                "threshold": np.asarray(cols[1], dtype=np.float64),
                "left": np.asarray(cols[2], dtype=np.int32),
                "right": np.asarray(cols[3], dtype=np.int32),
                "value": np.asarray(cols[4], dtype=np.float64),
            }
            n = len(t["feature"])
            if np.any(t["feature"] >= model.n_features_in_) or np.any(t["left"] >= n) \
                    or np.any(t["right"] >= n):
                raise ValueError("corrupted tree: index out of range")
            model.trees_.append(t)
        model._flat = None
        return model
