"""Decision-tree ensembles over per-symbol window counts.

Windows enter as one-hot matrices and are reduced to binarized count
indicators (count of symbol s >= k for k = 1..COUNT_LEVELS), the axis-aligned
analog of API-frequency features. All features are 0/1, so every split is the
implicit threshold 0.5 on one indicator and candidate enumeration reduces to
column sums. Trees never expose input gradients.
"""

from __future__ import annotations

import numpy as np

COUNT_LEVELS = 4


def count_threshold_features(W: np.ndarray, levels: int = COUNT_LEVELS) -> np.ndarray:
    """Map a batch of one-hot windows (B, n, D) to indicators (B, D*levels)
    where feature (s, k) is 1 iff symbol s occurs more than k times."""
    counts = np.asarray(W, dtype=np.float64).sum(axis=1)
    thresholds = np.arange(1, levels + 1, dtype=np.float64)
    feats = counts[:, :, None] >= thresholds[None, None, :]
    return feats.reshape(W.shape[0], -1).astype(np.float64)


class TreeNode:
    __slots__ = ("feature", "left", "right", "value")

    def __init__(self, feature: int = -1, left: "TreeNode | None" = None,
                 right: "TreeNode | None" = None, value: float = 0.0):
        self.feature = feature
        self.left = left
        self.right = right
        self.value = value

    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_json(self) -> dict:
        if self.is_leaf():
            return {"v": self.value}
        return {"f": self.feature, "l": self.left.to_json(), "r": self.right.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "TreeNode":
        if "v" in obj:
            return cls(value=float(obj["v"]))
        return cls(feature=int(obj["f"]), left=cls.from_json(obj["l"]), right=cls.from_json(obj["r"]))


def route_leaf_values(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Vectorized routing of flattened windows to leaf values."""
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if idx.size == 0:
            continue
        if nd.is_leaf():
            out[idx] = nd.value
            continue
        go_right = X[idx, nd.feature] > 0.5
        stack.append((nd.left, idx[~go_right]))
        stack.append((nd.right, idx[go_right]))
    return out


def _gini_split_scores(n0, pos0, n1, pos1):
    # Weighted Gini impurity of the two children; lower is better.
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = np.where(n0 > 0, pos0 / np.maximum(n0, 1), 0.0)
        p1 = np.where(n1 > 0, pos1 / np.maximum(n1, 1), 0.0)
    return n0 * 2 * p0 * (1 - p0) + n1 * 2 * p1 * (1 - p1)


def grow_classification_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator,
                             max_depth: int | None = None,
                             max_features: int | None = None) -> TreeNode:
    """Gini-criterion CART on 0/1 features. max_depth None means unlimited."""
    d = X.shape[1]
    root = TreeNode()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = idx.size
        pos = float(y[idx].sum())
        node.value = pos / m
        if pos == 0.0 or pos == m or m < 2 or (max_depth is not None and depth >= max_depth):
            continue
        if max_features is not None and max_features < d:
            cand = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            cand = np.arange(d)
        cols = X[np.ix_(idx, cand)]
        n1 = cols.sum(axis=0)
        pos1 = y[idx] @ cols
        n0 = m - n1
        pos0 = pos - pos1
        parent = m * 2 * (pos / m) * (1 - pos / m)
        child = _gini_split_scores(n0, pos0, n1, pos1)
        gains = parent - child
        gains[(n0 == 0) | (n1 == 0)] = -np.inf
        best = int(np.argmax(gains))
        if gains[best] <= 1e-12:
            continue
        feature = int(cand[best])
        go_right = X[idx, feature] > 0.5
        node.feature = feature
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.left, idx[~go_right], depth + 1))
        stack.append((node.right, idx[go_right], depth + 1))
    return root


def grow_regression_tree(X: np.ndarray, residual: np.ndarray, hessian: np.ndarray,
                         max_depth: int) -> TreeNode:
    """Variance-reduction tree on 0/1 features with Newton leaf values."""
    root = TreeNode()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = idx.size
        r_sum = float(residual[idx].sum())
        h_sum = float(hessian[idx].sum())
        node.value = r_sum / max(h_sum, 1e-12)
        if depth >= max_depth or m < 2:
            continue
        Xi = X if m == X.shape[0] else X.take(idx, axis=0)
        ri = residual[idx]
        n1 = Xi.sum(axis=0)
        s1 = ri @ Xi
        n0 = m - n1
        s0 = r_sum - s1
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where((n0 > 0) & (n1 > 0),
                             s0 * s0 / np.maximum(n0, 1) + s1 * s1 / np.maximum(n1, 1),
                             -np.inf)
        best = int(np.argmax(score))
        base = r_sum * r_sum / m
        if not np.isfinite(score[best]) or score[best] - base <= 1e-12:
            continue
        go_right = X[idx, best] > 0.5
        node.feature = best
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.left, idx[~go_right], depth + 1))
        stack.append((node.right, idx[go_right], depth + 1))
    return root


class RandomForest:
    """Bagged Gini trees; score is the fraction of trees voting malicious."""

    def __init__(self, trees: list[TreeNode]):
        self.trees = trees

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, n_trees: int, rng: np.random.Generator,
            max_depth: int | None = None) -> "RandomForest":
        n, d = X.shape
        max_features = max(1, int(np.sqrt(d)))
        trees = []
        for _ in range(n_trees):
            boot = rng.integers(0, n, size=n)
            trees.append(grow_classification_tree(X[boot], y[boot], rng,
                                                  max_depth=max_depth,
                                                  max_features=max_features))
        return cls(trees)

    def scores(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += route_leaf_values(t, X) >= 0.5
        return votes / len(self.trees)


class BoostedTrees:
    """Gradient boosting with logistic loss; score is sigmoid of the boosted sum."""

    def __init__(self, trees: list[TreeNode], base: float, learning_rate: float):
        self.trees = trees
        self.base = base
        self.learning_rate = learning_rate

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, n_trees: int, max_depth: int,
            learning_rate: float) -> "BoostedTrees":
        pos_rate = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        base = float(np.log(pos_rate / (1 - pos_rate)))
        F = np.full(X.shape[0], base)
        trees = []
        for _ in range(n_trees):
            p = 1.0 / (1.0 + np.exp(-F))
            residual = y - p
            hessian = p * (1 - p)
            tree = grow_regression_tree(X, residual, hessian, max_depth)
            trees.append(tree)
            F += learning_rate * route_leaf_values(tree, X)
        return cls(trees, base, learning_rate)

    def raw(self, X: np.ndarray) -> np.ndarray:
        F = np.full(X.shape[0], self.base)
        for t in self.trees:
            F += self.learning_rate * route_leaf_values(t, X)
        return F

    def scores(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.raw(X)))
