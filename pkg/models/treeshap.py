"""
Exact path-dependent TreeSHAP for TreeEnsemble.

The value of a coalition S at instance x is the cover-weighted expectation
of the tree output: at a split on a feature in S follow x's branch,
otherwise average both children weighted by their training cover. The
polynomial-time path algorithm below is run for many instances at once:
the path's feature ids and zero fractions depend only on the tree, while
the one fractions and permutation weights are carried as per-instance arrays.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.gbdt import LEAF, Tree, TreeEnsemble
from utils.errors import CoverInconsistencyError, MissingFeatureError
from utils.logger import Logger

logger = Logger()

COVER_RTOL = 1e-9


@dataclass
class ShapAttribution:
    """base_value + sum(phi) == prediction up to float rounding."""

    base_value: float
    phi: np.ndarray
    prediction: float
    instance_id: str = ''
    feature_names: List[str] = field(default_factory=list)
    feature_values: Optional[np.ndarray] = None

    @property
    def residual(self) -> float:
        return float(self.base_value + np.sum(self.phi) - self.prediction)


def check_covers(tree: Tree):
    """Every node has positive cover and internal covers equal their children's sum."""
    if np.any(~(tree.cover > 0)):
        raise CoverInconsistencyError("Tree has a node with non-positive cover")
    internal = np.flatnonzero(tree.feature != LEAF)
    children = tree.cover[tree.left[internal]] + tree.cover[tree.right[internal]]
    if not np.allclose(children, tree.cover[internal], rtol=COVER_RTOL, atol=0.0):
        raise CoverInconsistencyError("Child covers do not sum to parent cover")


def tree_expected_value(tree: Tree) -> float:
    """Cover-weighted mean leaf value (the empty-coalition value)."""
    leaves = tree.feature == LEAF
    return float(np.sum(tree.cover[leaves] * tree.value[leaves]) / tree.cover[0])


def expected_value(model: TreeEnsemble) -> float:
    return float(model.base_score + sum(tree_expected_value(t) for t in model.used_trees))


class _Path:
    """Unique feature path with per-instance one fractions and weights."""

    __slots__ = ('features', 'zeros', 'ones', 'weights')

    def __init__(self, features, zeros, ones, weights):
        self.features: List[int] = features
        self.zeros: List[float] = zeros
        self.ones: List[np.ndarray] = ones
        self.weights: List[np.ndarray] = weights

    def copy(self) -> '_Path':
        return _Path(list(self.features), list(self.zeros), list(self.ones), [w.copy() for w in self.weights])

    @property
    def depth(self) -> int:
        # index of the last element
        return len(self.features) - 1

    def extend(self, zero: float, one: np.ndarray, feature: int, n: int):
        depth = len(self.features)
        self.features.append(feature)
        self.zeros.append(zero)
        self.ones.append(one)
        self.weights.append(np.ones(n) if depth == 0 else np.zeros(n))
        for i in range(depth - 1, -1, -1):
            self.weights[i + 1] = self.weights[i + 1] + one * self.weights[i] * (i + 1) / (depth + 1)
            self.weights[i] = zero * self.weights[i] * (depth - i) / (depth + 1)

    def unwind(self, index: int):
        depth = self.depth
        one = self.ones[index]
        zero = self.zeros[index]
        hot = one != 0
        safe_one = np.where(hot, one, 1.0)
        next_one = self.weights[depth].copy()
        for i in range(depth - 1, -1, -1):
            old = self.weights[i]
            with_one = next_one * (depth + 1) / ((i + 1) * safe_one)
            without_one = old * (depth + 1) / (zero * (depth - i))
            self.weights[i] = np.where(hot, with_one, without_one)
            next_one = np.where(hot, old - self.weights[i] * zero * (depth - i) / (depth + 1), next_one)
        del self.features[index], self.zeros[index], self.ones[index]
        self.weights.pop()

    def unwound_sum(self, index: int) -> np.ndarray:
        depth = self.depth
        one = self.ones[index]
        zero = self.zeros[index]
        hot = one != 0
        safe_one = np.where(hot, one, 1.0)
        next_one = self.weights[depth].copy()
        total = np.zeros_like(next_one)
        for i in range(depth - 1, -1, -1):
            part_hot = next_one / ((i + 1) * safe_one)
            part_cold = self.weights[i] / (zero * (depth - i))
            total = total + np.where(hot, part_hot, part_cold)
            next_one = np.where(hot, self.weights[i] - part_hot * zero * (depth - i), next_one)
        return total * (depth + 1)


def tree_shap_values(tree: Tree, X: np.ndarray) -> np.ndarray:
    """(rows, features) Shapley values of one tree for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    phi = np.zeros((n, p))
    if tree.feature[0] == LEAF:
        return phi
    check_covers(tree)

    def goes_left(node: int) -> np.ndarray:
        x = X[:, tree.feature[node]]
        return np.where(np.isnan(x), tree.default_left[node], x <= tree.threshold[node])

    def recurse(node: int, path: _Path, zero: float, one: np.ndarray, feature: int):
        path = path.copy()
        path.extend(zero, one, feature, n)
        if tree.feature[node] == LEAF:
            value = tree.value[node]
            for i in range(1, path.depth + 1):
                w = path.unwound_sum(i)
                phi[:, path.features[i]] += w * (path.ones[i] - path.zeros[i]) * value
            return

        split = int(tree.feature[node])
        incoming_zero, incoming_one = 1.0, np.ones(n)
        if split in path.features:
            k = path.features.index(split)
            incoming_zero, incoming_one = path.zeros[k], path.ones[k]
            path.unwind(k)

        left, right = tree.left[node], tree.right[node]
        cover = tree.cover[node]
        to_left = goes_left(node)
        recurse(left, path, incoming_zero * tree.cover[left] / cover, incoming_one * to_left, split)
        recurse(right, path, incoming_zero * tree.cover[right] / cover, incoming_one * ~to_left, split)

    recurse(0, _Path([], [], [], []), 1.0, np.ones(n), -1)
    return phi


def shap_values(model: TreeEnsemble, X: np.ndarray) -> Tuple[np.ndarray, float]:
    """Ensemble Shapley values (sum over used trees) and the base value."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise MissingFeatureError(f"Expected {len(model.feature_names)} feature columns, got shape {X.shape}")
    phi = np.zeros(X.shape)
    for tree in model.used_trees:
        phi += tree_shap_values(tree, X)
    return phi, expected_value(model)


def tree_shap(model: TreeEnsemble, instance: Sequence[float], instance_id: str = '') -> ShapAttribution:
    row = np.asarray(instance, dtype=np.float64).reshape(1, -1)
    phi, base = shap_values(model, row)
    return ShapAttribution(
        base_value=base,
        phi=phi[0],
        prediction=float(model.predict_array(row)[0]),
        instance_id=instance_id,
        feature_names=list(model.feature_names),
        feature_values=row[0],
    )
