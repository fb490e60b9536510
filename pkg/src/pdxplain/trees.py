"""CART-style binary decision trees.

One learner serves every ensemble: gini mode for AdaBoost stumps and random
forests, second-order mode (gradient/hessian with L2 leaf regularization and
a minimum split gain) for boosted trees. Split search is exact: candidate
thresholds are the midpoints between consecutive sorted unique feature
values. Routing is strict-inequality (left iff value < threshold) in both
fitting and prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

GINI = "gini"
SECOND_ORDER = "second_order"


@dataclass
class TreeNode:
    """Either an internal split or a leaf. Leaves have feature == -1."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: float = 0.0

    @classmethod
    def leaf(cls, value: float) -> "TreeNode":
        return cls(value=float(value))

    @classmethod
    def split(cls, feature: int, threshold: float, left: "TreeNode", right: "TreeNode") -> "TreeNode":
        return cls(feature=int(feature), threshold=float(threshold), left=left, right=right)

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class TreeConfig:
    max_depth: int = 6
    min_samples_leaf: int = 1
    feature_subsample_fraction: float = 1.0
    criterion: str = GINI
    lam: float = 1.0  # L2 leaf regularization (second_order only)
    gamma: float = 0.0  # minimum gain to split (second_order only)
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.feature_subsample_fraction <= 1.0:
            raise ValueError("feature_subsample_fraction must be in (0, 1]")
        if self.criterion not in (GINI, SECOND_ORDER):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be non-negative")


def fit_tree(
    X: np.ndarray,
    targets,
    config: TreeConfig,
    sample_weight: Optional[np.ndarray] = None,
    allowed_features: Optional[Sequence[int]] = None,
) -> TreeNode:
    """Fit one tree by greedy exact best-split recursion.

    ``targets`` is a 0/1 label vector in gini mode, or a (gradient, hessian)
    pair in second_order mode. ``allowed_features`` restricts the columns the
    tree may split on (global indices); per-split feature subsampling then
    samples within that set.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-d array")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")

    if config.criterion == GINI:
        y = np.asarray(targets, dtype=float)
        if not np.isfinite(y).all():
            raise ValueError("non-finite target value")
        w = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if w.shape != y.shape or (w <= 0).any():
            raise ValueError("sample_weight must be positive and match the targets")
        # s1 = weighted positive mass, s2 = total weight.
        s1, s2 = w * y, w
    else:
        g, h = targets
        g = np.asarray(g, dtype=float)
        h = np.asarray(h, dtype=float)
        if not (np.isfinite(g).all() and np.isfinite(h).all()):
            raise ValueError("non-finite gradient or hessian")
        if (h < 0).any():
            raise ValueError("hessians must be non-negative")
        s1, s2 = g, h

    allowed = np.arange(X.shape[1]) if allowed_features is None else np.asarray(sorted(allowed_features), dtype=int)
    rng = np.random.default_rng(config.seed)
    builder = _Builder(X, s1, s2, config, allowed, rng)
    return builder.build(np.arange(X.shape[0]), depth=0)


class _Builder:
    def __init__(self, X, s1, s2, config: TreeConfig, allowed, rng):
        self.X = X
        self.s1 = s1
        self.s2 = s2
        self.cfg = config
        self.allowed = allowed
        self.rng = rng

    def leaf_value(self, t1: float, t2: float) -> float:
        if self.cfg.criterion == GINI:
            return t1 / t2
        return -t1 / (t2 + self.cfg.lam)

    def build(self, idx: np.ndarray, depth: int) -> TreeNode:
        t1 = float(self.s1[idx].sum())
        t2 = float(self.s2[idx].sum())
        leaf = TreeNode.leaf(self.leaf_value(t1, t2))
        msl = self.cfg.min_samples_leaf
        if depth >= self.cfg.max_depth or idx.size < 2 * msl or idx.size < 2:
            return leaf

        feats = self.allowed
        if self.cfg.feature_subsample_fraction < 1.0:
            count = max(1, int(np.ceil(self.cfg.feature_subsample_fraction * feats.size)))
            feats = np.sort(self.rng.choice(feats, size=count, replace=False))

        best = self._best_split(idx, feats, t1, t2)
        if best is None:
            return leaf
        feature, threshold = best
        mask = self.X[idx, feature] < threshold
        n_left = int(mask.sum())
        if n_left < msl or idx.size - n_left < msl:  # degenerate float midpoint
            return leaf
        left = self.build(idx[mask], depth + 1)
        right = self.build(idx[~mask], depth + 1)
        return TreeNode.split(feature, threshold, left, right)

    def _best_split(self, idx, feats, t1, t2):
        """Scan all candidate thresholds of all features at once.

        Returns (feature, threshold) of the maximal-gain split, or None when
        no split has positive gain. Ties resolve to the lowest feature index,
        then the lowest threshold.
        """
        cfg = self.cfg
        Xs = self.X[np.ix_(idx, feats)]
        m = idx.size
        order = np.argsort(Xs, axis=0, kind="stable")
        xs = np.take_along_axis(Xs, order, axis=0)
        a = self.s1[idx][order]  # (m, f) per-column reorder
        b = self.s2[idx][order]
        al = np.cumsum(a, axis=0)[:-1]  # left sums through position i
        bl = np.cumsum(b, axis=0)[:-1]
        ar = t1 - al
        br = t2 - bl

        valid = xs[1:] > xs[:-1]
        msl = cfg.min_samples_leaf
        if msl > 1:
            pos = np.arange(1, m)[:, None]
            valid = valid & (pos >= msl) & (m - pos >= msl)

        with np.errstate(divide="ignore", invalid="ignore"):
            if cfg.criterion == GINI:
                # Weighted gini impurity decrease; parent term is constant so
                # maximizing -(children impurity) is equivalent, but keep the
                # full gain for the positive-gain stopping rule.
                parent = _gini_term(t1, t2)
                gain = parent - _gini_term(al, bl) - _gini_term(ar, br)
                floor = 1e-12  # guard float noise on pure nodes
            else:
                parent = t1 * t1 / (t2 + cfg.lam)
                gain = 0.5 * (al * al / (bl + cfg.lam) + ar * ar / (br + cfg.lam) - parent) - cfg.gamma
                floor = 0.0
        gain = np.where(valid & np.isfinite(gain), gain, -np.inf)

        flat = np.argmax(gain.T)  # feature-major scan: lowest feature, then lowest threshold
        best_gain = gain.T.flat[flat]
        if not np.isfinite(best_gain) or best_gain <= floor:
            return None
        j, i = divmod(flat, gain.shape[0])
        threshold = 0.5 * (xs[i, j] + xs[i + 1, j])
        return int(feats[j]), float(threshold)


def _gini_term(s1, s2):
    # Weighted impurity mass: s2 * 2p(1-p) with p = s1/s2.
    return 2.0 * s1 * (s2 - s1) / s2


def predict_tree(node: TreeNode, row: np.ndarray) -> float:
    """Route a single row to its leaf value."""
    while not node.is_leaf:
        node = node.left if row[node.feature] < node.threshold else node.right
    return node.value


def predict_many(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Vectorized prediction for a matrix of rows."""
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0])
    _route(node, X, np.arange(X.shape[0]), out)
    return out


def _route(node, X, idx, out):
    if node.is_leaf:
        out[idx] = node.value
        return
    mask = X[idx, node.feature] < node.threshold
    _route(node.left, X, idx[mask], out)
    _route(node.right, X, idx[~mask], out)


def tree_to_dict(node: TreeNode) -> dict:
    """Serialize to a flat node list (preorder, root at index 0)."""
    nodes: list[dict] = []

    def visit(n: TreeNode) -> int:
        pos = len(nodes)
        if n.is_leaf:
            nodes.append({"value": float(n.value)})
            return pos
        entry = {"feature": int(n.feature), "threshold": float(n.threshold)}
        nodes.append(entry)
        entry["left"] = visit(n.left)
        entry["right"] = visit(n.right)
        return pos

    visit(node)
    return {"nodes": nodes}


def tree_from_dict(d: dict) -> TreeNode:
    nodes = d["nodes"]

    def build(i: int) -> TreeNode:
        nd = nodes[i]
        if "value" in nd:
            return TreeNode.leaf(nd["value"])
        return TreeNode.split(nd["feature"], nd["threshold"], build(nd["left"]), build(nd["right"]))

    return build(0)
