"""Isolation forest built from scratch.

Trees are grown on random subsamples by recursive axis-parallel splits with
uniformly drawn split points; anomaly scores follow s(x) = 2^(-E(h)/c(psi))
where c(m) is the average unsuccessful-BST-search path length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    DegenerateData,
    DimensionMismatch,
    EmptyData,
    InvalidContamination,
)

EULER_MASCHERONI = 0.5772156649


def c_factor(m: int) -> float:
    """Average path length of an unsuccessful BST search over m items.

    Exact harmonic values for m <= 2, the ln-approximation above.
    """
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    return 2.0 * (math.log(m - 1) + EULER_MASCHERONI) - 2.0 * (m - 1) / m


@dataclass
class TreeNode:
    """Internal node (split_feature/split_value/left/right) or leaf (size)."""
    size: int = 0
    split_feature: int = -1
    split_value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"n": self.size}
        return {
            "f": self.split_feature,
            "v": self.split_value,
            "l": self.left.to_dict(),
            "r": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeNode":
        if "n" in doc:
            return cls(size=doc["n"])
        return cls(
            split_feature=doc["f"],
            split_value=doc["v"],
            left=cls.from_dict(doc["l"]),
            right=cls.from_dict(doc["r"]),
        )


def _grow(X: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> TreeNode:
    n = X.shape[0]
    if depth >= limit or n <= 1:
        return TreeNode(size=n)
    mins = X.min(axis=0)
    maxs = X.max(axis=0)
    candidates = np.nonzero(maxs > mins)[0]
    if candidates.size == 0:
        # all rows identical at this node
        return TreeNode(size=n)
    feature = int(rng.choice(candidates))
    lo, hi = mins[feature], maxs[feature]
    value = rng.uniform(lo, hi)
    for _ in range(8):  # enforce a strictly interior split
        if lo < value < hi:
            break
        value = rng.uniform(lo, hi)
    if not lo < value < hi:
        # lo and hi are so close that uniform() keeps landing on an endpoint;
        # if even the midpoint rounds to an endpoint there is no representable
        # interior split and the node stays a leaf.
        value = lo + 0.5 * (hi - lo)
        if not lo < value < hi:
            return TreeNode(size=n)
    mask = X[:, feature] < value
    return TreeNode(
        split_feature=feature,
        split_value=float(value),
        left=_grow(X[mask], depth + 1, limit, rng),
        right=_grow(X[~mask], depth + 1, limit, rng),
    )


@dataclass
class IsolationTree:
    root: TreeNode
    height_limit: int
    sample_size: int

    @classmethod
    def fit(cls, X: np.ndarray, rng: np.random.Generator) -> "IsolationTree":
        limit = max(1, math.ceil(math.log2(X.shape[0]))) if X.shape[0] > 1 else 1
        return cls(root=_grow(X, 0, limit, rng), height_limit=limit,
                   sample_size=X.shape[0])

    def path_length(self, x: np.ndarray) -> float:
        """Edges from root to leaf, plus c(size) at an unresolved leaf."""
        node = self.root
        depth = 0
        while not node.is_leaf:
            node = node.left if x[node.split_feature] < node.split_value else node.right
            depth += 1
        return depth + c_factor(node.size)

    def path_lengths(self, X: np.ndarray) -> np.ndarray:
        """Vectorized path lengths via recursive index partitioning."""
        out = np.zeros(X.shape[0])
        stack = [(self.root, np.arange(X.shape[0]), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if idx.size == 0:
                continue
            if node.is_leaf:
                out[idx] = depth + c_factor(node.size)
            else:
                mask = X[idx, node.split_feature] < node.split_value
                stack.append((node.left, idx[mask], depth + 1))
                stack.append((node.right, idx[~mask], depth + 1))
        return out

    def max_depth(self) -> int:
        def depth(node):
            if node.is_leaf:
                return 0
            return 1 + max(depth(node.left), depth(node.right))
        return depth(self.root)


class IsolationForest(BaseEstimator):
    """Ensemble of isolation trees with per-tree deterministic sub-seeding.

    Parameters
    ----------
    n_trees : number of trees in the ensemble.
    subsample_size : rows drawn (without replacement) per tree; capped at the
        dataset size.
    random_state : seed; tree i uses the derived stream (random_state, i).
    """

    def __init__(self, n_trees: int = 300, subsample_size: int = 256,
                 random_state: int = 0):
        self.n_trees = n_trees
        self.subsample_size = subsample_size
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._validate(X, reset=True)
        n = X.shape[0]
        if n < 2:
            raise EmptyData(f"need at least 2 rows, got {n}")
        if bool(np.all(X == X[0])):
            raise DegenerateData("all rows identical; no valid split exists")
        self.psi_effective_ = min(self.subsample_size, n)
        self.trees_ = []
        for i in range(self.n_trees):
            rng = np.random.default_rng([self.random_state, i])
            idx = rng.choice(n, size=self.psi_effective_, replace=False)
            self.trees_.append(IsolationTree.fit(X[idx], rng))
        return self

    def _validate(self, X, reset=False):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if reset:
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def mean_path_lengths(self, X) -> np.ndarray:
        X = self._validate(X)
        if X.shape[0] == 0:
            return np.zeros(0)
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree.path_lengths(X)
        return total / len(self.trees_)

    def score_samples(self, X) -> np.ndarray:
        """Anomaly scores in (0, 1); closer to 1 means more anomalous."""
        return scores_from_path_lengths(self.mean_path_lengths(X), self.psi_effective_)

    def fit_predict_scores(self, X) -> np.ndarray:
        return self.fit(X).score_samples(X)


def scores_from_path_lengths(mean_paths: np.ndarray, psi_effective: int) -> np.ndarray:
    return np.power(2.0, -np.asarray(mean_paths, dtype=float) / c_factor(psi_effective))


def threshold_by_contamination(scores, contamination: float):
    """Threshold at the (1 - contamination) quantile; flags are strict '>'."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise EmptyData("empty score vector")
    if not 0.0 < contamination < 1.0:
        raise InvalidContamination(f"contamination must be in (0, 1), got {contamination}")
    threshold = float(np.quantile(scores, 1.0 - contamination))
    return threshold, scores > threshold


# --- serialization ---

def forest_to_dict(model: IsolationForest) -> dict:
    return {
        "format_version": 1,
        "type": "isolation_forest",
        "n_trees": model.n_trees,
        "subsample_size": model.subsample_size,
        "random_state": model.random_state,
        "psi_effective": model.psi_effective_,
        "n_features": model.n_features_in_,
        "trees": [
            {"height_limit": t.height_limit, "sample_size": t.sample_size,
             "root": t.root.to_dict()}
            for t in model.trees_
        ],
    }


def forest_from_dict(doc: dict) -> IsolationForest:
    if doc.get("type") != "isolation_forest":
        raise ValueError(f"not an isolation forest document: {doc.get('type')!r}")
    model = IsolationForest(
        n_trees=doc["n_trees"],
        subsample_size=doc["subsample_size"],
        random_state=doc["random_state"],
    )
    model.psi_effective_ = doc["psi_effective"]
    model.n_features_in_ = doc["n_features"]
    model.trees_ = [
        IsolationTree(root=TreeNode.from_dict(t["root"]),
                      height_limit=t["height_limit"],
                      sample_size=t["sample_size"])
        for t in doc["trees"]
    ]
    return model


def save_forest(model: IsolationForest, path) -> None:
    Path(path).write_text(json.dumps(forest_to_dict(model)) + "\n")


def load_forest(path) -> IsolationForest:
    return forest_from_dict(json.loads(Path(path).read_text()))
