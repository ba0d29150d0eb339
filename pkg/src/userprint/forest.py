"""Bagged classification trees, written from scratch.

Trees grow CART-style: at each node every feature and every midpoint
between consecutive distinct sorted values is evaluated, and the split
minimizing weighted Gini impurity wins, ties broken by lowest feature
index then lowest threshold. The ensemble trains each tree on a bootstrap
resample drawn from its own counter-derived RNG stream, so training is a
pure function of (data, config, seed) under any thread count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class EmptyInput(ValueError):
    """Training requires at least one row."""


class DimensionMismatch(ValueError):
    """A feature vector's length does not match the forest's feature_dim."""


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 50
    min_leaf_size: int = 1
    max_depth: int | None = None
    bootstrap: bool = True

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None for unlimited")


@dataclass(frozen=True)
class Leaf:
    class_counts: tuple[int, ...]

    def __post_init__(self):
        if sum(self.class_counts) < 1:
            raise ValueError("a leaf must hold at least one row")


@dataclass(frozen=True)
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Internal]


def _best_split(
    X: np.ndarray, y: np.ndarray, num_classes: int, min_leaf_size: int
) -> tuple[int, float] | None:
    """Exhaustive Gini split search over all features and midpoints.

    Candidate quality is ranked by S_l/n_l + S_r/n_r (S = sum of squared
    class counts), which is a monotone transform of negative weighted Gini.
    Numerators and denominators are exact int64; the float64 division used
    for the argmax is injective on distinct candidate rationals for any
    realistic row count (n <= ~2000), so ties and orderings are exact.
    The improving-split test against the parent is pure integer arithmetic.
    """
    n, num_features = X.shape
    if n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    onehot = ys[:, :, None] == np.arange(num_classes)[None, None, :]
    cum = np.cumsum(onehot, axis=0, dtype=np.int64)

    left_counts = cum[:-1]
    right_counts = cum[-1][None, :, :] - left_counts
    n_left = np.arange(1, n, dtype=np.int64)[:, None]
    n_right = n - n_left
    sq_left = np.sum(left_counts**2, axis=2)
    sq_right = np.sum(right_counts**2, axis=2)
    numer = sq_left * n_right + sq_right * n_left
    denom = n_left * n_right

    parent_counts = np.bincount(y, minlength=num_classes).astype(np.int64)
    parent_sq = int(np.sum(parent_counts**2))

    valid = Xs[:-1] != Xs[1:]
    valid &= (n_left >= min_leaf_size) & (n_right >= min_leaf_size)
    valid &= numer * n > parent_sq * denom
    if not valid.any():
        return None

    score = np.where(valid, numer / denom, -np.inf)
    # Feature-major flattening makes argmax pick the lowest feature index,
    # then the lowest boundary (= lowest threshold) among exact ties.
    flat_index = int(np.argmax(score.T))
    feature = flat_index // (n - 1)
    boundary = flat_index % (n - 1)
    lo = float(Xs[boundary, feature])
    hi = float(Xs[boundary + 1, feature])
    threshold = (lo + hi) / 2.0
    if threshold >= hi:
        threshold = lo
    return feature, threshold


def _grow(
    X: np.ndarray, y: np.ndarray, depth: int, config: ForestConfig, num_classes: int
) -> TreeNode:
    counts = np.bincount(y, minlength=num_classes)
    if (
        int(np.count_nonzero(counts)) <= 1
        or len(y) < 2 * config.min_leaf_size
        or (config.max_depth is not None and depth >= config.max_depth)
    ):
        return Leaf(tuple(int(c) for c in counts))
    split = _best_split(X, y, num_classes, config.min_leaf_size)
    if split is None:
        return Leaf(tuple(int(c) for c in counts))
    feature, threshold = split
    mask = X[:, feature] <= threshold
    left = _grow(X[mask], y[mask], depth + 1, config, num_classes)
    right = _grow(X[~mask], y[~mask], depth + 1, config, num_classes)
    return Internal(feature, threshold, left, right)


def _validate_rows(X: np.ndarray, y: np.ndarray, num_classes: int | None) -> tuple[np.ndarray, np.ndarray, int]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) and y (n,)")
    if X.shape[0] == 0:
        raise EmptyInput("training requires at least one row")
    if y.min() < 0:
        raise ValueError("labels must be nonnegative integers")
    if num_classes is None:
        num_classes = int(y.max()) + 1
    elif y.max() >= num_classes:
        raise ValueError("label out of range for num_classes")
    return X, y, num_classes


def train_tree(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    config: ForestConfig = ForestConfig(),
    num_classes: int | None = None,
) -> TreeNode:
    """Grow one deterministic classification tree on the full data."""
    X, y, num_classes = _validate_rows(X, y, num_classes)
    return _grow(X, y, 0, config, num_classes)


@dataclass(frozen=True)
class Forest:
    trees: tuple[TreeNode, ...]
    num_classes: int
    feature_dim: int
    seed: int
    config: ForestConfig

    def __post_init__(self):
        if len(self.trees) != self.config.num_trees:
            raise ValueError("forest must hold exactly config.num_trees trees")


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    # Substream derivation: each tree's stream depends only on (seed, index),
    # never on execution order.
    return np.random.default_rng(np.random.SeedSequence((seed, tree_index)))


def train_forest(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    config: ForestConfig = ForestConfig(),
    seed: int = 0,
    num_classes: int | None = None,
    n_threads: int = 1,
) -> Forest:
    """Train a bagged ensemble; bit-identical for fixed (X, y, config, seed)."""
    X, y, num_classes = _validate_rows(X, y, num_classes)
    n = X.shape[0]

    def build(i: int) -> TreeNode:
        if config.bootstrap:
            idx = _tree_rng(seed, i).integers(0, n, size=n)
            return _grow(X[idx], y[idx], 0, config, num_classes)
        return _grow(X, y, 0, config, num_classes)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = tuple(pool.map(build, range(config.num_trees)))
    else:
        trees = tuple(build(i) for i in range(config.num_trees))
    return Forest(
        trees=trees,
        num_classes=num_classes,
        feature_dim=X.shape[1],
        seed=seed,
        config=config,
    )


def _route(node: TreeNode, fv: np.ndarray) -> Leaf:
    while isinstance(node, Internal):
        node = node.left if fv[node.feature_index] <= node.threshold else node.right
    return node


def predict(forest: Forest, fv: np.ndarray) -> tuple[int, np.ndarray]:
    """Majority vote over the trees; returns (label, per-class vote counts).

    Each tree votes its leaf's argmax class; ties at a leaf and at the
    forest level resolve to the lowest class index.
    """
    fv = np.asarray(fv, dtype=np.float64).ravel()
    if fv.size != forest.feature_dim:
        raise DimensionMismatch(
            f"expected {forest.feature_dim} features, got {fv.size}"
        )
    votes = np.zeros(forest.num_classes, dtype=np.int64)
    for tree in forest.trees:
        leaf = _route(tree, fv)
        votes[int(np.argmax(leaf.class_counts))] += 1
    return int(np.argmax(votes)), votes


def predict_many(forest: Forest, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([predict(forest, row)[0] for row in X], dtype=np.int64)


def _encode_node(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"class_counts": list(node.class_counts)}
    return {
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": _encode_node(node.left),
        "right": _encode_node(node.right),
    }


def _decode_node(obj: dict) -> TreeNode:
    if "class_counts" in obj:
        return Leaf(tuple(int(c) for c in obj["class_counts"]))
    return Internal(
        feature_index=int(obj["feature_index"]),
        threshold=float(obj["threshold"]),
        left=_decode_node(obj["left"]),
        right=_decode_node(obj["right"]),
    )


def save_forest(forest: Forest, path: str | Path) -> Path:
    """Persist a forest as JSON; loading reproduces bit-identical predictions."""
    path = Path(path)
    doc = {
        "format_version": 1,
        "config": {
            "num_trees": forest.config.num_trees,
            "min_leaf_size": forest.config.min_leaf_size,
            "max_depth": forest.config.max_depth,
            "bootstrap": forest.config.bootstrap,
        },
        "seed": forest.seed,
        "num_classes": forest.num_classes,
        "feature_dim": forest.feature_dim,
        "trees": [_encode_node(t) for t in forest.trees],
    }
    path.write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return path


def load_forest(path: str | Path) -> Forest:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported forest format {doc.get('format_version')!r}")
    cfg = doc["config"]
    config = ForestConfig(
        num_trees=int(cfg["num_trees"]),
        min_leaf_size=int(cfg["min_leaf_size"]),
        max_depth=None if cfg["max_depth"] is None else int(cfg["max_depth"]),
        bootstrap=bool(cfg["bootstrap"]),
    )
    return Forest(
        trees=tuple(_decode_node(t) for t in doc["trees"]),
        num_classes=int(doc["num_classes"]),
        feature_dim=int(doc["feature_dim"]),
        seed=int(doc["seed"]),
        config=config,
    )
