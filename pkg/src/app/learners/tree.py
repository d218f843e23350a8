from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from app.data.dataset import Dataset, DatasetError, Feature, FeatureKind, FeatureSchema

# Impurities closer than this are treated as equal so ties fall to
# (feature index, threshold) instead of float rounding noise.
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    max_depth: Optional[int] = 4  # None = unlimited
    min_samples_leaf: int = 1

    def __post_init__(self) -> None:
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float  # value <= threshold goes left
    weighted_impurity: float
    gain: float


@dataclass(frozen=True)
class LeafNode:
    class_index: int
    class_counts: Tuple[int, ...]


@dataclass(frozen=True)
class SplitNode:
    feature_index: int
    threshold: float
    left: "Node"
    right: "Node"
    class_counts: Tuple[int, ...]


Node = Union[LeafNode, SplitNode]


def gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _feature_scan(
    column: np.ndarray, onehot: np.ndarray, min_samples_leaf: int
) -> Optional[Tuple[float, float]]:
    """Best (weighted gini, threshold) on one column, smallest threshold on ties."""
    order = np.argsort(column, kind="stable")
    values = column[order]
    n = values.size

    # Candidate cut after position i (left = first i+1 rows) between distinct values.
    cut = np.flatnonzero(values[:-1] < values[1:])
    n_left = cut + 1
    n_right = n - n_left
    allowed = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    cut, n_left, n_right = cut[allowed], n_left[allowed], n_right[allowed]
    if cut.size == 0:
        return None

    left_counts = np.cumsum(onehot[order], axis=0)[cut]
    right_counts = onehot.sum(axis=0) - left_counts
    # n * weighted gini = nL - sum(cL^2)/nL + nR - sum(cR^2)/nR
    scaled = (
        n_left
        - (left_counts**2).sum(axis=1) / n_left
        + n_right
        - (right_counts**2).sum(axis=1) / n_right
    )
    impurity = scaled / n

    best = int(np.flatnonzero(impurity <= impurity.min() + _TIE_EPS)[0])
    lo, hi = values[cut[best]], values[cut[best] + 1]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # midpoint rounded onto the upper value
        threshold = lo
    return float(impurity[best]), float(threshold)


def best_split(
    rows: np.ndarray,
    labels: np.ndarray,
    n_classes: Optional[int] = None,
    min_samples_leaf: int = 1,
    features: Optional[Sequence[int]] = None,
) -> Optional[SplitCandidate]:
    """
    Gini-minimizing feature/threshold pair over midpoints of consecutive
    distinct values. Ties go to the lowest feature index, then the smallest
    threshold. None when the labels are pure or nothing can be split.
    """
    rows = np.asarray(rows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if rows.ndim != 2 or rows.shape[0] != labels.size:
        raise ValueError("rows must be a matrix with one row per label")
    if labels.size < 2:
        return None

    n_classes = n_classes or int(labels.max()) + 1
    onehot = np.eye(n_classes, dtype=np.float64)[labels]
    parent_counts = onehot.sum(axis=0)
    if np.count_nonzero(parent_counts) <= 1:
        return None
    parent = gini(parent_counts)

    candidate_features = sorted(features) if features is not None else range(rows.shape[1])
    best: Optional[Tuple[float, int, float]] = None
    for j in candidate_features:
        scan = _feature_scan(rows[:, j], onehot, min_samples_leaf)
        if scan is None:
            continue
        impurity, threshold = scan
        if best is None or impurity < best[0] - _TIE_EPS:
            best = (impurity, j, threshold)

    if best is None:
        return None
    impurity, j, threshold = best
    return SplitCandidate(
        feature_index=j,
        threshold=threshold,
        weighted_impurity=impurity,
        gain=max(0.0, parent - impurity),
    )


class DecisionTree:
    """Fitted binary tree of `value <= threshold` questions with majority-class leaves."""

    def __init__(
        self,
        root: Node,
        classes: Sequence[str],
        schema: FeatureSchema,
        max_depth: Optional[int],
    ):
        self.root = root
        self.classes = tuple(classes)
        self.schema = schema
        self.max_depth = max_depth

    @property
    def depth(self) -> int:
        def _depth(node: Node) -> int:
            if isinstance(node, LeafNode):
                return 0
            return 1 + max(_depth(node.left), _depth(node.right))

        return _depth(self.root)

    @property
    def n_leaves(self) -> int:
        def _count(node: Node) -> int:
            if isinstance(node, LeafNode):
                return 1
            return _count(node.left) + _count(node.right)

        return _count(self.root)

    def predict(self, record_values: Sequence[float]) -> int:
        values = np.asarray(record_values, dtype=np.float64)
        if values.shape != (len(self.schema),):
            raise ValueError(
                f"Expected {len(self.schema)} feature values, got {values.shape[0] if values.ndim else 0}"
            )
        node = self.root
        while isinstance(node, SplitNode):
            node = node.left if values[node.feature_index] <= node.threshold else node.right
        return node.class_index

    def predict_many(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != len(self.schema):
            raise ValueError(
                f"Expected a matrix with {len(self.schema)} columns, got shape {matrix.shape}"
            )
        out = np.empty(matrix.shape[0], dtype=np.int64)

        def _route(node: Node, rows: np.ndarray) -> None:
            if rows.size == 0:
                return
            if isinstance(node, LeafNode):
                out[rows] = node.class_index
                return
            goes_left = matrix[rows, node.feature_index] <= node.threshold
            _route(node.left, rows[goes_left])
            _route(node.right, rows[~goes_left])

        _route(self.root, np.arange(matrix.shape[0]))
        return out

    def to_dict(self) -> Dict[str, Any]:
        def _node(node: Node) -> Dict[str, Any]:
            if isinstance(node, LeafNode):
                return {"leaf": node.class_index, "class_counts": list(node.class_counts)}
            return {
                "feature_index": node.feature_index,
                "feature": self.schema.names[node.feature_index],
                "threshold": node.threshold,
                "class_counts": list(node.class_counts),
                "left": _node(node.left),
                "right": _node(node.right),
            }

        return {
            "classes": list(self.classes),
            "schema": [
                {"name": f.name, "kind": f.kind.value} for f in self.schema.features
            ],
            "max_depth": self.max_depth,
            "nodes": _node(self.root),
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "DecisionTree":
        def _node(doc: Dict[str, Any]) -> Node:
            if "leaf" in doc:
                return LeafNode(int(doc["leaf"]), tuple(int(c) for c in doc["class_counts"]))
            return SplitNode(
                feature_index=int(doc["feature_index"]),
                threshold=float(doc["threshold"]),
                left=_node(doc["left"]),
                right=_node(doc["right"]),
                class_counts=tuple(int(c) for c in doc["class_counts"]),
            )

        schema = FeatureSchema(
            tuple(Feature(f["name"], FeatureKind(f["kind"])) for f in document["schema"])
        )
        return cls(_node(document["nodes"]), document["classes"], schema, document.get("max_depth"))


class TreeBuilder:
    """
    Recursive greedy CART growth. With `max_features` and an `rng`, each node
    considers a random feature subset, drawing further features only when the
    subset offers no valid split.
    """

    def __init__(
        self,
        config: TreeConfig,
        n_classes: int,
        max_features: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.config = config
        self.n_classes = n_classes
        self.max_features = max_features
        self.rng = rng

    def build(self, rows: np.ndarray, labels: np.ndarray) -> Node:
        return self._grow(rows, labels, depth=0)

    def _leaf(self, counts: np.ndarray) -> LeafNode:
        # argmax returns the lowest index among tied counts
        return LeafNode(int(np.argmax(counts)), tuple(int(c) for c in counts))

    def _split(self, rows: np.ndarray, labels: np.ndarray) -> Optional[SplitCandidate]:
        n_features = rows.shape[1]
        msl = self.config.min_samples_leaf
        if self.max_features is None or self.max_features >= n_features or self.rng is None:
            return best_split(rows, labels, self.n_classes, msl)

        order = self.rng.permutation(n_features)
        for stop in range(self.max_features, n_features + self.max_features, self.max_features):
            found = best_split(rows, labels, self.n_classes, msl, features=order[:stop])
            if found is not None:
                return found
        return None

    def _grow(self, rows: np.ndarray, labels: np.ndarray, depth: int) -> Node:
        counts = np.bincount(labels, minlength=self.n_classes)
        max_depth = self.config.max_depth
        if (
            (max_depth is not None and depth >= max_depth)
            or np.count_nonzero(counts) <= 1
            or labels.size < 2 * self.config.min_samples_leaf
        ):
            return self._leaf(counts)

        split = self._split(rows, labels)
        if split is None:
            return self._leaf(counts)

        goes_left = rows[:, split.feature_index] <= split.threshold
        return SplitNode(
            feature_index=split.feature_index,
            threshold=split.threshold,
            left=self._grow(rows[goes_left], labels[goes_left], depth + 1),
            right=self._grow(rows[~goes_left], labels[~goes_left], depth + 1),
            class_counts=tuple(int(c) for c in counts),
        )


def fit_tree(train: Dataset, config: TreeConfig = TreeConfig()) -> DecisionTree:
    """Deterministic greedy fit; identical inputs give identical trees."""
    if len(train) == 0:
        raise DatasetError(f"{train.id}: cannot fit a tree on an empty dataset")
    if train.has_missing():
        raise DatasetError(f"{train.id}: impute missing values before fitting")

    root = TreeBuilder(config, train.n_classes).build(train.values, train.labels)
    tree = DecisionTree(root, train.classes, train.schema, config.max_depth)
    logger.debug(
        f"DecisionTree: Fitted on '{train.id}' (depth {tree.depth}, {tree.n_leaves} leaves)"
    )
    return tree


def predict(tree: DecisionTree, record_values: Sequence[float]) -> int:
    return tree.predict(record_values)
