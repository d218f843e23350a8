import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from loguru import logger

from app.data.dataset import Dataset, DatasetError, FeatureSchema
from app.learners.tree import DecisionTree, TreeBuilder, TreeConfig
from app.services.worker_pool import WorkerPool

MaxFeatures = Union[str, int]


@dataclass(frozen=True)
class ForestConfig:
    """Defaults mirror the reference library: 100 trees, bootstrap n-of-n, sqrt features, no depth limit."""

    n_trees: int = 100
    bootstrap: bool = True
    max_features: MaxFeatures = "sqrt"
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "all"):
            raise ValueError(f"max_features must be 'sqrt', 'all' or an int, got {self.max_features}")
        if isinstance(self.max_features, int) and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return max(1, math.isqrt(n_features))
        return min(int(self.max_features), n_features)

    def tree_config(self) -> TreeConfig:
        return TreeConfig(max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf)


def child_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Generator for one tree, independent of the order trees are fitted in."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))


def _fit_member(
    values: np.ndarray,
    labels: np.ndarray,
    classes: Sequence[str],
    schema: FeatureSchema,
    config: ForestConfig,
    tree_index: int,
) -> DecisionTree:
    rng = child_rng(config.seed, tree_index)
    if config.bootstrap:
        rows = rng.integers(0, labels.size, size=labels.size)
        values, labels = values[rows], labels[rows]

    builder = TreeBuilder(
        config.tree_config(),
        n_classes=len(classes),
        max_features=config.features_per_split(values.shape[1]),
        rng=rng,
    )
    return DecisionTree(builder.build(values, labels), classes, schema, config.max_depth)


class Forest:
    def __init__(
        self,
        trees: List[DecisionTree],
        config: ForestConfig,
        classes: Sequence[str],
        schema: FeatureSchema,
    ):
        self.trees = trees
        self.config = config
        self.classes = tuple(classes)
        self.schema = schema

    def votes(self, matrix: np.ndarray) -> np.ndarray:
        """(rows, classes) matrix of tree votes."""
        predictions = np.stack([tree.predict_many(matrix) for tree in self.trees], axis=1)
        counts = np.zeros((predictions.shape[0], len(self.classes)), dtype=np.int64)
        for c in range(len(self.classes)):
            counts[:, c] = (predictions == c).sum(axis=1)
        return counts

    def predict_many(self, matrix: np.ndarray) -> np.ndarray:
        # argmax resolves vote ties to the lowest class index
        return np.argmax(self.votes(matrix), axis=1)

    def predict(self, record_values: Sequence[float]) -> int:
        values = np.asarray(record_values, dtype=np.float64)
        if values.shape != (len(self.schema),):
            raise ValueError(f"Expected {len(self.schema)} feature values")
        return int(self.predict_many(values.reshape(1, -1))[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": asdict(self.config),
            "classes": list(self.classes),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "Forest":
        trees = [DecisionTree.from_dict(t) for t in document["trees"]]
        return cls(trees, ForestConfig(**document["config"]), document["classes"], trees[0].schema)


def fit_forest(train: Dataset, config: ForestConfig = ForestConfig(), workers: int = 1) -> Forest:
    """Bagged unrestricted trees; tree t draws from child_rng(seed, t)."""
    if len(train) == 0:
        raise DatasetError(f"{train.id}: cannot fit a forest on an empty dataset")
    if train.has_missing():
        raise DatasetError(f"{train.id}: impute missing values before fitting")

    jobs = [
        (train.values, train.labels, train.classes, train.schema, config, t)
        for t in range(config.n_trees)
    ]
    trees = WorkerPool(workers).map(_fit_member, jobs)
    logger.debug(
        f"Forest: Fitted {len(trees)} trees on '{train.id}' "
        f"(max_features={config.features_per_split(len(train.schema))}, seed={config.seed})"
    )
    return Forest(trees, config, train.classes, train.schema)


def predict_forest(forest: Forest, record_values: Sequence[float]) -> int:
    return forest.predict(record_values)
