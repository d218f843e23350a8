from typing import Union

from app.data.dataset import Dataset
from app.learners.forest import Forest, ForestConfig, fit_forest
from app.learners.tree import DecisionTree, TreeConfig, fit_tree

LearnerConfig = Union[TreeConfig, ForestConfig]
Model = Union[DecisionTree, Forest]


def fit_model(train: Dataset, config: LearnerConfig, workers: int = 1) -> Model:
    if isinstance(config, ForestConfig):
        return fit_forest(train, config, workers=workers)
    if isinstance(config, TreeConfig):
        return fit_tree(train, config)
    raise TypeError(f"Unsupported learner config: {type(config).__name__}")


def describe(config: LearnerConfig) -> str:
    if isinstance(config, ForestConfig):
        return f"forest(n_trees={config.n_trees}, max_features={config.max_features})"
    depth = "unlimited" if config.max_depth is None else config.max_depth
    return f"tree(max_depth={depth})"
