from typing import List, Tuple

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from app.data.dataset import Dataset
from app.evaluation.results import ProtocolError

Split = Tuple[np.ndarray, np.ndarray]


class SplitError(ProtocolError):
    """Raised when a dataset cannot be split as requested."""


def stratified_folds(dataset: Dataset, k: int, seed: int) -> List[Split]:
    """Seeded stratified folds; per-class fold sizes differ by at most one."""
    if k < 2:
        raise SplitError(f"{dataset.id}: need at least 2 folds, got {k}")
    small = {c: n for c, n in dataset.class_counts().items() if 0 < n < k}
    if small:
        raise SplitError(f"{dataset.id}: classes with fewer than {k} records: {small}")

    folds = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [
        (np.sort(train), np.sort(test))
        for train, test in folds.split(np.zeros((len(dataset), 1)), dataset.labels)
    ]


def stratified_holdout(dataset: Dataset, test_fraction: float, seed: int) -> Split:
    """Seeded stratified train/test split; a manifest-declared split takes precedence."""
    if dataset.test_mask is not None:
        train, test = np.flatnonzero(~dataset.test_mask), np.flatnonzero(dataset.test_mask)
    else:
        try:
            train, test = train_test_split(
                np.arange(len(dataset)),
                test_size=test_fraction,
                stratify=dataset.labels,
                random_state=seed,
            )
        except ValueError as e:
            raise SplitError(f"{dataset.id}: degenerate split ({e})") from e

    return _checked(dataset, train, test)


def balanced_holdout(dataset: Dataset, test_fraction: float, seed: int) -> Split:
    """
    Seeded holdout of a class-balanced dataset that keeps the test side
    balanced too: every class contributes round(test_fraction * m) test rows.
    """
    counts = set(dataset.class_counts().values())
    if len(counts) != 1:
        raise SplitError(f"{dataset.id}: classes are not balanced: {dataset.class_counts()}")
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"{dataset.id}: test fraction must lie in (0, 1), got {test_fraction}")

    per_class = counts.pop()
    n_test = max(1, int(np.floor(test_fraction * per_class + 0.5)))
    if n_test >= per_class:
        raise SplitError(f"{dataset.id}: {per_class} records per class cannot be split")
    try:
        # An even test size over equal classes is allocated exactly n_test per class.
        train, test = train_test_split(
            np.arange(len(dataset)),
            test_size=n_test * dataset.n_classes,
            stratify=dataset.labels,
            random_state=seed,
        )
    except ValueError as e:
        raise SplitError(f"{dataset.id}: degenerate split ({e})") from e
    return _checked(dataset, train, test)


def _checked(dataset: Dataset, train: np.ndarray, test: np.ndarray) -> Split:
    present = set(np.unique(dataset.labels))
    for name, part in (("train", train), ("test", test)):
        if part.size == 0 or set(np.unique(dataset.labels[part])) != present:
            raise SplitError(f"{dataset.id}: degenerate split, {name} side misses a class")
    return np.sort(train), np.sort(test)
