from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_serializer
from sklearn.metrics import confusion_matrix


class MetricError(ValueError):
    """Raised when a metric is requested outside its definition."""


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes. Class 1 is positive in the binary case."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise MetricError(f"Confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise MetricError("Confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def binary(cls, tp: int, fp: int, fn: int, tn: int) -> "ConfusionMatrix":
        return cls(np.array([[tn, fp], [fn, tp]]))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _require_binary(self) -> None:
        if self.n_classes != 2:
            raise MetricError(f"Binary quantity requested on a {self.n_classes}-class matrix")

    @property
    def tp(self) -> int:
        self._require_binary()
        return int(self.counts[1, 1])

    @property
    def fn(self) -> int:
        self._require_binary()
        return int(self.counts[1, 0])

    @property
    def fp(self) -> int:
        self._require_binary()
        return int(self.counts[0, 1])

    @property
    def tn(self) -> int:
        self._require_binary()
        return int(self.counts[0, 0])


class MetricSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(ge=0.0, le=1.0)
    f1: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    balanced_accuracy: float = Field(ge=0.0, le=1.0)

    @field_serializer("accuracy", "f1", "balanced_accuracy")
    def _significant(self, value: Optional[float]) -> Optional[float]:
        return None if value is None else float(f"{value:.15g}")


def confusion(
    truth: Sequence[int], predictions: Sequence[int], n_classes: int
) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if truth.shape != predictions.shape:
        raise MetricError(f"Length mismatch: {truth.size} truths vs {predictions.size} predictions")
    if truth.size == 0:
        raise MetricError("Cannot build a confusion matrix from empty input")
    for name, arr in (("truth", truth), ("predictions", predictions)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise MetricError(f"{name} has class indices outside 0..{n_classes - 1}")
    return ConfusionMatrix(confusion_matrix(truth, predictions, labels=list(range(n_classes))))


def accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of examples labeled correctly."""
    if cm.total == 0:
        raise MetricError("Accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def f1(cm: ConfusionMatrix) -> float:
    """2TP / (2TP + FP + FN); 0 when there are errors but no true positives."""
    tp, fp, fn = cm.tp, cm.fp, cm.fn
    if tp + fp + fn == 0:
        raise MetricError("F1 undefined: no positive truths and no positive predictions")
    return float(2 * tp / (2 * tp + fp + fn))


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-class recall over classes that have records."""
    support = cm.counts.sum(axis=1)
    present = support > 0
    if not present.any():
        raise MetricError("Balanced accuracy of an empty confusion matrix")
    recall = np.diag(cm.counts)[present] / support[present]
    return float(recall.mean())


def metric_set(cm: ConfusionMatrix) -> MetricSet:
    score = None
    if cm.n_classes == 2:
        try:
            score = f1(cm)
        except MetricError as e:
            logger.warning(f"Metrics: {e}; reporting F1 as absent")
    return MetricSet(accuracy=accuracy(cm), f1=score, balanced_accuracy=balanced_accuracy(cm))


def evaluate(truth: Sequence[int], predictions: Sequence[int], n_classes: int) -> MetricSet:
    return metric_set(confusion(truth, predictions, n_classes))


def mean_metrics(metrics: Sequence[MetricSet]) -> MetricSet:
    """Unweighted mean; F1 is averaged only when every entry has it."""
    if not metrics:
        raise MetricError("Cannot average an empty list of metrics")
    f1_values = [m.f1 for m in metrics]
    return MetricSet(
        accuracy=float(np.mean([m.accuracy for m in metrics])),
        f1=None if any(v is None for v in f1_values) else float(np.mean(f1_values)),
        balanced_accuracy=float(np.mean([m.balanced_accuracy for m in metrics])),
    )


def naive_baselines(labels: Sequence[int], n_classes: int) -> dict:
    """Majority-class accuracy and the chance-level balanced accuracy 1/#classes."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    return {
        "majority_accuracy": float(counts.max() / counts.sum()),
        "balanced_accuracy": 1.0 / n_classes,
    }
