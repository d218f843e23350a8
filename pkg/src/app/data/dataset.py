import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


class DatasetError(ValueError):
    """Raised when a dataset, manifest or dataset operation is invalid."""


class FeatureKind(str, Enum):
    NUMERIC = "numeric"
    BOOLEAN = "boolean"
    TIMESTAMP = "timestamp"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: FeatureKind = FeatureKind.NUMERIC


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list. Order drives split tie-breaking, so it is preserved everywhere."""

    features: Tuple[Feature, ...]
    label_column: str = "label"
    positive_label: str = "bot"

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        seen = set()
        for feature in self.features:
            if not feature.name:
                raise DatasetError("Feature names must be non-empty")
            if feature.name == self.label_column:
                raise DatasetError(
                    f"Feature '{feature.name}' collides with the label column"
                )
            if feature.name in seen:
                raise DatasetError(f"Duplicate feature name '{feature.name}'")
            seen.add(feature.name)

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    def __len__(self) -> int:
        return len(self.features)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"Feature '{name}' is not in the schema") from None

    def kind(self, name: str) -> FeatureKind:
        return self.features[self.index(name)].kind

    def select(self, names: Sequence[str]) -> "FeatureSchema":
        """Returns a schema with the given features, in the given order."""
        return FeatureSchema(
            tuple(self.features[self.index(n)] for n in names),
            self.label_column,
            self.positive_label,
        )

    def extend(self, features: Iterable[Feature]) -> "FeatureSchema":
        return FeatureSchema(
            self.features + tuple(features), self.label_column, self.positive_label
        )


@dataclass(frozen=True)
class AccountRecord:
    record_id: str
    values: Tuple[Optional[float], ...]
    label: int


@dataclass(frozen=True)
class ReferenceScores:
    """Literature scores supplied by the user; rendered, never computed."""

    accuracy: Optional[float] = None
    f1: Optional[float] = None
    source: Optional[str] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable labeled account table.

    Values are stored column-aligned to the schema in a float matrix where
    NaN marks a missing cell. Booleans are 0/1, timestamps are fractional
    days since 1970-01-01 UTC.
    """

    id: str
    schema: FeatureSchema
    classes: Tuple[str, ...]
    record_ids: Tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray
    bot_type: Optional[str] = None
    test_mask: Optional[np.ndarray] = None
    reference: Optional[ReferenceScores] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        n = len(self.record_ids)

        if values.ndim == 1 and len(self.schema) == 0:
            values = values.reshape(n, 0)
        if n == 0:
            raise DatasetError(f"{self.id}: dataset has no records")
        if values.shape != (n, len(self.schema)):
            raise DatasetError(
                f"{self.id}: value matrix shape {values.shape} does not match "
                f"{n} records x {len(self.schema)} features"
            )
        if labels.shape != (n,):
            raise DatasetError(f"{self.id}: expected {n} labels, got {labels.shape}")
        if not self.classes:
            raise DatasetError(f"{self.id}: class list is empty")
        if len(set(self.classes)) != len(self.classes):
            raise DatasetError(f"{self.id}: duplicate class names {self.classes}")
        if labels.min() < 0 or labels.max() >= len(self.classes):
            raise DatasetError(f"{self.id}: label index outside the class list")
        if len(set(self.record_ids)) != n:
            raise DatasetError(f"{self.id}: duplicate record ids")

        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "record_ids", tuple(str(r) for r in self.record_ids))

        if self.test_mask is not None:
            mask = np.array(self.test_mask, dtype=bool, copy=True)
            if mask.shape != (n,):
                raise DatasetError(f"{self.id}: split mask length mismatch")
            mask.setflags(write=False)
            object.__setattr__(self, "test_mask", mask)

    def __len__(self) -> int:
        return len(self.record_ids)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def records(self) -> List[AccountRecord]:
        return [
            AccountRecord(
                rid,
                tuple(None if np.isnan(v) else float(v) for v in row),
                int(label),
            )
            for rid, row, label in zip(self.record_ids, self.values, self.labels)
        ]

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.labels, minlength=self.n_classes)
        return {name: int(c) for name, c in zip(self.classes, counts)}

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def subset(self, indices: Sequence[int], dataset_id: Optional[str] = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise DatasetError(f"{self.id}: subset selects no records")
        return Dataset(
            id=dataset_id or self.id,
            schema=self.schema,
            classes=self.classes,
            record_ids=tuple(self.record_ids[i] for i in idx),
            values=self.values[idx],
            labels=self.labels[idx],
            bot_type=self.bot_type,
            test_mask=None if self.test_mask is None else self.test_mask[idx],
            reference=self.reference,
        )

    def require_binary(self) -> None:
        if self.n_classes != 2:
            raise DatasetError(
                f"{self.id}: binary protocol needs 2 classes, found {self.classes}"
            )
        empty = [c for c, n in self.class_counts().items() if n == 0]
        if empty:
            raise DatasetError(f"{self.id}: no records for class(es) {empty}")


def inputs_digest(datasets: Sequence[Dataset]) -> str:
    """Stable sha256 over ids, schemas, values and labels of the inputs."""
    digest = hashlib.sha256()
    for ds in datasets:
        digest.update(ds.id.encode())
        digest.update("|".join(ds.schema.names).encode())
        digest.update("|".join(ds.classes).encode())
        digest.update("\n".join(ds.record_ids).encode())
        digest.update(np.ascontiguousarray(ds.values).tobytes())
        digest.update(np.ascontiguousarray(ds.labels).tobytes())
    return digest.hexdigest()
