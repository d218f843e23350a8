from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from app.data.dataset import Dataset, DatasetError, Feature, FeatureSchema

BINARY_CLASSES = ("human", "bot")


class DatasetProcessor:
    """
    Pure operations over immutable Datasets: schema intersection, projection
    with median imputation, merging and balanced sampling.
    """

    @staticmethod
    def common_feature_set(
        datasets: Sequence[Dataset], canonical: Optional[Sequence[str]] = None
    ) -> FeatureSchema:
        """
        Features usable across all datasets. A feature that is undeclared or
        entirely missing in any dataset is dropped.
        """
        if not datasets:
            raise DatasetError("common_feature_set needs at least one dataset")

        first = datasets[0]
        candidates = list(canonical) if canonical is not None else first.schema.names

        kept: List[Feature] = []
        for name in candidates:
            owners = [ds for ds in datasets if name in ds.schema]
            if len(owners) != len(datasets):
                continue
            if any(np.isnan(ds.column(name)).all() for ds in owners):
                logger.debug(f"DatasetProcessor: '{name}' is entirely missing somewhere")
                continue

            kinds = {ds.schema.kind(name) for ds in owners}
            if len(kinds) > 1:
                logger.warning(
                    f"DatasetProcessor: '{name}' has conflicting kinds {sorted(k.value for k in kinds)}; "
                    f"using '{owners[0].schema.kind(name).value}'"
                )
            kept.append(Feature(name, owners[0].schema.kind(name)))

        if not kept:
            raise DatasetError(
                f"empty common schema across {[ds.id for ds in datasets]}"
            )
        return FeatureSchema(
            tuple(kept), first.schema.label_column, first.schema.positive_label
        )

    @staticmethod
    def restrict(dataset: Dataset, schema: FeatureSchema) -> Dataset:
        """Selects and reorders columns to `schema` without touching missing cells."""
        absent = [name for name in schema.names if name not in dataset.schema]
        if absent:
            raise DatasetError(f"{dataset.id}: schema features absent: {absent}")

        columns = [dataset.schema.index(name) for name in schema.names]
        return Dataset(
            id=dataset.id,
            schema=schema,
            classes=dataset.classes,
            record_ids=dataset.record_ids,
            values=dataset.values[:, columns],
            labels=dataset.labels,
            bot_type=dataset.bot_type,
            test_mask=dataset.test_mask,
            reference=dataset.reference,
        )

    @staticmethod
    def lower_median(column: np.ndarray) -> float:
        present = np.sort(column[~np.isnan(column)])
        if present.size == 0:
            return float("nan")
        return float(present[(present.size - 1) // 2])

    @staticmethod
    def project(
        dataset: Dataset,
        schema: FeatureSchema,
        imputation_source: Optional[Dataset] = None,
    ) -> Dataset:
        """
        Restricts to `schema` and fills missing cells with the lower median of
        the same column in `imputation_source` (default: the dataset itself).
        """
        restricted = DatasetProcessor.restrict(dataset, schema)
        if not restricted.has_missing():
            return restricted

        source = imputation_source if imputation_source is not None else dataset
        values = restricted.values.copy()
        for j, name in enumerate(schema.names):
            gaps = np.isnan(values[:, j])
            if not gaps.any():
                continue
            if name not in source.schema:
                raise DatasetError(
                    f"{dataset.id}: imputation source '{source.id}' lacks '{name}'"
                )
            median = DatasetProcessor.lower_median(source.column(name))
            if np.isnan(median):
                raise DatasetError(
                    f"{dataset.id}: column '{name}' cannot be imputed, "
                    f"'{source.id}' has no values for it"
                )
            values[gaps, j] = median
            logger.debug(
                f"DatasetProcessor: Imputed {int(gaps.sum())} '{name}' cells in "
                f"'{dataset.id}' with {median}"
            )

        return Dataset(
            id=restricted.id,
            schema=schema,
            classes=restricted.classes,
            record_ids=restricted.record_ids,
            values=values,
            labels=restricted.labels,
            bot_type=restricted.bot_type,
            test_mask=restricted.test_mask,
            reference=restricted.reference,
        )

    @staticmethod
    def merge(
        parts: Sequence[Tuple[Dataset, str]], dataset_id: Optional[str] = None
    ) -> Dataset:
        """
        Relabels each part by its class name and stacks them. Classes follow
        first appearance; record ids are namespaced by source id.
        """
        if len(parts) < 2:
            raise DatasetError("merge needs at least two parts")

        schema = parts[0][0].schema
        classes: List[str] = []
        for ds, class_name in parts:
            if ds.schema.features != schema.features:
                raise DatasetError(
                    f"{ds.id}: schema {ds.schema.names} does not match {schema.names}"
                )
            if len(ds) == 0:
                raise DatasetError(f"{ds.id}: empty part")
            if class_name not in classes:
                classes.append(class_name)

        return Dataset(
            id=dataset_id or "+".join(ds.id for ds, _ in parts),
            schema=schema,
            classes=tuple(classes),
            record_ids=tuple(
                f"{ds.id}/{rid}" for ds, _ in parts for rid in ds.record_ids
            ),
            values=np.vstack([ds.values for ds, _ in parts]),
            labels=np.concatenate(
                [np.full(len(ds), classes.index(name)) for ds, name in parts]
            ),
            bot_type=parts[0][0].bot_type,
        )

    @staticmethod
    def concat(datasets: Sequence[Dataset], dataset_id: Optional[str] = None) -> Dataset:
        """Stacks datasets that share schema and class list, keeping their labels."""
        if not datasets:
            raise DatasetError("concat needs at least one dataset")
        first = datasets[0]
        for ds in datasets[1:]:
            if ds.schema.features != first.schema.features or ds.classes != first.classes:
                raise DatasetError(
                    f"{ds.id}: cannot pool with '{first.id}', schema or classes differ"
                )
        return Dataset(
            id=dataset_id or "+".join(ds.id for ds in datasets),
            schema=first.schema,
            classes=first.classes,
            record_ids=tuple(f"{ds.id}/{rid}" for ds in datasets for rid in ds.record_ids),
            values=np.vstack([ds.values for ds in datasets]),
            labels=np.concatenate([ds.labels for ds in datasets]),
        )

    @staticmethod
    def class_slice(dataset: Dataset, class_name: str) -> Dataset:
        """The records of one class, class list unchanged."""
        if class_name not in dataset.classes:
            raise DatasetError(f"{dataset.id}: unknown class '{class_name}'")
        rows = np.flatnonzero(dataset.labels == dataset.classes.index(class_name))
        if rows.size == 0:
            raise DatasetError(f"{dataset.id}: empty slice for class '{class_name}'")
        return dataset.subset(rows)

    @staticmethod
    def pool(
        datasets: Sequence[Dataset], class_name: str, dataset_id: Optional[str] = None
    ) -> Dataset:
        """Unions datasets into a single-class pool labelled `class_name`."""
        if not datasets:
            raise DatasetError("pool needs at least one dataset")
        if len(datasets) == 1:
            ds = datasets[0]
            return Dataset(
                id=dataset_id or ds.id,
                schema=ds.schema,
                classes=(class_name,),
                record_ids=tuple(f"{ds.id}/{rid}" for rid in ds.record_ids),
                values=ds.values,
                labels=np.zeros(len(ds), dtype=np.int64),
                bot_type=ds.bot_type,
            )
        return DatasetProcessor.merge(
            [(ds, class_name) for ds in datasets], dataset_id=dataset_id
        )

    @staticmethod
    def balanced_sample(
        a: Dataset,
        b: Dataset,
        seed: int,
        class_names: Tuple[str, str] = BINARY_CLASSES,
        dataset_id: Optional[str] = None,
    ) -> Dataset:
        """
        Binary dataset with min(|a|, |b|) records drawn without replacement from
        each slice; `a` becomes class 0 and `b` class 1.
        """
        for part in (a, b):
            if len(part) == 0:
                raise DatasetError(f"{part.id}: empty slice")
        if a.schema.features != b.schema.features:
            raise DatasetError(f"{a.id}/{b.id}: slices do not share a schema")

        rng = np.random.default_rng(seed)
        size = min(len(a), len(b))
        rows_a = np.sort(rng.choice(len(a), size=size, replace=False))
        rows_b = np.sort(rng.choice(len(b), size=size, replace=False))
        order = rng.permutation(2 * size)

        ids = [f"{a.id}/{a.record_ids[i]}" for i in rows_a] + [
            f"{b.id}/{b.record_ids[i]}" for i in rows_b
        ]
        values = np.vstack([a.values[rows_a], b.values[rows_b]])
        labels = np.concatenate(
            [np.zeros(size, dtype=np.int64), np.ones(size, dtype=np.int64)]
        )
        logger.debug(
            f"DatasetProcessor: Balanced sample of {size}+{size} from '{a.id}' and '{b.id}'"
        )
        return Dataset(
            id=dataset_id or f"{a.id}~{b.id}",
            schema=a.schema,
            classes=tuple(class_names),
            record_ids=tuple(ids[i] for i in order),
            values=values[order],
            labels=labels[order],
            bot_type=b.bot_type,
        )
