import json
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from app.data.dataset import (
    Dataset,
    DatasetError,
    Feature,
    FeatureKind,
    FeatureSchema,
    ReferenceScores,
)
from app.data.manifest import Manifest

EPOCH = pd.Timestamp("1970-01-01", tz="UTC")
ONE_DAY = pd.Timedelta(days=1)

_TRUE_VALUES = {"1", "true", "t", "yes", "y"}
_FALSE_VALUES = {"0", "false", "f", "no", "n"}

Corpus = Dict[str, List[str]]


def _exact_float(cell: str) -> float:
    # Correctly rounded, so repr(float) cells reload bit-for-bit.
    try:
        return float(cell)
    except ValueError:
        return np.nan


class DatasetLoader:
    """Reads manifest-described account tables into typed Datasets."""

    @staticmethod
    def load_manifest(manifest_path: Union[str, Path]) -> Manifest:
        path = Path(manifest_path)
        if not path.exists():
            raise DatasetError(f"Manifest not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                return Manifest(**json.load(f))
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}: malformed manifest JSON: {e}") from e
        except (ValidationError, TypeError) as e:
            raise DatasetError(f"{path}: invalid manifest: {e}") from e

    @staticmethod
    def load_dataset(manifest_path: Union[str, Path]) -> Dataset:
        """Loads and types the accounts CSV referenced by a manifest."""
        manifest_path = Path(manifest_path)
        manifest = DatasetLoader.load_manifest(manifest_path)
        csv_path = manifest.resolve(manifest_path, manifest.accounts_csv)
        logger.info(f"DatasetLoader: Loading '{manifest.id}' from {csv_path}")

        frame = DatasetLoader._read_csv(csv_path, manifest.id)

        if manifest.label_column not in frame.columns:
            raise DatasetError(
                f"{manifest.id}: label column '{manifest.label_column}' is absent"
            )
        missing = [f.name for f in manifest.features if f.name not in frame.columns]
        if missing:
            raise DatasetError(f"{manifest.id}: feature columns absent: {missing}")

        schema = FeatureSchema(
            tuple(Feature(f.name, f.kind) for f in manifest.features),
            label_column=manifest.label_column,
            positive_label=manifest.positive_label,
        )
        classes = manifest.ordered_classes

        values = np.column_stack(
            [
                DatasetLoader._parse_column(frame[f.name], f.kind, f.encoding)
                for f in manifest.features
            ]
        )
        labels = DatasetLoader._map_labels(frame[manifest.label_column], manifest, classes)

        if manifest.id_column in frame.columns:
            record_ids = tuple(frame[manifest.id_column].astype(str))
        else:
            record_ids = tuple(str(i) for i in range(len(frame)))

        test_mask = None
        if manifest.split_column:
            test_mask = DatasetLoader._parse_split(frame, manifest)

        reference = None
        if manifest.reference is not None:
            reference = ReferenceScores(**manifest.reference.model_dump())

        n_missing = int(np.isnan(values).sum())
        if n_missing:
            logger.debug(f"DatasetLoader: '{manifest.id}' has {n_missing} missing cells")

        dataset = Dataset(
            id=manifest.id,
            schema=schema,
            classes=tuple(classes),
            record_ids=record_ids,
            values=values,
            labels=labels,
            bot_type=manifest.bot_type,
            test_mask=test_mask,
            reference=reference,
        )
        logger.info(
            f"DatasetLoader: '{manifest.id}' loaded with {len(dataset)} records, "
            f"classes {dataset.class_counts()}"
        )
        return dataset

    @staticmethod
    def load_tweets(tweets_path: Union[str, Path]) -> Corpus:
        """Loads a record_id,text CSV into a corpus keyed by record id."""
        path = Path(tweets_path)
        frame = DatasetLoader._read_csv(path, str(path))
        for column in ("record_id", "text"):
            if column not in frame.columns:
                raise DatasetError(f"{path}: tweets CSV lacks a '{column}' column")
        grouped = frame.groupby("record_id", sort=True)["text"]
        return {str(rid): list(texts) for rid, texts in grouped}

    @staticmethod
    def load_corpus_for(manifest_path: Union[str, Path]) -> Corpus:
        manifest_path = Path(manifest_path)
        manifest = DatasetLoader.load_manifest(manifest_path)
        if not manifest.tweets_csv:
            raise DatasetError(f"{manifest.id}: manifest declares no tweets_csv")
        return DatasetLoader.load_tweets(manifest.resolve(manifest_path, manifest.tweets_csv))

    @staticmethod
    def _read_csv(path: Path, owner: str) -> pd.DataFrame:
        if not path.exists():
            raise DatasetError(f"{owner}: CSV not found at {path}")
        try:
            return pd.read_csv(
                path, dtype=str, keep_default_na=False, encoding="utf-8"
            )
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise DatasetError(f"{owner}: unreadable CSV {path}: {e}") from e

    @staticmethod
    def _parse_column(
        raw: pd.Series, kind: FeatureKind, encoding: str = "datetime"
    ) -> np.ndarray:
        """Typed parse; cells that do not parse become NaN."""
        cleaned = raw.str.strip()
        if kind == FeatureKind.NUMERIC or (
            kind == FeatureKind.TIMESTAMP and encoding == "epoch_days"
        ):
            return cleaned.map(_exact_float).to_numpy(dtype=np.float64)

        if kind == FeatureKind.BOOLEAN:
            lowered = cleaned.str.lower()
            parsed = np.full(len(raw), np.nan)
            parsed[lowered.isin(_TRUE_VALUES).to_numpy()] = 1.0
            parsed[lowered.isin(_FALSE_VALUES).to_numpy()] = 0.0
            return parsed

        stamps = pd.to_datetime(
            cleaned.mask(cleaned == ""), errors="coerce", utc=True, format="mixed"
        )
        return ((stamps - EPOCH) / ONE_DAY).to_numpy(dtype=np.float64, na_value=np.nan)

    @staticmethod
    def _map_labels(raw: pd.Series, manifest: Manifest, classes: List[str]) -> np.ndarray:
        names = raw.str.strip().map(lambda v: manifest.label_map.get(v, v))
        unknown = sorted(set(names) - set(classes))
        if unknown:
            raise DatasetError(
                f"{manifest.id}: labels {unknown[:5]} are not in classes {classes}"
            )
        index = {name: i for i, name in enumerate(classes)}
        return names.map(index).to_numpy(dtype=np.int64)

    @staticmethod
    def _parse_split(frame: pd.DataFrame, manifest: Manifest) -> np.ndarray:
        column = manifest.split_column
        if column not in frame.columns:
            raise DatasetError(f"{manifest.id}: split column '{column}' is absent")
        split = frame[column].str.strip().str.lower()
        bad = sorted(set(split) - {"train", "test"})
        if bad:
            raise DatasetError(f"{manifest.id}: split values {bad} are not train/test")
        return (split == "test").to_numpy()
