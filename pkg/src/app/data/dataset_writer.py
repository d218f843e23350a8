import json
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from loguru import logger

from app.data.dataset import Dataset, Feature, FeatureKind


class DatasetWriter:
    """Exports a Dataset to the manifest + accounts CSV layout read by DatasetLoader."""

    ACCOUNTS_FILENAME = "accounts.csv"
    MANIFEST_FILENAME = "manifest.json"

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)

    def write(self, dataset: Dataset) -> Path:
        """Writes <output_dir>/<dataset id>/{manifest.json, accounts.csv}; returns the manifest path."""
        target = self.output_dir / dataset.id
        target.mkdir(parents=True, exist_ok=True)

        frame = pd.DataFrame({"record_id": list(dataset.record_ids)})
        for i, feature in enumerate(dataset.schema.features):
            frame[feature.name] = self._format_column(dataset.values[:, i], feature.kind)
        frame[dataset.schema.label_column] = [dataset.classes[i] for i in dataset.labels]

        if dataset.test_mask is not None:
            frame["split"] = np.where(dataset.test_mask, "test", "train")

        accounts_path = target / self.ACCOUNTS_FILENAME
        frame.to_csv(accounts_path, index=False, lineterminator="\n")

        manifest = {
            "id": dataset.id,
            "bot_type": dataset.bot_type,
            "label_column": dataset.schema.label_column,
            "classes": list(dataset.classes),
            "positive_label": dataset.schema.positive_label,
            "features": [self._feature_entry(f) for f in dataset.schema.features],
            "accounts_csv": self.ACCOUNTS_FILENAME,
        }
        if dataset.test_mask is not None:
            manifest["split_column"] = "split"

        manifest_path = target / self.MANIFEST_FILENAME
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")

        logger.info(
            f"DatasetWriter: Exported '{dataset.id}' ({len(dataset)} records) to {target}"
        )
        return manifest_path

    @staticmethod
    def _feature_entry(feature: Feature) -> dict:
        entry = {"name": feature.name, "kind": feature.kind.value}
        if feature.kind == FeatureKind.TIMESTAMP:
            entry["encoding"] = "epoch_days"
        return entry

    @staticmethod
    def _format_column(column: np.ndarray, kind: FeatureKind) -> list:
        """Timestamps stay as float days since the epoch so a reload is exact."""
        missing = np.isnan(column)
        if kind == FeatureKind.BOOLEAN:
            text = [str(int(v)) for v in np.where(missing, 0.0, column)]
        else:
            text = [repr(float(v)) for v in column]
        return ["" if m else t for t, m in zip(text, missing)]
