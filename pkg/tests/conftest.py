import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pytest

from app.data.dataset import Dataset, Feature, FeatureKind, FeatureSchema
from app.synth.generator import ScenarioSpec


def make_dataset(
    values,
    labels,
    names: Optional[Sequence[str]] = None,
    kinds: Optional[Sequence[FeatureKind]] = None,
    dataset_id: str = "toy",
    classes=("human", "bot"),
    bot_type: Optional[str] = None,
    test_mask=None,
) -> Dataset:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    names = list(names) if names is not None else [f"f{i}" for i in range(values.shape[1])]
    kinds = list(kinds) if kinds is not None else [FeatureKind.NUMERIC] * len(names)
    return Dataset(
        id=dataset_id,
        schema=FeatureSchema(tuple(Feature(n, k) for n, k in zip(names, kinds))),
        classes=tuple(classes),
        record_ids=tuple(f"r{i}" for i in range(values.shape[0])),
        values=values,
        labels=np.asarray(labels, dtype=np.int64),
        bot_type=bot_type,
        test_mask=test_mask,
    )


def write_manifest(
    directory: Path,
    rows: List[Dict[str, str]],
    features: List[Dict[str, str]],
    **extra,
) -> Path:
    """Writes accounts.csv + manifest.json into `directory` and returns the manifest path."""
    directory.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0].keys())
    lines = [",".join(columns)] + [",".join(str(r[c]) for c in columns) for r in rows]
    (directory / "accounts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {"id": directory.name, "features": features, "accounts_csv": "accounts.csv"}
    manifest.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


def date_cutoff_spec(n_per_class: int = 1000, label_noise: float = 0.0, seed: int = 0, **kw):
    return ScenarioSpec(
        id=kw.pop("id", "date-cutoff"),
        n_per_class=n_per_class,
        label_noise=label_noise,
        seed=seed,
        features=[
            {
                "name": "created_at",
                "kind": "timestamp",
                "human": {"kind": "uniform", "lo": 0, "hi": 14000},
                "bot": {"kind": "uniform", "lo": 14560, "hi": 14800},
            },
            {
                "name": "followers",
                "human": {"kind": "normal", "mean": 300, "sd": 50},
                "bot": {"kind": "normal", "mean": 300, "sd": 50},
            },
        ],
        **kw,
    )


def activity_spec(n_per_class: int = 200, label_noise: float = 0.0, seed: int = 0, **kw):
    """Humans quiet, bots busy on every canonical count."""
    low = {"kind": "uniform", "lo": 0, "hi": 100}
    high = {"kind": "uniform", "lo": 1000, "hi": 5000}
    return ScenarioSpec(
        id=kw.pop("id", "activity"),
        n_per_class=n_per_class,
        label_noise=label_noise,
        seed=seed,
        features=[
            {"name": name, "human": low, "bot": high}
            for name in ("followers", "following", "tweets", "lists")
        ],
        **kw,
    )


@pytest.fixture
def separable() -> Dataset:
    """100 records, 50/50, perfectly split by f0 at 49.5."""
    rng = np.random.default_rng(3)
    x = np.arange(100, dtype=np.float64)
    noise = rng.normal(size=100)
    return make_dataset(np.column_stack([x, noise]), (x >= 50).astype(int), names=["x", "noise"])
