import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.data.dataset import Dataset, DatasetError, Feature, FeatureKind, FeatureSchema
from app.data.dataset_writer import DatasetWriter
from app.processors.dataset_processor import BINARY_CLASSES

# --- Per-class value generators ---


class UniformGenerator(BaseModel):
    kind: Literal["uniform"] = "uniform"
    lo: float
    hi: float

    @model_validator(mode="after")
    def check_range(self):
        if not self.hi > self.lo:
            raise ValueError(f"uniform needs lo < hi, got [{self.lo}, {self.hi})")
        return self

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)


class NormalGenerator(BaseModel):
    kind: Literal["normal"] = "normal"
    mean: float
    sd: float = Field(ge=0.0)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size=n)


class ConstantGenerator(BaseModel):
    kind: Literal["constant"] = "constant"
    value: float

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, self.value, dtype=np.float64)


class BernoulliGenerator(BaseModel):
    kind: Literal["bernoulli"] = "bernoulli"
    p: float = Field(ge=0.0, le=1.0)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return (rng.random(n) < self.p).astype(np.float64)


ValueGenerator = Annotated[
    Union[UniformGenerator, NormalGenerator, ConstantGenerator, BernoulliGenerator],
    Field(discriminator="kind"),
]


# --- Scenario ---


class FeatureScenario(BaseModel):
    name: str = Field(min_length=1)
    kind: FeatureKind = FeatureKind.NUMERIC
    human: ValueGenerator
    bot: ValueGenerator

    def swapped(self) -> "FeatureScenario":
        return self.model_copy(update={"human": self.bot, "bot": self.human})


class ScenarioSpec(BaseModel):
    """A labeled population whose two classes differ only through the listed generators."""

    id: str = Field(default="synthetic", min_length=1)
    n_per_class: int = Field(ge=1)
    features: List[FeatureScenario] = Field(min_length=1)
    label_noise: float = 0.0
    seed: int = 0
    bot_type: Optional[str] = None
    variant: Literal["single", "reversed_pair"] = "single"

    @field_validator("label_noise")
    def check_noise(cls, v):
        if not 0.0 <= v < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")
        return v

    @field_validator("features")
    def check_names(cls, v):
        names = [f.name for f in v]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate feature names in scenario: {names}")
        return v


def load_scenario(path: Union[str, Path]) -> ScenarioSpec:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Scenario not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return ScenarioSpec(**json.load(f))
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: malformed scenario JSON: {e}") from e
    except ValidationError as e:
        raise DatasetError(f"{path}: invalid scenario: {e}") from e


def generate(spec: ScenarioSpec) -> Dataset:
    """
    Draws n_per_class humans then n_per_class bots, feature by feature, from
    one seeded stream; afterwards each label flips with probability label_noise.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_per_class

    blocks = []
    for side in ("human", "bot"):
        columns = [getattr(f, side).draw(rng, n) for f in spec.features]
        blocks.append(np.column_stack(columns))
    values = np.vstack(blocks)

    labels = np.repeat(np.array([0, 1], dtype=np.int64), n)
    if spec.label_noise > 0:
        flips = rng.random(2 * n) < spec.label_noise
        labels = np.where(flips, 1 - labels, labels)
        logger.debug(f"Generator: '{spec.id}' flipped {int(flips.sum())} labels")

    schema = FeatureSchema(tuple(Feature(f.name, f.kind) for f in spec.features))
    return Dataset(
        id=spec.id,
        schema=schema,
        classes=BINARY_CLASSES,
        record_ids=tuple(f"{spec.id}-{i:06d}" for i in range(2 * n)),
        values=values,
        labels=labels,
        bot_type=spec.bot_type,
    )


def swap(spec: ScenarioSpec) -> ScenarioSpec:
    """Same scenario with the human and bot generators exchanged on every feature."""
    return spec.model_copy(update={"features": [f.swapped() for f in spec.features]})


def reversed_pair(spec: ScenarioSpec) -> Tuple[Dataset, Dataset]:
    """`<id>-a` drawn from the spec, `<id>-b` from its swap, both with the spec's seed."""
    first = generate(spec.model_copy(update={"id": f"{spec.id}-a"}))
    second = generate(swap(spec).model_copy(update={"id": f"{spec.id}-b"}))
    return first, second


def export(spec: ScenarioSpec, output_dir: Union[str, Path]) -> List[Path]:
    """Generates the scenario (one dataset, or two for reversed_pair) and writes manifests."""
    datasets = list(reversed_pair(spec)) if spec.variant == "reversed_pair" else [generate(spec)]
    writer = DatasetWriter(output_dir)
    paths = [writer.write(ds) for ds in datasets]
    logger.success(f"Generator: Wrote {len(paths)} dataset(s) for scenario '{spec.id}'")
    return paths
