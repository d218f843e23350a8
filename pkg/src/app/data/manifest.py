from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from app.data.dataset import FeatureKind


class FeatureEntry(BaseModel):
    name: str = Field(min_length=1)
    kind: FeatureKind = FeatureKind.NUMERIC
    # Timestamp cells: "datetime" strings, or "epoch_days" floats (days since 1970-01-01 UTC).
    encoding: Literal["datetime", "epoch_days"] = "datetime"


class ReferenceEntry(BaseModel):
    accuracy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    f1: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    source: Optional[str] = None


class Manifest(BaseModel):
    """JSON description binding an accounts CSV to a typed feature schema."""

    id: str = Field(min_length=1)
    bot_type: Optional[str] = None
    label_column: str = "label"
    classes: List[str] = Field(default_factory=lambda: ["human", "bot"])
    positive_label: str = "bot"
    features: List[FeatureEntry] = Field(min_length=1)
    accounts_csv: str
    tweets_csv: Optional[str] = None
    id_column: str = "record_id"
    label_map: Dict[str, str] = Field(default_factory=dict)
    split_column: Optional[str] = None
    reference: Optional[ReferenceEntry] = None

    @model_validator(mode="after")
    def check_classes(self) -> "Manifest":
        if len(self.classes) < 1 or len(set(self.classes)) != len(self.classes):
            raise ValueError(f"classes must be unique and non-empty: {self.classes}")
        if self.positive_label not in self.classes:
            raise ValueError(
                f"positive_label '{self.positive_label}' is not one of {self.classes}"
            )
        unknown = set(self.label_map.values()) - set(self.classes)
        if unknown:
            raise ValueError(f"label_map targets unknown classes {sorted(unknown)}")
        return self

    @property
    def ordered_classes(self) -> List[str]:
        """Binary manifests put the positive class last (human=0, bot=1)."""
        if len(self.classes) == 2:
            negative = next(c for c in self.classes if c != self.positive_label)
            return [negative, self.positive_label]
        return list(self.classes)

    def resolve(self, manifest_path: Path, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else manifest_path.parent / path
