from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from app.data.dataset import ReferenceScores
from app.evaluation.metrics import MetricSet
from app.learners.tree import DecisionTree

Protocol = Literal["audit", "cross", "lodo", "types", "distinguish"]


class ProtocolError(ValueError):
    """Raised when a protocol precondition does not hold."""


class DepthSelection(BaseModel):
    per_depth: Dict[int, MetricSet]
    selected_depth: int
    tolerance: float = 0.025

    @property
    def selected(self) -> MetricSet:
        return self.per_depth[self.selected_depth]


class CrossMatrix(BaseModel):
    datasets: List[str]
    cells: List[List[MetricSet]]
    learner: str
    pairwise: bool = False
    features: Optional[List[str]] = None


class LodoResult(BaseModel):
    held_out: str
    in_sample: MetricSet
    out_of_sample: MetricSet
    features: List[str]


class ExperimentResult(BaseModel):
    """One protocol run as written to results.json."""

    protocol: Protocol
    label: str
    seed: int
    inputs_digest: str
    datasets: List[str]
    payload: Dict[str, Any] = Field(default_factory=dict)
    trees: Dict[str, Dict[str, Any]] = Field(default_factory=dict)


@dataclass
class AuditOutcome:
    dataset_id: str
    selection: DepthSelection
    tree: DecisionTree
    evaluation: str
    fold_metrics: Dict[int, List[MetricSet]] = field(default_factory=dict)
    features: List[str] = field(default_factory=list)
    reference: Optional[ReferenceScores] = None

    def payload(self) -> Dict[str, Any]:
        reference = None
        if self.reference is not None:
            reference = {
                "accuracy": self.reference.accuracy,
                "f1": self.reference.f1,
                "source": self.reference.source,
            }
        return {
            "selection": self.selection.model_dump(mode="json"),
            "metrics": self.selection.selected.model_dump(mode="json"),
            "evaluation": self.evaluation,
            "fold_metrics": {
                str(d): [m.model_dump(mode="json") for m in ms]
                for d, ms in self.fold_metrics.items()
            },
            "features": self.features,
            "reference": reference,
        }


@dataclass
class TypeOutcome:
    type_name: str
    selection: DepthSelection
    tree: DecisionTree
    n_per_class: int
    forest_metrics: Optional[MetricSet] = None

    @property
    def metrics(self) -> MetricSet:
        return self.selection.selected

    def payload(self) -> Dict[str, Any]:
        return {
            "type": self.type_name,
            "selection": self.selection.model_dump(mode="json"),
            "metrics": self.metrics.model_dump(mode="json"),
            "n_per_class": self.n_per_class,
            "forest_metrics": None
            if self.forest_metrics is None
            else self.forest_metrics.model_dump(mode="json"),
        }


@dataclass
class DistinguishOutcome:
    type_name: str
    selection: DepthSelection
    tree: DecisionTree
    n_datasets: int
    baselines: Dict[str, float]
    forest_metrics: Optional[MetricSet] = None

    @property
    def metrics(self) -> MetricSet:
        return self.selection.selected

    def payload(self) -> Dict[str, Any]:
        return {
            "type": self.type_name,
            "selection": self.selection.model_dump(mode="json"),
            "metrics": self.metrics.model_dump(mode="json"),
            "n_datasets": self.n_datasets,
            "baselines": self.baselines,
            "forest_metrics": None
            if self.forest_metrics is None
            else self.forest_metrics.model_dump(mode="json"),
        }
