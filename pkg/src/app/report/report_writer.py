import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from app.evaluation.results import ExperimentResult
from app.learners.tree import DecisionTree
from app.learners.tree_renderer import TreeRenderer

MISSING = "n/a"
RESULTS_FILENAME = "results.json"
REPORT_FILENAME = "report.md"
MATRIX_METRICS = ("balanced_accuracy", "accuracy", "f1")


class ReportError(RuntimeError):
    """Raised when a report cannot be rendered or written."""


@dataclass
class ReportBundle:
    output_dir: Path
    summary: Path
    results: Path
    matrices: List[Path] = field(default_factory=list)
    trees: List[Path] = field(default_factory=list)

    @property
    def files(self) -> List[Path]:
        return [self.summary, self.results, *self.matrices, *self.trees]


def round_half_up(value: Optional[float]) -> str:
    """Two decimals, half away from zero on the shortest decimal form (0.975 -> 0.98)."""
    if value is None:
        return MISSING
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def signed(value: Optional[float]) -> str:
    if value is None:
        return MISSING
    text = round_half_up(abs(value))
    sign = "-" if value < 0 and text != "0.00" else "+"
    return f"{sign}{text}"


def triple(metrics: Optional[Dict[str, Any]]) -> str:
    """'Acc./F1/bal. acc.' cell."""
    if metrics is None:
        return MISSING
    return "/".join(
        round_half_up(metrics.get(key)) for key in ("accuracy", "f1", "balanced_accuracy")
    )


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_") or "tree"


def load_results(path: Union[str, Path]) -> List[ExperimentResult]:
    path = Path(path)
    if not path.exists():
        raise ReportError(f"Results file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            documents = json.load(f)
        return [ExperimentResult(**doc) for doc in documents]
    except (json.JSONDecodeError, TypeError, ValidationError) as e:
        raise ReportError(f"{path}: invalid results document: {e}") from e


class ReportWriter:
    """
    Renders ExperimentResults into report.md, matrix CSVs, tree drawings and
    the raw results.json. Output depends only on the results passed in.
    """

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)

    def render(self, results: Sequence[ExperimentResult]) -> ReportBundle:
        if not results:
            raise ReportError("Nothing to render: no experiment results")

        try:
            (self.output_dir / "trees").mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportError(f"Cannot create report directory {self.output_dir}: {e}") from e

        by_protocol: Dict[str, List[ExperimentResult]] = {}
        for result in results:
            by_protocol.setdefault(result.protocol, []).append(result)

        sections = ["# Dataset audit report", ""]
        bundle = ReportBundle(
            output_dir=self.output_dir,
            summary=self.output_dir / REPORT_FILENAME,
            results=self.output_dir / RESULTS_FILENAME,
        )

        if "audit" in by_protocol:
            sections += self._audit_section(by_protocol["audit"])
        if "cross" in by_protocol:
            sections += self._cross_section(by_protocol["cross"], bundle)
        if "lodo" in by_protocol:
            sections += self._lodo_section(by_protocol["lodo"])
        if "types" in by_protocol:
            sections += self._types_section(by_protocol["types"])
        if "distinguish" in by_protocol:
            sections += self._distinguish_section(by_protocol["distinguish"])

        bundle.trees = self._write_trees(results)
        sections += self._provenance_section(results)

        self._write_text(bundle.summary, "\n".join(sections).rstrip("\n") + "\n")
        documents = [r.model_dump(mode="json") for r in results]
        self._write_text(bundle.results, json.dumps(documents, indent=2, sort_keys=True) + "\n")

        logger.success(f"ReportWriter: Wrote {len(bundle.files)} files to {self.output_dir}")
        return bundle

    # --- Sections ---

    @staticmethod
    def _audit_section(results: List[ExperimentResult]) -> List[str]:
        with_reference = any(r.payload.get("reference") for r in results)
        header = "| Dataset | Acc./F1/bal. acc. | Depth | Evaluation |"
        rule = "|---|---|---|---|"
        if with_reference:
            header += " Reference Acc./F1 | SDT − Reference |"
            rule += "---|---|"

        lines = ["## Shallow decision trees", "", header, rule]
        for result in results:
            payload = result.payload
            metrics = payload["metrics"]
            row = (
                f"| {result.datasets[0]} | {triple(metrics)} | "
                f"{payload['selection']['selected_depth']} | {payload['evaluation']} |"
            )
            if with_reference:
                reference = payload.get("reference") or {}
                acc, f1 = reference.get("accuracy"), reference.get("f1")
                deltas = [
                    None if ref is None or ours is None else ours - ref
                    for ours, ref in ((metrics["accuracy"], acc), (metrics["f1"], f1))
                ]
                row += (
                    f" {round_half_up(acc)}/{round_half_up(f1)} | "
                    f"{signed(deltas[0])}/{signed(deltas[1])} |"
                )
            lines.append(row)
        return lines + [""]

    def _cross_section(self, results: List[ExperimentResult], bundle: ReportBundle) -> List[str]:
        lines = []
        for n, result in enumerate(results, start=1):
            payload = result.payload
            ids = payload["datasets"]
            suffix = "" if n == 1 else f"_{n}"
            mode = "pairwise feature intersection" if payload.get("pairwise") else "common features"
            lines += [
                f"## Cross-dataset balanced accuracy{'' if n == 1 else f' ({n})'}",
                "",
                f"Rows train, columns test. Learner: {payload['learner']}; {mode}"
                + (f" ({', '.join(payload['features'])})" if payload.get("features") else "")
                + ".",
                "",
                "| Train \\ Test | " + " | ".join(ids) + " |",
                "|---|" + "---|" * len(ids),
            ]
            for train_id, row in zip(ids, payload["cells"]):
                cells = " | ".join(round_half_up(cell["balanced_accuracy"]) for cell in row)
                lines.append(f"| {train_id} | {cells} |")
            lines.append("")

            for metric in MATRIX_METRICS:
                path = self.output_dir / f"matrix_{metric}{suffix}.csv"
                frame = pd.DataFrame(
                    [[round_half_up(cell[metric]) for cell in row] for row in payload["cells"]],
                    index=pd.Index(ids, name="train"),
                    columns=ids,
                )
                try:
                    frame.to_csv(path, lineterminator="\n")
                except OSError as e:
                    raise ReportError(f"Cannot write {path}: {e}") from e
                bundle.matrices.append(path)
        return lines

    @staticmethod
    def _lodo_section(results: List[ExperimentResult]) -> List[str]:
        lines = [
            "## Leave-one-dataset-out",
            "",
            "| Held-out dataset | In-sample Acc./F1/bal. acc. | Out-of-sample Acc./F1/bal. acc. |",
            "|---|---|---|",
        ]
        for result in results:
            for entry in result.payload["results"]:
                lines.append(
                    f"| {entry['held_out']} | {triple(entry['in_sample'])} | "
                    f"{triple(entry['out_of_sample'])} |"
                )
        return lines + [""]

    @staticmethod
    def _types_section(results: List[ExperimentResult]) -> List[str]:
        with_forest = any(r.payload.get("forest_metrics") for r in results)
        header = "| Bot type | Acc./bal. acc. | Depth | Accounts per class |"
        rule = "|---|---|---|---|"
        if with_forest:
            header += " Forest Acc./F1/bal. acc. |"
            rule += "---|"
        lines = ["## Bot types versus humans", "", header, rule]
        for result in results:
            payload = result.payload
            metrics = payload["metrics"]
            row = (
                f"| {payload['type']} | {round_half_up(metrics['accuracy'])}/"
                f"{round_half_up(metrics['balanced_accuracy'])} | "
                f"{payload['selection']['selected_depth']} | {payload['n_per_class']} |"
            )
            if with_forest:
                row += f" {triple(payload.get('forest_metrics'))} |"
            lines.append(row)
        return lines + [""]

    @staticmethod
    def _distinguish_section(results: List[ExperimentResult]) -> List[str]:
        with_forest = any(r.payload.get("forest_metrics") for r in results)
        header = "| Bot type | Datasets | Acc./bal. acc. | Depth | Naive Acc./bal. acc. |"
        rule = "|---|---|---|---|---|"
        if with_forest:
            header += " Forest Acc./bal. acc. |"
            rule += "---|"
        lines = ["## Distinguishing datasets within a bot type", "", header, rule]
        for result in results:
            payload = result.payload
            metrics, baselines = payload["metrics"], payload["baselines"]
            row = (
                f"| {payload['type']} | {payload['n_datasets']} | "
                f"{round_half_up(metrics['accuracy'])}/{round_half_up(metrics['balanced_accuracy'])} | "
                f"{payload['selection']['selected_depth']} | "
                f"{round_half_up(baselines['majority_accuracy'])}/"
                f"{round_half_up(baselines['balanced_accuracy'])} |"
            )
            if with_forest:
                forest = payload.get("forest_metrics")
                row += (
                    f" {MISSING} |"
                    if forest is None
                    else f" {round_half_up(forest['accuracy'])}/"
                    f"{round_half_up(forest['balanced_accuracy'])} |"
                )
            lines.append(row)
        return lines + [""]

    @staticmethod
    def _provenance_section(results: Sequence[ExperimentResult]) -> List[str]:
        lines = ["## Runs", "", "| Protocol | Label | Seed | Inputs digest |", "|---|---|---|---|"]
        for result in results:
            lines.append(
                f"| {result.protocol} | {result.label} | {result.seed} | "
                f"`{result.inputs_digest[:16]}` |"
            )
        return lines + [""]

    # --- Files ---

    def _write_trees(self, results: Sequence[ExperimentResult]) -> List[Path]:
        written: List[Path] = []
        used: Dict[str, int] = {}
        for result in results:
            for label, document in result.trees.items():
                name = safe_name(label)
                used[name] = used.get(name, 0) + 1
                if used[name] > 1:
                    name = f"{name}_{used[name]}"

                tree = DecisionTree.from_dict(document)
                text_path = self.output_dir / "trees" / f"{name}.txt"
                dot_path = self.output_dir / "trees" / f"{name}.dot"
                self._write_text(text_path, TreeRenderer.render_ascii(tree))
                self._write_text(dot_path, TreeRenderer.to_dot(tree, name=name))
                written += [text_path, dot_path]
        return written

    @staticmethod
    def _write_text(path: Path, text: str) -> None:
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        except OSError as e:
            raise ReportError(f"Cannot write {path}: {e}") from e
