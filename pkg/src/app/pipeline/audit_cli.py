import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from loguru import logger

from app.config import settings as cfg
from app.data.dataset import Dataset, DatasetError, inputs_digest
from app.data.dataset_loader import DatasetLoader
from app.evaluation import protocols
from app.evaluation.metrics import MetricError
from app.evaluation.results import ExperimentResult, ProtocolError
from app.learners.forest import ForestConfig
from app.learners.model import LearnerConfig
from app.learners.tree import TreeConfig
from app.processors.dataset_processor import DatasetProcessor
from app.processors.token_processor import TokenFeatureSpec, TokenProcessor
from app.report.report_writer import ReportError, ReportWriter, load_results
from app.synth import generator

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2

DATA_ERRORS = (DatasetError, ProtocolError, MetricError, ReportError)


class UsageError(Exception):
    """Argument combination argparse cannot reject on its own."""


def _depths(values: Sequence[int], allow_deeper: bool) -> List[int]:
    depths = sorted(set(values))
    if any(d < 1 for d in depths):
        raise UsageError("depths must be >= 1")
    if not allow_deeper and any(d > 4 for d in depths):
        raise UsageError("depths above 4 need --allow-deeper")
    return depths


def _check_ranges(args: argparse.Namespace) -> None:
    folds = getattr(args, "folds", None)
    if folds is not None and folds < 2:
        raise UsageError("--folds must be >= 2")
    tolerance = getattr(args, "tolerance", None)
    if tolerance is not None and tolerance < 0:
        raise UsageError("--tolerance must be >= 0")
    fraction = getattr(args, "test_fraction", None)
    if fraction is not None and not 0.0 < fraction < 1.0:
        raise UsageError("--test-fraction must lie in (0, 1)")


def _load_all(manifests: Sequence[str]) -> List[Dataset]:
    return [DatasetLoader.load_dataset(path) for path in manifests]


def _canonical(args: argparse.Namespace) -> Optional[List[str]]:
    return None if args.all_features else list(args.canonical)


def _forest_config(args: argparse.Namespace) -> ForestConfig:
    try:
        return ForestConfig(
            n_trees=args.trees,
            bootstrap=cfg.forest.bootstrap,
            max_features=cfg.forest.max_features,
            seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def _learner(args: argparse.Namespace) -> LearnerConfig:
    if args.learner == "tree":
        try:
            return TreeConfig(max_depth=args.max_depth)
        except ValueError as e:
            raise UsageError(str(e)) from e
    return _forest_config(args)


def _result(
    protocol: str, label: str, args: argparse.Namespace, datasets: Sequence[Dataset], **fields
) -> ExperimentResult:
    return ExperimentResult(
        protocol=protocol,
        label=label,
        seed=args.seed,
        inputs_digest=inputs_digest(datasets),
        datasets=[ds.id for ds in datasets],
        **fields,
    )


# --- Subcommands ---


def _with_tokens(dataset: Dataset, manifest: str, args: argparse.Namespace) -> Dataset:
    if not args.token and not args.tokens:
        return dataset
    corpus = DatasetLoader.load_corpus_for(manifest)
    if args.token:
        spec = TokenFeatureSpec(tuple(args.token))
    else:
        spec = TokenProcessor.top_discriminative_tokens(dataset, corpus, args.tokens)
    return TokenProcessor.derive_token_features(dataset, corpus, spec)


def run_audit(args: argparse.Namespace) -> List[ExperimentResult]:
    depths = _depths(args.depths, args.allow_deeper)
    results = []
    for manifest in args.manifest:
        dataset = _with_tokens(DatasetLoader.load_dataset(manifest), manifest, args)
        outcome = protocols.audit_dataset(
            dataset,
            seed=args.seed,
            depths=depths,
            k=args.folds,
            tolerance=args.tolerance,
            balance=args.balance,
            features=args.features,
        )
        results.append(
            _result(
                "audit",
                dataset.id,
                args,
                [dataset],
                payload=outcome.payload(),
                trees={dataset.id: outcome.tree.to_dict()},
            )
        )
    return results


def run_cross(args: argparse.Namespace) -> List[ExperimentResult]:
    if len(args.manifest) < 2:
        raise UsageError("cross requires ≥2 datasets")
    learner_config = _learner(args)
    datasets = _load_all(args.manifest)
    matrix = protocols.cross_matrix(
        datasets,
        canonical_features=_canonical(args),
        seed=args.seed,
        learner_config=learner_config,
        pairwise=args.pairwise,
        test_fraction=args.test_fraction,
        workers=args.workers,
    )
    label = "cross-pairwise" if args.pairwise else "cross"
    return [_result("cross", label, args, datasets, payload=matrix.model_dump(mode="json"))]


def run_lodo(args: argparse.Namespace) -> List[ExperimentResult]:
    if len(args.manifest) < 2:
        raise UsageError("lodo requires ≥2 datasets")
    learner_config = _learner(args)
    datasets = _load_all(args.manifest)
    rounds = protocols.leave_one_out(
        datasets,
        canonical_features=_canonical(args),
        seed=args.seed,
        learner_config=learner_config,
        test_fraction=args.test_fraction,
        workers=args.workers,
    )
    payload = {"results": [r.model_dump(mode="json") for r in rounds]}
    return [_result("lodo", "lodo", args, datasets, payload=payload)]


def _class_pool(
    datasets: Sequence[Dataset], class_name: str, pool_id: str, canonical: Optional[List[str]]
) -> Dataset:
    schema = DatasetProcessor.common_feature_set(datasets, canonical)
    slices = [
        DatasetProcessor.class_slice(DatasetProcessor.restrict(ds, schema), class_name)
        for ds in datasets
    ]
    return DatasetProcessor.pool(slices, class_name, dataset_id=pool_id)


def run_types(args: argparse.Namespace) -> List[ExperimentResult]:
    bots = _load_all(args.type_manifest)
    humans = _load_all(args.human_manifest)
    type_name = args.type_name or bots[0].bot_type or bots[0].id

    # One schema for both pools so the balanced sample lines up.
    schema = DatasetProcessor.common_feature_set([*bots, *humans], _canonical(args))
    names = schema.names
    type_pool = _class_pool(bots, args.class_name, f"{type_name}-pool", names)
    human_pool = _class_pool(humans, args.human_class, "human-pool", names)

    outcome = protocols.type_vs_humans(
        type_pool,
        human_pool,
        seed=args.seed,
        depths=_depths(args.depths, args.allow_deeper),
        tolerance=args.tolerance,
        test_fraction=args.test_fraction,
        type_name=type_name,
        compare_forest=args.compare_forest,
        forest_config=_forest_config(args),
        workers=args.workers,
    )
    return [
        _result(
            "types",
            type_name,
            args,
            [*bots, *humans],
            payload=outcome.payload(),
            trees={f"types-{type_name}": outcome.tree.to_dict()},
        )
    ]


def run_distinguish(args: argparse.Namespace) -> List[ExperimentResult]:
    if len(args.manifest) < 2:
        raise UsageError("distinguish requires ≥2 datasets")
    datasets = _load_all(args.manifest)
    if not args.all_classes:
        datasets = [DatasetProcessor.class_slice(ds, args.class_name) for ds in datasets]

    outcome = protocols.distinguish_within_type(
        datasets,
        seed=args.seed,
        depths=_depths(args.depths, args.allow_deeper),
        tolerance=args.tolerance,
        test_fraction=args.test_fraction,
        type_name=args.type_name,
        canonical_features=_canonical(args),
        compare_forest=args.compare_forest,
        forest_config=_forest_config(args),
        workers=args.workers,
    )
    return [
        _result(
            "distinguish",
            outcome.type_name,
            args,
            datasets,
            payload=outcome.payload(),
            trees={f"distinguish-{outcome.type_name}": outcome.tree.to_dict()},
        )
    ]


def run_synth(args: argparse.Namespace) -> None:
    spec = generator.load_scenario(args.scenario)
    if args.seed_override is not None:
        spec = spec.model_copy(update={"seed": args.seed_override})
    generator.export(spec, args.out)


def run_render(args: argparse.Namespace) -> List[ExperimentResult]:
    return load_results(args.results)


# --- Parser ---


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=cfg.audit.seed)
    parser.add_argument("--out", default=cfg.report.output_dir, help="Report directory")
    parser.add_argument(
        "--workers",
        type=int,
        default=cfg.execution.workers,
        help="Worker processes (overrides the SHALLOW_AUDIT_WORKERS environment variable)",
    )


def _trees(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--depths", type=int, nargs="+", default=cfg.audit.depths)
    parser.add_argument("--allow-deeper", action="store_true")
    parser.add_argument("--tolerance", type=float, default=cfg.audit.tolerance)


def _features(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--canonical", nargs="+", default=cfg.audit.canonical_features)
    parser.add_argument(
        "--all-features",
        action="store_true",
        help="Use every feature shared by the datasets instead of the canonical list",
    )
    parser.add_argument("--test-fraction", type=float, default=cfg.audit.test_fraction)


def _forest(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trees", type=int, default=cfg.forest.n_trees)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shallow-audit",
        description="Audit labeled account datasets with shallow decision rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="Shallowest competitive tree per dataset")
    audit.add_argument("--manifest", action="append", required=True)
    audit.add_argument("--folds", type=int, default=cfg.audit.folds)
    audit.add_argument("--balance", action="store_true", help="Subsample humans to the bot count")
    audit.add_argument("--features", nargs="+", help="Restrict the audit to these features")
    audit.add_argument("--tokens", type=int, help="Add the K most discriminative token features")
    audit.add_argument("--token", action="append", help="Add a token-presence feature")
    _trees(audit)
    _common(audit)

    for name, help_text in (
        ("cross", "Cross-dataset generalization matrix"),
        ("lodo", "Leave-one-dataset-out generalization"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--manifest", action="append", required=True)
        cmd.add_argument("--learner", choices=("forest", "tree"), default="forest")
        cmd.add_argument("--max-depth", type=int, default=4, help="Depth of the tree learner")
        if name == "cross":
            cmd.add_argument("--pairwise", action="store_true")
        _forest(cmd)
        _features(cmd)
        _common(cmd)

    types = sub.add_parser("types", help="One bot type against a human sample")
    types.add_argument("--type-manifest", action="append", required=True)
    types.add_argument("--human-manifest", action="append", required=True)
    types.add_argument("--type-name")
    types.add_argument("--class-name", default="bot", help="Class taken from type manifests")
    types.add_argument("--human-class", default="human", help="Class taken from human manifests")
    types.add_argument("--compare-forest", action="store_true")
    _trees(types)
    _forest(types)
    _features(types)
    _common(types)

    distinguish = sub.add_parser("distinguish", help="Predict the source dataset within a bot type")
    distinguish.add_argument("--manifest", action="append", required=True)
    distinguish.add_argument("--type-name")
    distinguish.add_argument(
        "--class-name", default="bot", help="Keep only this class from each dataset"
    )
    distinguish.add_argument(
        "--all-classes",
        action="store_true",
        help="Keep every account instead of only --class-name",
    )
    distinguish.add_argument("--compare-forest", action="store_true")
    _trees(distinguish)
    _forest(distinguish)
    _features(distinguish)
    _common(distinguish)

    synth = sub.add_parser("synth", help="Generate synthetic datasets from a scenario JSON")
    synth.add_argument("--scenario", required=True)
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", dest="seed_override", type=int)

    render = sub.add_parser("render", help="Re-render a report from results.json")
    render.add_argument("--results", required=True)
    render.add_argument("--out", default=cfg.report.output_dir)

    return parser


COMMANDS: Dict[str, Callable[[argparse.Namespace], Optional[List[ExperimentResult]]]] = {
    "audit": run_audit,
    "cross": run_cross,
    "lodo": run_lodo,
    "types": run_types,
    "distinguish": run_distinguish,
    "synth": run_synth,
    "render": run_render,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logger.remove()
    logger.add(sys.stderr, level=cfg.logging.level)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if getattr(args, "workers", 1) < 1:
        logger.error("--workers must be >= 1")
        return EXIT_USAGE

    seed = getattr(args, "seed", None)
    logger.info(f"--- shallow-audit {args.command} (seed {seed}) ---")
    try:
        _check_ranges(args)
        results = COMMANDS[args.command](args)
        if results is not None:
            ReportWriter(Path(args.out)).render(results)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except DATA_ERRORS as e:
        logger.critical(f"{args.command} failed: {e}")
        return EXIT_DATA_ERROR

    logger.success(f"--- shallow-audit {args.command} finished ---")
    return EXIT_OK


def run_cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run_cli()
