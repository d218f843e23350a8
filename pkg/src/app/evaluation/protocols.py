from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from loguru import logger

from app.data.dataset import Dataset, DatasetError, FeatureSchema
from app.evaluation.metrics import MetricSet, evaluate, mean_metrics, naive_baselines
from app.evaluation.results import (
    AuditOutcome,
    CrossMatrix,
    DepthSelection,
    DistinguishOutcome,
    LodoResult,
    ProtocolError,
    TypeOutcome,
)
from app.evaluation.splits import balanced_holdout, stratified_folds, stratified_holdout
from app.learners.forest import ForestConfig
from app.learners.model import LearnerConfig, Model, describe, fit_model
from app.learners.tree import DecisionTree, TreeConfig, fit_tree
from app.processors.dataset_processor import DatasetProcessor
from app.services.worker_pool import WorkerPool

SHALLOW_DEPTHS = (1, 2, 3, 4)
DEFAULT_TOLERANCE = 0.025
# Absorbs float noise in "best - score <= tolerance" (0.975 - 0.95 is not exactly 0.025).
_TOLERANCE_EPS = 1e-12


@dataclass
class HoldoutRun:
    model: Model
    metrics: MetricSet
    train: Dataset
    test: Dataset


def _impute_pair(train: Dataset, test: Dataset) -> Tuple[Dataset, Dataset]:
    """Median imputation of both sides from the training side only."""
    return (
        DatasetProcessor.project(train, train.schema, imputation_source=train),
        DatasetProcessor.project(test, train.schema, imputation_source=train),
    )


def score(model: Model, test: Dataset) -> MetricSet:
    return evaluate(test.labels, model.predict_many(test.values), test.n_classes)


def _fit_and_score(
    train: Dataset, test: Dataset, config: LearnerConfig, workers: int = 1
) -> Tuple[Model, MetricSet]:
    train_ready, test_ready = _impute_pair(train, test)
    model = fit_model(train_ready, config, workers=workers)
    return model, score(model, test_ready)


def kfold_details(
    dataset: Dataset,
    learner_config: LearnerConfig,
    k: int = 5,
    seed: int = 0,
    workers: int = 1,
) -> Tuple[MetricSet, List[MetricSet]]:
    """Mean and per-fold metrics of seeded stratified k-fold cross-validation."""
    per_fold = []
    for fold, (train_idx, test_idx) in enumerate(stratified_folds(dataset, k, seed)):
        _, metrics = _fit_and_score(
            dataset.subset(train_idx), dataset.subset(test_idx), learner_config, workers
        )
        logger.debug(f"Protocols: '{dataset.id}' fold {fold + 1}/{k}: {metrics}")
        per_fold.append(metrics)
    return mean_metrics(per_fold), per_fold


def kfold_eval(
    dataset: Dataset,
    learner_config: LearnerConfig,
    k: int = 5,
    seed: int = 0,
    workers: int = 1,
) -> MetricSet:
    return kfold_details(dataset, learner_config, k, seed, workers)[0]


def _holdout(
    dataset: Dataset,
    learner_config: LearnerConfig,
    test_fraction: float,
    seed: int,
    workers: int = 1,
) -> HoldoutRun:
    train_idx, test_idx = stratified_holdout(dataset, test_fraction, seed)
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    model, metrics = _fit_and_score(train, test, learner_config, workers)
    return HoldoutRun(model, metrics, train, test)


def holdout_eval(
    dataset: Dataset,
    learner_config: LearnerConfig,
    test_fraction: float = 0.2,
    seed: int = 0,
    workers: int = 1,
) -> Tuple[Model, MetricSet]:
    """Fit on the stratified train split (or the manifest's split) and score the test side."""
    run = _holdout(dataset, learner_config, test_fraction, seed, workers)
    return run.model, run.metrics


def select_depth(
    per_depth: Mapping[int, MetricSet], tolerance: float = DEFAULT_TOLERANCE
) -> DepthSelection:
    """
    Shallowest depth within `tolerance` of the best accuracy and the best F1.
    Balanced accuracy stands in for F1 when any depth lacks it (multiclass).
    """
    if not per_depth:
        raise ProtocolError("Depth selection needs at least one depth")
    if tolerance < 0:
        raise ProtocolError(f"Tolerance must be non-negative, got {tolerance}")

    use_f1 = all(m.f1 is not None for m in per_depth.values())

    def _second(m: MetricSet) -> float:
        return m.f1 if use_f1 else m.balanced_accuracy

    best_acc = max(m.accuracy for m in per_depth.values())
    best_second = max(_second(m) for m in per_depth.values())
    limit = tolerance + _TOLERANCE_EPS
    selected = min(
        d
        for d, m in per_depth.items()
        if best_acc - m.accuracy <= limit and best_second - _second(m) <= limit
    )
    return DepthSelection(per_depth=dict(per_depth), selected_depth=selected, tolerance=tolerance)


def _tree_sweep(
    train: Dataset, test: Dataset, depths: Sequence[int], min_samples_leaf: int
) -> Tuple[Dict[int, MetricSet], Dict[int, DecisionTree]]:
    train_ready, test_ready = _impute_pair(train, test)
    metrics, trees = {}, {}
    for depth in depths:
        trees[depth] = fit_tree(train_ready, TreeConfig(depth, min_samples_leaf))
        metrics[depth] = score(trees[depth], test_ready)
    return metrics, trees


def audit_dataset(
    dataset: Dataset,
    seed: int = 0,
    depths: Sequence[int] = SHALLOW_DEPTHS,
    k: int = 5,
    tolerance: float = DEFAULT_TOLERANCE,
    min_samples_leaf: int = 1,
    balance: bool = False,
    features: Optional[Sequence[str]] = None,
) -> AuditOutcome:
    """
    Scores trees of each depth (k-fold, or the manifest's fixed split), picks
    the shallowest within tolerance and refits it on the training data.
    """
    dataset.require_binary()
    if features:
        dataset = DatasetProcessor.restrict(dataset, dataset.schema.select(features))
    if balance:
        if dataset.test_mask is not None:
            raise ProtocolError(
                f"{dataset.id}: class balancing cannot be combined with a declared split"
            )
        humans = DatasetProcessor.class_slice(dataset, dataset.classes[0])
        bots = DatasetProcessor.class_slice(dataset, dataset.classes[1])
        balanced = DatasetProcessor.balanced_sample(
            humans, bots, seed, class_names=dataset.classes, dataset_id=dataset.id
        )
        dataset = Dataset(
            id=dataset.id,
            schema=balanced.schema,
            classes=balanced.classes,
            record_ids=balanced.record_ids,
            values=balanced.values,
            labels=balanced.labels,
            bot_type=dataset.bot_type,
            reference=dataset.reference,
        )

    logger.info(f"Protocols: Auditing '{dataset.id}' at depths {list(depths)} (seed {seed})")
    per_depth: Dict[int, MetricSet] = {}
    fold_metrics: Dict[int, List[MetricSet]] = {}

    if dataset.test_mask is not None:
        evaluation = "fixed split"
        train_idx, test_idx = stratified_holdout(dataset, 0.2, seed)
        train = dataset.subset(train_idx)
        per_depth, _ = _tree_sweep(train, dataset.subset(test_idx), depths, min_samples_leaf)
    else:
        evaluation = f"{k}-fold"
        train = dataset
        for depth in depths:
            per_depth[depth], fold_metrics[depth] = kfold_details(
                dataset, TreeConfig(depth, min_samples_leaf), k, seed
            )

    selection = select_depth(per_depth, tolerance)
    train_ready = DatasetProcessor.project(train, train.schema)
    tree = fit_tree(train_ready, TreeConfig(selection.selected_depth, min_samples_leaf))
    logger.info(
        f"Protocols: '{dataset.id}' selected depth {selection.selected_depth}: {selection.selected}"
    )
    return AuditOutcome(
        dataset_id=dataset.id,
        selection=selection,
        tree=tree,
        evaluation=evaluation,
        fold_metrics=fold_metrics,
        features=dataset.schema.names,
        reference=dataset.reference,
    )


def _require_binary_family(datasets: Sequence[Dataset], protocol: str) -> None:
    if len(datasets) < 2:
        raise ProtocolError(f"{protocol} requires ≥2 datasets")
    for ds in datasets:
        ds.require_binary()
        if ds.classes != datasets[0].classes:
            raise ProtocolError(
                f"{ds.id}: classes {ds.classes} differ from {datasets[0].classes}"
            )


def _cross_row(
    i: int,
    datasets: Sequence[Dataset],
    canonical: Optional[Sequence[str]],
    schema: Optional[FeatureSchema],
    learner_config: LearnerConfig,
    test_fraction: float,
    seed: int,
) -> List[MetricSet]:
    """Row i of the matrix; `schema` None means per-pair feature intersection."""
    source = datasets[i]
    runs: Dict[Tuple[str, ...], HoldoutRun] = {}
    row = []
    for j, target in enumerate(datasets):
        cell_schema = schema
        if cell_schema is None:
            family = [source] if i == j else [source, target]
            cell_schema = DatasetProcessor.common_feature_set(family, canonical)

        key = tuple(cell_schema.names)
        if key not in runs:
            runs[key] = _holdout(
                DatasetProcessor.restrict(source, cell_schema), learner_config, test_fraction, seed
            )
        run = runs[key]

        if i == j:
            row.append(run.metrics)
            continue
        evaluation = DatasetProcessor.project(target, cell_schema, imputation_source=run.train)
        row.append(score(run.model, evaluation))
        logger.debug(f"Protocols: cross cell {source.id} -> {target.id}: {row[-1]}")
    return row


def cross_matrix(
    datasets: Sequence[Dataset],
    canonical_features: Optional[Sequence[str]] = None,
    seed: int = 0,
    learner_config: Optional[LearnerConfig] = None,
    pairwise: bool = False,
    test_fraction: float = 0.2,
    workers: int = 1,
) -> CrossMatrix:
    """
    cell[i][j]: model trained on the train split of i, scored on the test
    split of i (diagonal) or on all of j.
    """
    _require_binary_family(datasets, "cross")
    learner_config = learner_config or ForestConfig(seed=seed)

    schema = None
    if not pairwise:
        schema = DatasetProcessor.common_feature_set(datasets, canonical_features)
        logger.info(f"Protocols: Cross-dataset features {schema.names}")

    logger.info(
        f"Protocols: Cross matrix over {len(datasets)} datasets with {describe(learner_config)}"
    )
    jobs = [
        (i, datasets, canonical_features, schema, learner_config, test_fraction, seed)
        for i in range(len(datasets))
    ]
    cells = WorkerPool(workers).map(_cross_row, jobs)
    return CrossMatrix(
        datasets=[ds.id for ds in datasets],
        cells=cells,
        learner=describe(learner_config),
        pairwise=pairwise,
        features=None if schema is None else schema.names,
    )


def _lodo_round(
    h: int,
    datasets: Sequence[Dataset],
    learner_config: LearnerConfig,
    test_fraction: float,
    seed: int,
) -> LodoResult:
    held_out = datasets[h]
    others = [ds for i, ds in enumerate(datasets) if i != h]
    pool = DatasetProcessor.concat(others, dataset_id=f"all-but-{held_out.id}")
    run = _holdout(pool, learner_config, test_fraction, seed)
    target = DatasetProcessor.project(held_out, pool.schema, imputation_source=run.train)
    result = LodoResult(
        held_out=held_out.id,
        in_sample=run.metrics,
        out_of_sample=score(run.model, target),
        features=pool.schema.names,
    )
    logger.info(
        f"Protocols: LODO '{held_out.id}': in-sample {result.in_sample.balanced_accuracy:.3f}, "
        f"out-of-sample {result.out_of_sample.balanced_accuracy:.3f}"
    )
    return result


def leave_one_out(
    datasets: Sequence[Dataset],
    canonical_features: Optional[Sequence[str]] = None,
    seed: int = 0,
    learner_config: Optional[LearnerConfig] = None,
    test_fraction: float = 0.2,
    workers: int = 1,
) -> List[LodoResult]:
    """Train on the pooled others, score on every record of the held-out dataset."""
    _require_binary_family(datasets, "lodo")
    learner_config = learner_config or ForestConfig(seed=seed)
    schema = DatasetProcessor.common_feature_set(datasets, canonical_features)
    restricted = [DatasetProcessor.restrict(ds, schema) for ds in datasets]

    jobs = [(h, restricted, learner_config, test_fraction, seed) for h in range(len(datasets))]
    return WorkerPool(workers).map(_lodo_round, jobs)


def _forest_comparison(
    train: Dataset, test: Dataset, forest_config: ForestConfig, workers: int
) -> MetricSet:
    _, metrics = _fit_and_score(train, test, forest_config, workers)
    logger.info(f"Protocols: Forest comparison on '{train.id}': {metrics}")
    return metrics


def type_vs_humans(
    type_pool: Dataset,
    human_pool: Dataset,
    seed: int = 0,
    depths: Sequence[int] = SHALLOW_DEPTHS,
    tolerance: float = DEFAULT_TOLERANCE,
    test_fraction: float = 0.2,
    min_samples_leaf: int = 1,
    type_name: Optional[str] = None,
    compare_forest: bool = False,
    forest_config: Optional[ForestConfig] = None,
    workers: int = 1,
) -> TypeOutcome:
    """Equal-sized human/bot-type sample, 80/20 holdout, shallowest tree within tolerance."""
    type_name = type_name or type_pool.bot_type or type_pool.id
    try:
        sample = DatasetProcessor.balanced_sample(
            human_pool, type_pool, seed, dataset_id=f"{type_name}-vs-humans"
        )
    except DatasetError as e:
        raise ProtocolError(f"{type_name}: {e}") from e

    train_idx, test_idx = balanced_holdout(sample, test_fraction, seed)
    train, test = sample.subset(train_idx), sample.subset(test_idx)
    per_depth, trees = _tree_sweep(train, test, depths, min_samples_leaf)
    selection = select_depth(per_depth, tolerance)

    forest_metrics = None
    if compare_forest:
        forest_metrics = _forest_comparison(
            train, test, forest_config or ForestConfig(seed=seed), workers
        )

    logger.info(
        f"Protocols: '{type_name}' vs humans: depth {selection.selected_depth}, {selection.selected}"
    )
    return TypeOutcome(
        type_name=type_name,
        selection=selection,
        tree=trees[selection.selected_depth],
        n_per_class=len(sample) // 2,
        forest_metrics=forest_metrics,
    )


def distinguish_within_type(
    datasets: Sequence[Dataset],
    seed: int = 0,
    depths: Sequence[int] = SHALLOW_DEPTHS,
    tolerance: float = DEFAULT_TOLERANCE,
    test_fraction: float = 0.2,
    min_samples_leaf: int = 1,
    type_name: Optional[str] = None,
    canonical_features: Optional[Sequence[str]] = None,
    compare_forest: bool = False,
    forest_config: Optional[ForestConfig] = None,
    workers: int = 1,
) -> DistinguishOutcome:
    """Multiclass origin prediction: every account is labelled with its source dataset."""
    if len(datasets) < 2:
        raise ProtocolError("distinguish requires ≥2 datasets")
    ids = [ds.id for ds in datasets]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"distinguish needs distinct dataset ids, got {ids}")

    type_name = type_name or datasets[0].bot_type or "+".join(ids)
    schema = DatasetProcessor.common_feature_set(datasets, canonical_features)
    merged = DatasetProcessor.merge(
        [(DatasetProcessor.restrict(ds, schema), ds.id) for ds in datasets],
        dataset_id=f"{type_name}-origin",
    )

    train_idx, test_idx = stratified_holdout(merged, test_fraction, seed)
    train, test = merged.subset(train_idx), merged.subset(test_idx)
    per_depth, trees = _tree_sweep(train, test, depths, min_samples_leaf)
    selection = select_depth(per_depth, tolerance)

    forest_metrics = None
    if compare_forest:
        forest_metrics = _forest_comparison(
            train, test, forest_config or ForestConfig(seed=seed), workers
        )

    baselines = naive_baselines(merged.labels, merged.n_classes)
    logger.info(
        f"Protocols: Origin prediction for '{type_name}' over {len(datasets)} datasets: "
        f"depth {selection.selected_depth}, {selection.selected} (naive bal. acc. "
        f"{baselines['balanced_accuracy']:.3f})"
    )
    return DistinguishOutcome(
        type_name=type_name,
        selection=selection,
        tree=trees[selection.selected_depth],
        n_datasets=len(datasets),
        baselines=baselines,
        forest_metrics=forest_metrics,
    )
