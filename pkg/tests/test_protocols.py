from dataclasses import replace

import numpy as np
import pytest

from app.data.dataset import DatasetError, ReferenceScores
from app.evaluation import protocols
from app.evaluation.metrics import MetricSet
from app.evaluation.results import ProtocolError
from app.evaluation.splits import (
    SplitError,
    balanced_holdout,
    stratified_folds,
    stratified_holdout,
)
from app.learners.forest import ForestConfig
from app.learners.tree import TreeConfig
from app.processors.dataset_processor import DatasetProcessor
from app.synth.generator import ScenarioSpec, generate, swap
from conftest import activity_spec, date_cutoff_spec, make_dataset

CANONICAL = ["followers", "following", "tweets", "lists"]


def _profile(pairs):
    return {
        depth: MetricSet(accuracy=acc, f1=f1, balanced_accuracy=acc)
        for depth, (acc, f1) in pairs.items()
    }


def _null_spec(dataset_id, seed, n_per_class=1000):
    same = {"kind": "normal", "mean": 0, "sd": 1}
    return ScenarioSpec(
        id=dataset_id,
        n_per_class=n_per_class,
        seed=seed,
        features=[{"name": name, "human": same, "bot": same} for name in ("a", "b")],
    )


# --- Splitting ---


def test_folds_are_stratified_and_seeded():
    ds = make_dataset(np.arange(100), [0] * 50 + [1] * 50)
    folds = stratified_folds(ds, k=5, seed=0)
    assert len(folds) == 5
    for train, test in folds:
        assert np.bincount(ds.labels[test]).tolist() == [10, 10]
        assert len(train) == 80
    again = stratified_folds(ds, k=5, seed=0)
    assert all((a[1] == b[1]).all() for a, b in zip(folds, again))


def test_folds_need_k_records_per_class():
    ds = make_dataset(np.arange(10), [0] * 7 + [1] * 3)
    with pytest.raises(SplitError, match="fewer than 5"):
        stratified_folds(ds, k=5, seed=0)
    assert issubclass(SplitError, ProtocolError)


def test_holdout_sizes_and_declared_split():
    ds = make_dataset(np.arange(100), [0] * 50 + [1] * 50)
    train, test = stratified_holdout(ds, 0.2, seed=0)
    assert len(test) == 20 and len(train) == 80

    mask = np.zeros(100, dtype=bool)
    mask[[0, 1, 98, 99]] = True
    fixed = make_dataset(np.arange(100), [0] * 50 + [1] * 50, test_mask=mask)
    train, test = stratified_holdout(fixed, 0.2, seed=0)
    assert test.tolist() == [0, 1, 98, 99]


def test_degenerate_holdout_is_rejected():
    mask = np.zeros(10, dtype=bool)
    mask[:5] = True
    ds = make_dataset(np.arange(10), [0] * 5 + [1] * 5, test_mask=mask)
    with pytest.raises(SplitError, match="degenerate"):
        stratified_holdout(ds, 0.2, seed=0)


@pytest.mark.parametrize("per_class, expected", [(31, 6), (33, 7), (41, 8), (47, 9), (200, 40)])
def test_balanced_holdout_gives_each_class_the_same_test_count(per_class, expected):
    ds = make_dataset(np.arange(2 * per_class), [0, 1] * per_class)
    train, test = balanced_holdout(ds, 0.2, seed=5)
    assert np.bincount(ds.labels[test]).tolist() == [expected, expected]
    assert np.bincount(ds.labels[train]).tolist() == [per_class - expected] * 2


def test_balanced_holdout_rejects_unbalanced_or_tiny_data():
    with pytest.raises(SplitError, match="not balanced"):
        balanced_holdout(make_dataset(np.arange(5), [0, 0, 0, 1, 1]), 0.2, seed=0)
    with pytest.raises(SplitError, match="cannot be split"):
        balanced_holdout(make_dataset(np.arange(2), [0, 1]), 0.2, seed=0)


# --- Evaluation ---


def test_kfold_on_separable_data(separable):
    metrics = protocols.kfold_eval(separable, TreeConfig(max_depth=1), k=5, seed=0)
    assert metrics == MetricSet(accuracy=1.0, f1=1.0, balanced_accuracy=1.0)
    again = protocols.kfold_eval(separable, TreeConfig(max_depth=1), k=5, seed=0)
    assert again == metrics


def test_holdout_eval_on_separable_data(separable):
    model, metrics = protocols.holdout_eval(separable, TreeConfig(max_depth=2), 0.2, seed=0)
    assert metrics.accuracy == 1.0
    assert model.depth == 1


def test_kfold_imputes_from_the_training_folds_only():
    values = np.arange(40, dtype=float)
    values[::7] = np.nan
    ds = make_dataset(values, [0] * 20 + [1] * 20)
    mean, folds = protocols.kfold_details(ds, TreeConfig(max_depth=1), k=4, seed=1)
    assert len(folds) == 4
    assert 0.0 <= mean.accuracy <= 1.0


# --- Depth selection ---


def test_depth_selection_profiles():
    first = _profile({1: (0.97, 0.97), 2: (0.98, 0.98), 3: (0.99, 0.99), 4: (0.985, 0.985)})
    assert protocols.select_depth(first).selected_depth == 1

    second = _profile({1: (0.60, 0.55), 2: (0.90, 0.89), 3: (0.91, 0.90), 4: (0.91, 0.90)})
    assert protocols.select_depth(second).selected_depth == 2

    flat = _profile({d: (0.8, 0.7) for d in (1, 2, 3, 4)})
    assert protocols.select_depth(flat).selected_depth == 1


def test_exact_tolerance_boundary_is_inclusive():
    edge = _profile({1: (0.95, 0.95), 2: (0.975, 0.975)})
    assert protocols.select_depth(edge, tolerance=0.025).selected_depth == 1


def test_larger_tolerance_never_selects_deeper():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores = rng.uniform(0.5, 1.0, size=(4, 2))
        profile = _profile({d: (float(a), float(f)) for d, (a, f) in enumerate(scores, start=1)})
        depths = [protocols.select_depth(profile, t).selected_depth for t in (0.0, 0.01, 0.025, 0.1, 0.5)]
        assert depths == sorted(depths, reverse=True)


def test_multiclass_selection_uses_balanced_accuracy():
    profile = {
        1: MetricSet(accuracy=0.9, f1=None, balanced_accuracy=0.6),
        2: MetricSet(accuracy=0.9, f1=None, balanced_accuracy=0.9),
    }
    assert protocols.select_depth(profile).selected_depth == 2


def test_depth_selection_errors():
    with pytest.raises(ProtocolError):
        protocols.select_depth({})
    with pytest.raises(ProtocolError):
        protocols.select_depth(_profile({1: (0.5, 0.5)}), tolerance=-0.1)


# --- Audit ---


def test_date_cutoff_artifact_is_found_by_a_stump():
    ds = generate(date_cutoff_spec(n_per_class=1000, label_noise=0.05, seed=0))
    metrics = protocols.kfold_eval(ds, TreeConfig(max_depth=1), k=5, seed=0)
    assert 0.93 <= metrics.accuracy <= 0.97

    outcome = protocols.audit_dataset(ds, seed=0)
    assert outcome.selection.selected_depth == 1
    assert ds.schema.names[outcome.tree.root.feature_index] == "created_at"
    assert outcome.evaluation == "5-fold"
    assert sorted(outcome.fold_metrics) == [1, 2, 3, 4]


def test_audit_uses_a_declared_split():
    ds = generate(date_cutoff_spec(n_per_class=100, seed=3))
    mask = np.zeros(len(ds), dtype=bool)
    mask[::5] = True
    with_split = make_dataset(ds.values, ds.labels, names=ds.schema.names, test_mask=mask)
    outcome = protocols.audit_dataset(with_split, seed=0)
    assert outcome.evaluation == "fixed split"
    assert outcome.fold_metrics == {}
    assert outcome.selection.selected.accuracy == 1.0


def test_audit_refuses_to_balance_a_declared_split():
    ds = generate(date_cutoff_spec(n_per_class=50, seed=3))
    mask = np.zeros(len(ds), dtype=bool)
    mask[::5] = True
    with_split = make_dataset(ds.values, ds.labels, names=ds.schema.names, test_mask=mask)
    with pytest.raises(ProtocolError, match="declared split"):
        protocols.audit_dataset(with_split, seed=0, balance=True)


def test_audit_options_balance_and_features():
    rng = np.random.default_rng(6)
    values = np.column_stack([rng.normal(size=300), np.r_[rng.uniform(0, 1, 250), rng.uniform(2, 3, 50)]])
    ds = make_dataset(values, [0] * 250 + [1] * 50, names=["noise", "signal"])

    balanced = protocols.audit_dataset(ds, seed=0, balance=True)
    assert balanced.dataset_id == ds.id
    assert sum(balanced.tree.root.class_counts) == 100

    only_signal = protocols.audit_dataset(ds, seed=0, features=["signal"])
    assert only_signal.features == ["signal"]
    assert only_signal.selection.selected.accuracy == 1.0


def test_audit_payload_carries_reference_scores():
    ds = generate(date_cutoff_spec(n_per_class=50, seed=1))
    referenced = replace(ds, reference=ReferenceScores(accuracy=0.98, f1=0.98, source="lit"))
    payload = protocols.audit_dataset(referenced, seed=0, depths=(1, 2)).payload()
    assert payload["reference"] == {"accuracy": 0.98, "f1": 0.98, "source": "lit"}
    assert {str(d) for d in payload["selection"]["per_depth"]} == {"1", "2"}


def test_audit_requires_binary_data():
    ds = make_dataset(np.arange(9), [0, 1, 2] * 3, classes=("a", "b", "c"))
    with pytest.raises(DatasetError, match="binary"):
        protocols.audit_dataset(ds)


# --- Cross-dataset ---


def test_reversed_pair_fails_to_generalize():
    spec = activity_spec(n_per_class=200)
    a = generate(spec.model_copy(update={"id": "a"}))
    b = generate(swap(spec).model_copy(update={"id": "b"}))
    matrix = protocols.cross_matrix([a, b], canonical_features=CANONICAL, seed=0)

    assert matrix.datasets == ["a", "b"]
    assert matrix.cells[0][0].balanced_accuracy >= 0.95
    assert matrix.cells[1][1].balanced_accuracy >= 0.95
    assert matrix.cells[0][1].balanced_accuracy <= 0.10
    assert matrix.cells[1][0].balanced_accuracy <= 0.10
    assert matrix.features == CANONICAL


def test_cross_diagonal_equals_holdout_and_order_permutes_cells():
    a = generate(date_cutoff_spec(n_per_class=150, label_noise=0.05, id="a"))
    b = generate(date_cutoff_spec(n_per_class=150, label_noise=0.1, seed=5, id="b"))
    config = ForestConfig(n_trees=10, seed=0)
    canonical = ["created_at", "followers"]

    forward = protocols.cross_matrix([a, b], canonical, seed=0, learner_config=config)
    backward = protocols.cross_matrix([b, a], canonical, seed=0, learner_config=config)
    _, diagonal = protocols.holdout_eval(a, config, 0.2, seed=0)

    assert forward.cells[0][0] == diagonal
    assert forward.cells[0][1] == backward.cells[1][0]
    assert forward.cells[1][1] == backward.cells[0][0]


def test_identical_datasets_generalize_to_each_other():
    a = generate(date_cutoff_spec(n_per_class=150, label_noise=0.05))
    matrix = protocols.cross_matrix([a, a], None, seed=0, learner_config=ForestConfig(n_trees=20))
    diagonal = matrix.cells[0][0].balanced_accuracy
    assert matrix.cells[0][1].balanced_accuracy >= diagonal - 0.05
    assert matrix.cells[1][0].balanced_accuracy >= diagonal - 0.05


def test_cross_matrix_is_independent_of_worker_count():
    spec = activity_spec(n_per_class=60, label_noise=0.1)
    datasets = [generate(spec.model_copy(update={"id": f"d{i}", "seed": i})) for i in range(3)]
    config = ForestConfig(n_trees=5, seed=2)
    serial = protocols.cross_matrix(datasets, CANONICAL, seed=2, learner_config=config, workers=1)
    parallel = protocols.cross_matrix(datasets, CANONICAL, seed=2, learner_config=config, workers=3)
    assert serial == parallel


def test_pairwise_mode_intersects_per_pair():
    spec = activity_spec(n_per_class=60)
    full = generate(spec.model_copy(update={"id": "full"}))
    lacking = DatasetProcessor.restrict(
        generate(spec.model_copy(update={"id": "lacking", "seed": 1})),
        full.schema.select(["followers", "following", "tweets"]),
    )
    matrix = protocols.cross_matrix(
        [full, lacking], CANONICAL, seed=0, learner_config=TreeConfig(max_depth=2), pairwise=True
    )
    assert matrix.pairwise and matrix.features is None
    assert matrix.cells[0][0].accuracy == 1.0
    assert matrix.cells[0][1].accuracy == 1.0


def test_cross_needs_two_datasets_and_a_common_schema():
    a = generate(activity_spec(n_per_class=20))
    with pytest.raises(ProtocolError, match="requires ≥2 datasets"):
        protocols.cross_matrix([a], CANONICAL)
    b = generate(date_cutoff_spec(n_per_class=20, id="b"))
    with pytest.raises(DatasetError, match="empty common schema"):
        protocols.cross_matrix([a, b], ["lists"])


# --- Leave one dataset out ---


def test_lodo_detects_an_inverted_hold_out():
    spec = activity_spec(n_per_class=150, label_noise=0.05)
    pool = [generate(spec.model_copy(update={"id": f"p{i}", "seed": i})) for i in (1, 2)]
    inverted = generate(swap(spec).model_copy(update={"id": "inv", "seed": 3}))
    config = ForestConfig(n_trees=20, seed=0)

    rounds = protocols.leave_one_out([*pool, inverted], CANONICAL, seed=0, learner_config=config)
    assert [r.held_out for r in rounds] == ["p1", "p2", "inv"]
    held_inv = rounds[2]
    assert held_inv.in_sample.balanced_accuracy >= 0.9
    assert held_inv.out_of_sample.balanced_accuracy <= 0.35


def test_lodo_on_iid_datasets_generalizes():
    spec = activity_spec(n_per_class=150, label_noise=0.05)
    datasets = [generate(spec.model_copy(update={"id": f"p{i}", "seed": i})) for i in (1, 2, 3)]
    rounds = protocols.leave_one_out(
        datasets, CANONICAL, seed=0, learner_config=ForestConfig(n_trees=20, seed=0)
    )
    for result in rounds:
        assert result.in_sample.balanced_accuracy >= 0.85
        assert result.out_of_sample.balanced_accuracy >= 0.85


# --- Bot types ---


def _pools(bot_generator, n_bots, n_humans=400, seed=0):
    human_side = {"kind": "uniform", "lo": 0, "hi": 10}
    spec = ScenarioSpec(
        id="pools",
        n_per_class=max(n_bots, n_humans),
        seed=seed,
        features=[
            {"name": "followers", "human": human_side, "bot": bot_generator},
            {"name": "following", "human": human_side, "bot": bot_generator},
        ],
    )
    ds = generate(spec)
    humans = DatasetProcessor.class_slice(ds, "human").subset(range(n_humans), "humans")
    bots = DatasetProcessor.class_slice(ds, "bot").subset(range(n_bots), "fake-followers")
    return bots, humans


def test_separable_bot_type_scores_high_and_balanced():
    bots, humans = _pools({"kind": "uniform", "lo": 8, "hi": 20}, n_bots=200)
    outcome = protocols.type_vs_humans(bots, humans, seed=0, type_name="fake-followers")
    assert outcome.metrics.accuracy >= 0.9
    assert abs(outcome.metrics.accuracy - outcome.metrics.balanced_accuracy) <= 1e-12
    assert outcome.n_per_class == 200
    assert outcome.selection.selected_depth <= 4


@pytest.mark.parametrize("n_bots", [31, 33, 41, 47])
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_odd_sized_pools_keep_accuracy_equal_to_balanced_accuracy(n_bots, seed):
    bots, humans = _pools({"kind": "uniform", "lo": 5, "hi": 15}, n_bots=n_bots, seed=seed)
    outcome = protocols.type_vs_humans(bots, humans, seed=seed)
    for metrics in outcome.selection.per_depth.values():
        assert abs(metrics.accuracy - metrics.balanced_accuracy) <= 1e-12


def test_tiny_clean_pool_is_perfectly_separated():
    bots, humans = _pools({"kind": "uniform", "lo": 50, "hi": 60}, n_bots=30)
    outcome = protocols.type_vs_humans(bots, humans, seed=0, compare_forest=True,
                                       forest_config=ForestConfig(n_trees=10))
    assert outcome.metrics.accuracy == 1.0
    assert outcome.forest_metrics.accuracy == 1.0
    assert outcome.payload()["forest_metrics"]["accuracy"] == 1.0


def test_bots_indistinguishable_from_humans_score_near_chance():
    bots, humans = _pools({"kind": "uniform", "lo": 0, "hi": 10}, n_bots=1000, n_humans=1000)
    outcome = protocols.type_vs_humans(bots, humans, seed=0)
    assert 0.4 <= outcome.metrics.accuracy <= 0.6


# --- Origin prediction ---


def test_disjoint_range_triplet_is_separated_at_depth_two():
    datasets = []
    for i in range(3):
        support = {"kind": "uniform", "lo": 2 * i, "hi": 2 * i + 1}
        spec = ScenarioSpec(
            id=f"range-{i}",
            n_per_class=100,
            seed=i,
            features=[{"name": "x", "human": support, "bot": support}],
        )
        datasets.append(generate(spec))

    outcome = protocols.distinguish_within_type(datasets, seed=0, type_name="range")
    assert outcome.selection.per_depth[2].accuracy == 1.0
    assert outcome.selection.selected_depth == 2
    assert outcome.baselines["balanced_accuracy"] == pytest.approx(1 / 3)
    assert outcome.n_datasets == 3
    assert outcome.tree.classes == ("range-0", "range-1", "range-2")


def test_iid_origins_score_near_chance():
    datasets = [generate(_null_spec(f"null-{i}", seed=i, n_per_class=500)) for i in range(2)]
    outcome = protocols.distinguish_within_type(datasets, seed=0)
    assert 0.4 <= outcome.metrics.balanced_accuracy <= 0.6


def test_distinguish_preconditions():
    one = generate(_null_spec("only", seed=0, n_per_class=10))
    with pytest.raises(ProtocolError, match="≥2 datasets"):
        protocols.distinguish_within_type([one])
    with pytest.raises(ProtocolError, match="distinct"):
        protocols.distinguish_within_type([one, one])
