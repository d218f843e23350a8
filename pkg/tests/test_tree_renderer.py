import graphviz
import numpy as np

from app.data.dataset import FeatureKind
from app.learners.tree import TreeConfig, fit_tree
from app.learners.tree_renderer import TreeRenderer
from conftest import make_dataset

# 2009-11-27 and 2009-11-28 as days since 1970-01-01
NOV_27 = 14575.0
NOV_28 = 14576.0


def _created_at_stump():
    ds = make_dataset(
        [NOV_27 - 400, NOV_27 - 10, NOV_27, NOV_28, NOV_28 + 50, NOV_28 + 300],
        [0, 0, 0, 1, 1, 1],
        names=["created_at"],
        kinds=[FeatureKind.TIMESTAMP],
    )
    return fit_tree(ds, TreeConfig(max_depth=1))


def test_timestamp_questions_render_as_dates():
    text = TreeRenderer.render_ascii(_created_at_stump())
    assert text.splitlines()[0] == "created_at ≤ 2009-11-27?"
    assert "YES: human [human=3, bot=0]" in text
    assert "NO: bot [human=0, bot=3]" in text


def test_numeric_thresholds_render_compactly():
    ds = make_dataset([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], names=["followers"])
    tree = fit_tree(ds, TreeConfig(max_depth=1))
    assert TreeRenderer.render_ascii(tree).splitlines()[0] == "followers ≤ 2.5?"


def test_deeper_trees_nest_branches():
    ds = make_dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 1, 0], names=["a", "b"])
    lines = TreeRenderer.render_ascii(fit_tree(ds, TreeConfig(max_depth=2))).splitlines()
    assert lines[0] == "a ≤ 0.5?"
    assert lines[1] == "├── YES: b ≤ 0.5?"
    assert lines[2] == "│   ├── YES: human [human=1, bot=0]"
    assert len(lines) == 7


def test_leaf_only_tree_renders_one_line():
    tree = fit_tree(make_dataset([1.0, 2.0], [1, 1]))
    assert TreeRenderer.render_ascii(tree) == "bot [human=0, bot=2]\n"


def test_stump_dot_has_three_nodes_and_two_edges():
    source = TreeRenderer.to_dot(_created_at_stump(), name="caverlee")
    assert source.count("->") == 2
    for node in ("n0", "n1", "n2"):
        assert f"\t{node} [label=" in source
    assert "n3" not in source
    # parses back as a graphviz source object
    assert graphviz.Source(source).source == source


def test_rendering_is_deterministic():
    rng = np.random.default_rng(0)
    ds = make_dataset(rng.normal(size=(50, 3)), rng.integers(0, 2, size=50))
    tree = fit_tree(ds, TreeConfig(max_depth=3))
    assert TreeRenderer.render_ascii(tree) == TreeRenderer.render_ascii(tree)
    assert TreeRenderer.to_dot(tree) == TreeRenderer.to_dot(tree)
