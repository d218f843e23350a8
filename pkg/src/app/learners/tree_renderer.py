from datetime import datetime, timedelta, timezone
from typing import List

import graphviz
from loguru import logger

from app.data.dataset import FeatureKind
from app.learners.tree import DecisionTree, LeafNode, Node, SplitNode

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class TreeRenderer:
    """Question/answer renderings of a fitted tree: plain text and DOT."""

    @staticmethod
    def format_threshold(tree: DecisionTree, node: SplitNode) -> str:
        feature = tree.schema.features[node.feature_index]
        if feature.kind == FeatureKind.TIMESTAMP:
            return (_EPOCH + timedelta(days=node.threshold)).date().isoformat()
        return format(node.threshold, ".10g")

    @staticmethod
    def question(tree: DecisionTree, node: SplitNode) -> str:
        name = tree.schema.names[node.feature_index]
        return f"{name} ≤ {TreeRenderer.format_threshold(tree, node)}?"

    @staticmethod
    def leaf_label(tree: DecisionTree, node: LeafNode) -> str:
        counts = ", ".join(
            f"{name}={count}" for name, count in zip(tree.classes, node.class_counts)
        )
        return f"{tree.classes[node.class_index]} [{counts}]"

    @staticmethod
    def render_ascii(tree: DecisionTree) -> str:
        lines: List[str] = []

        def _walk(node: Node, prefix: str) -> None:
            branches = (("YES", node.left, "├── ", "│   "), ("NO", node.right, "└── ", "    "))
            for answer, child, connector, extension in branches:
                if isinstance(child, LeafNode):
                    lines.append(f"{prefix}{connector}{answer}: {TreeRenderer.leaf_label(tree, child)}")
                else:
                    lines.append(f"{prefix}{connector}{answer}: {TreeRenderer.question(tree, child)}")
                    _walk(child, prefix + extension)

        root = tree.root
        if isinstance(root, LeafNode):
            lines.append(TreeRenderer.leaf_label(tree, root))
        else:
            lines.append(TreeRenderer.question(tree, root))
            _walk(root, "")
        return "\n".join(lines) + "\n"

    @staticmethod
    def to_dot(tree: DecisionTree, name: str = "tree") -> str:
        dot = graphviz.Digraph(name=name)
        dot.attr(rankdir="TB")
        dot.attr("node", shape="box", style="rounded", fontname="helvetica")

        counter = iter(range(1 << 30))

        def _add(node: Node) -> str:
            node_id = f"n{next(counter)}"
            if isinstance(node, LeafNode):
                dot.node(node_id, TreeRenderer.leaf_label(tree, node))
                return node_id
            dot.node(node_id, TreeRenderer.question(tree, node))
            dot.edge(node_id, _add(node.left), label="YES")
            dot.edge(node_id, _add(node.right), label="NO")
            return node_id

        _add(tree.root)
        logger.debug(f"TreeRenderer: Built DOT graph '{name}'")
        return dot.source
