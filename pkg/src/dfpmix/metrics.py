"""Hierarchical clustering quality metrics."""

from __future__ import annotations

from collections import Counter

from .tree import TreeArena


def _pairs(k: int) -> int:
    return k * (k - 1) // 2


def dendrogram_purity(tree: TreeArena, assignments, labels) -> float:
    """Average, over all unordered same-class pairs, of that class's share of
    the data under the pair's least common ancestor.

    ``assignments`` gives each datum's leaf; two data sharing a leaf meet at
    the leaf itself.  Exactly 1.0 when every class sits in its own pure
    subtree.  Raises if no class has two members.
    """
    assignments = list(assignments)
    labels = list(labels)
    if len(assignments) != len(labels):
        raise ValueError("one label per assigned datum required")
    per_node: dict = {}
    for leaf, lab in zip(assignments, labels):
        if len(leaf) != tree.depth or leaf not in tree:
            raise ValueError(f"{leaf!r} is not a leaf of the tree")
        for d in range(len(leaf) + 1):
            per_node.setdefault(leaf[:d], Counter())[lab] += 1

    total_pairs = sum(_pairs(k) for k in Counter(labels).values())
    if total_pairs == 0:
        raise ValueError("need at least one same-class pair")

    acc = 0.0
    for nid, counts in per_node.items():
        node_total = sum(counts.values())
        for lab, k in counts.items():
            exact = _pairs(k)
            for idx in tree.node(nid).children:
                child = nid + (idx,)
                exact -= _pairs(per_node.get(child, Counter()).get(lab, 0))
            if exact:
                acc += exact * (k / node_total)
    return acc / total_pairs
