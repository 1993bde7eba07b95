"""Nested CRP seating over fixed-depth trees.

A datum descends from the root choosing, at each level-``l`` node, an
existing child with probability n_child/(n+alpha(l)) or a fresh child with
probability alpha(l)/(n+alpha(l)); a fresh choice commits it to a brand-new
chain down to the bottom.  These are exactly the weight-marginalized leaf
probabilities of the recursive stick-breaking prior in
:mod:`dfpmix.fragmentation`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .fragmentation import DivergenceSchedule
from .tree import ROOT, NodeId, TreeArena


def child_probabilities(counts, alpha: float) -> np.ndarray:
    """Seating probabilities over existing children plus one fresh slot.

    ``counts`` are the per-child descendant counts at one node; the returned
    vector has length len(counts)+1, the last entry being the fresh child.
    """
    counts = np.asarray(counts, dtype=float)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if counts.size and counts.min() < 0:
        raise ValueError("counts must be non-negative")
    return np.append(counts, alpha) / (counts.sum() + alpha)


def _excluded(node: NodeId, exclude) -> int:
    return 1 if exclude is not None and exclude[: len(node)] == node else 0


def path_log_prob(
    tree: TreeArena, leaf: NodeId, schedule: DivergenceSchedule, exclude=None
) -> float:
    """Log probability that a new datum descends exactly to ``leaf``.

    ``exclude`` names the leaf of one datum whose counts are removed first
    (the held-out conditional).  Steps into a child whose adjusted count is
    zero cost the fresh-child mass at that level, and nothing once the node
    total is zero, so the path probability of a chain occupied only by the
    excluded datum is 0 (the first datum creates its chain with certainty).
    """
    if len(leaf) != tree.depth:
        raise ValueError(f"{leaf!r} is not a depth-{tree.depth} leaf")
    tree.node(leaf)
    if exclude is not None:
        tree.node(exclude)
        if len(exclude) != tree.depth:
            raise ValueError(f"exclude must name a leaf, got {exclude!r}")
    lp = 0.0
    for d in range(len(leaf)):
        parent, child = leaf[:d], leaf[: d + 1]
        n_tot = tree.node(parent).n_desc - _excluded(parent, exclude)
        n_child = tree.node(child).n_desc - _excluded(child, exclude)
        alpha = schedule.alpha(d)
        if n_child > 0:
            lp += math.log(n_child) - math.log(n_tot + alpha)
        else:
            lp += math.log(alpha) - math.log(n_tot + alpha)
    return lp


def new_branch_log_prob(
    tree: TreeArena, node: NodeId, schedule: DivergenceSchedule, exclude=None
) -> float:
    """Log probability that a new datum reaches ``node`` and diverges there
    onto a fresh chain (which then reaches the bottom with certainty)."""
    if len(node) >= tree.depth:
        raise ValueError(f"{node!r} is a leaf; divergence happens at internal nodes")
    tree.node(node)
    lp = 0.0
    for d in range(len(node)):
        parent, child = node[:d], node[: d + 1]
        n_tot = tree.node(parent).n_desc - _excluded(parent, exclude)
        n_child = tree.node(child).n_desc - _excluded(child, exclude)
        alpha = schedule.alpha(d)
        if n_child > 0:
            lp += math.log(n_child) - math.log(n_tot + alpha)
        else:
            lp += math.log(alpha) - math.log(n_tot + alpha)
    alpha = schedule.alpha(len(node))
    n_tot = tree.node(node).n_desc - _excluded(node, exclude)
    return lp + math.log(alpha) - math.log(n_tot + alpha)


def descent_log_probs(tree: TreeArena, schedule: DivergenceSchedule) -> dict:
    """Reach probabilities for every node with surviving count (plus the
    root), in one walk; the workhorse behind per-outcome enumeration."""
    alphas = [schedule.alpha(level) for level in range(tree.depth)]
    out = {ROOT: 0.0}
    stack = [ROOT]
    while stack:
        parent = stack.pop()
        pnode = tree.node(parent)
        if len(parent) >= tree.depth or not pnode.children:
            continue
        alpha = alphas[len(parent)]
        denom = math.log(pnode.n_desc + alpha)
        for idx in pnode.children:
            child = parent + (idx,)
            n_child = tree.node(child).n_desc
            if n_child <= 0:
                continue
            out[child] = out[parent] + math.log(n_child) - denom
            stack.append(child)
    return out


def branching_log_prob(counts, alpha: float) -> float:
    """Log CRP seating probability of one node's child counts:
    ln Gamma(a) + K ln a + sum ln Gamma(n_k) - ln Gamma(n + a)."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        return 0.0
    if counts.min() < 1:
        raise ValueError("counts must be >= 1")
    return float(
        gammaln(alpha)
        + counts.size * math.log(alpha)
        + gammaln(counts).sum()
        - gammaln(counts.sum() + alpha)
    )


def tree_log_prob(tree: TreeArena, schedule: DivergenceSchedule) -> float:
    """Log probability of the whole seating arrangement: the product of the
    per-node child-count terms over every node that has children."""
    lp = 0.0
    for nid in tree.node_ids():
        node = tree.node(nid)
        if not node.children:
            continue
        counts = [tree.node(nid + (i,)).n_desc for i in node.children]
        lp += branching_log_prob(counts, schedule.alpha(len(nid)))
    return lp


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def ncrp_sample(n: int, schedule: DivergenceSchedule, rng: np.random.Generator):
    """Seat ``n`` data sequentially; returns (tree, leaf assignment per datum)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    tree = TreeArena(schedule.depth)
    assignments = []
    for _ in range(n):
        node = ROOT
        while len(node) < tree.depth:
            tnode = tree.node(node)
            counts = [tree.node(node + (i,)).n_desc for i in tnode.children]
            pick = _categorical(
                child_probabilities(counts, schedule.alpha(len(node))), rng
            )
            if pick == len(counts):
                node = tree.attach_leaf(node, new_branch=True)
                break
            node = node + (tnode.children[pick],)
        else:
            tree.attach_leaf(node, new_branch=False)
        assignments.append(node)
    return tree, assignments
