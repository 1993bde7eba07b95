"""Tree arena unit tests.

Core claims:
    - attach_leaf with new_branch builds a chain down to depth L and counts it
    - attach/detach keep n_desc equal to a full bottom-up recount
    - detach prunes empty chains; no zero-count node survives an edit
    - attach then detach restores the original structure and counts
    - child indices are handed out in creation order and never reused
    - recount() is non-destructive and idempotent
    - invalid edits raise (missing node, wrong depth, empty leaf)
"""

import numpy as np
import pytest

from dfpmix.tree import ROOT, TreeArena


def _counts(tree):
    return {nid: (tree.node(nid).n_here, tree.node(nid).n_desc) for nid in tree.node_ids()}


def test_root_only_tree():
    tree = TreeArena(depth=2)
    assert ROOT in tree
    assert len(tree) == 1
    assert tree.node(ROOT).n_desc == 0
    assert tree.leaf_ids() == []
    tree.validate()


def test_attach_new_branch_builds_chain():
    tree = TreeArena(depth=3)
    leaf = tree.attach_leaf(ROOT, new_branch=True)
    assert leaf == (1, 1, 1)
    assert len(tree) == 4
    for d in range(4):
        assert tree.node(leaf[:d]).n_desc == 1
    assert tree.node(leaf).n_here == 1
    tree.validate()


def test_attach_existing_leaf_shares_it():
    tree = TreeArena(depth=2)
    leaf = tree.attach_leaf(ROOT, new_branch=True)
    again = tree.attach_leaf(leaf, new_branch=False)
    assert again == leaf
    assert tree.node(leaf).n_here == 2
    assert tree.node(ROOT).n_desc == 2
    tree.validate()


def test_attach_detach_round_trip():
    tree = TreeArena(depth=2)
    keep = tree.attach_leaf(ROOT, new_branch=True)
    tree.attach_leaf(keep, new_branch=False)
    before_nodes = set(tree.node_ids())
    before_counts = _counts(tree)
    snapshot = tree.copy()

    fresh = tree.attach_leaf(ROOT, new_branch=True)
    assert fresh != keep
    tree.detach_leaf(fresh)
    assert set(tree.node_ids()) == before_nodes
    assert _counts(tree) == before_counts
    assert tree == snapshot
    tree.validate()


def test_detach_prunes_only_empty_suffix():
    tree = TreeArena(depth=3)
    a = tree.attach_leaf(ROOT, new_branch=True)        # (1,1,1)
    b = tree.attach_leaf(a[:1], new_branch=True)       # (1,2,1): shares depth-1 node
    tree.detach_leaf(b)
    assert b not in tree
    assert b[:2] not in tree
    assert a[:1] in tree                               # still holds datum a
    assert tree.node(a[:1]).n_desc == 1
    tree.validate()


def test_child_indices_never_reused():
    tree = TreeArena(depth=1)
    first = tree.attach_leaf(ROOT, new_branch=True)
    assert first == (1,)
    tree.detach_leaf(first)
    second = tree.attach_leaf(ROOT, new_branch=True)
    assert second == (2,)
    assert tree.node(ROOT).children == [2]


def test_recount_matches_incremental_counts():
    rng = np.random.default_rng(7)
    tree = TreeArena(depth=3)
    leaves = []
    for _ in range(200):
        if leaves and rng.random() < 0.45:
            leaf = leaves.pop(rng.integers(len(leaves)))
            tree.detach_leaf(leaf)
        else:
            if leaves and rng.random() < 0.5:
                leaf = leaves[rng.integers(len(leaves))]
                tree.attach_leaf(leaf, new_branch=False)
            else:
                branch = ROOT
                # sometimes branch below an occupied internal node
                internals = [n for n in tree.internal_ids() if tree.node(n).n_desc > 0]
                if internals and rng.random() < 0.5:
                    branch = internals[rng.integers(len(internals))]
                leaf = tree.attach_leaf(branch, new_branch=True)
            leaves.append(leaf)
        tree.validate()
        recounted = tree.recount()
        assert recounted == tree
    # recount leaves the input untouched and is idempotent
    again = tree.recount().recount()
    assert again == tree


def test_ensure_path_and_add_child():
    tree = TreeArena(depth=2)
    tree.ensure_path((3, 2))
    assert (3,) in tree and (3, 2) in tree
    assert tree.node(ROOT).children == [3]
    assert tree.node(ROOT).next_child == 4
    nxt = tree.add_child(ROOT)
    assert nxt == (4,)


def test_edit_errors():
    tree = TreeArena(depth=2)
    leaf = tree.attach_leaf(ROOT, new_branch=True)
    with pytest.raises(KeyError):
        tree.attach_leaf((9, 9), new_branch=False)
    with pytest.raises(ValueError):
        tree.attach_leaf(leaf, new_branch=True)        # leaf cannot branch
    with pytest.raises(ValueError):
        tree.attach_leaf(leaf[:1], new_branch=False)   # internal node is not a leaf
    with pytest.raises(ValueError):
        tree.detach_leaf(leaf[:1])
    tree.detach_leaf(leaf)
    with pytest.raises(KeyError):
        tree.detach_leaf(leaf)                         # pruned away
    with pytest.raises(ValueError):
        TreeArena(depth=0)


def test_copy_is_deep():
    tree = TreeArena(depth=1)
    leaf = tree.attach_leaf(ROOT, new_branch=True)
    dup = tree.copy()
    dup.attach_leaf(leaf, new_branch=False)
    assert tree.node(leaf).n_here == 1
    assert dup.node(leaf).n_here == 2
    assert tree != dup
