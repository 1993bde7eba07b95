"""Rooted fixed-depth trees with per-node occupancy counts.

Nodes are addressed by their path from the root: a ``NodeId`` is a tuple of
positive child indices, ``()`` being the root.  Data points live only at
depth-``depth`` leaves; ``n_here`` counts the data at a leaf and ``n_desc``
counts the data at or below a node, so ``n_desc(root)`` is the dataset size.

Child indices are handed out per parent in creation order and are never
reused after a prune, so a NodeId observed in a trace always refers to the
same logical branch.
"""

from __future__ import annotations

from typing import Iterator

NodeId = tuple
ROOT: NodeId = ()


class TreeNode:
    """One tree node: ordered child indices, counts, optional location."""

    __slots__ = ("children", "n_desc", "n_here", "phi", "next_child")

    def __init__(self):
        self.children = []    # child indices (last path component), creation order
        self.n_desc = 0       # data points at or below this node
        self.n_here = 0       # data points exactly here (depth-L leaves only)
        self.phi = None       # per-dimension location, if instantiated
        self.next_child = 1   # next fresh child index; pruned indices not reused

    def copy(self) -> "TreeNode":
        dup = TreeNode()
        dup.children = list(self.children)
        dup.n_desc = self.n_desc
        dup.n_here = self.n_here
        dup.phi = None if self.phi is None else self.phi.copy()
        dup.next_child = self.next_child
        return dup


class TreeArena:
    """All nodes of one tree, keyed by NodeId, with count bookkeeping.

    ``attach_leaf`` / ``detach_leaf`` are the only public edit operations a
    sampler needs; they keep ``n_desc`` consistent along the touched path and
    prune chains whose count drops to zero.  ``add_child`` / ``ensure_path``
    build structure without touching counts (prior simulation, import).
    """

    def __init__(self, depth: int):
        if depth < 1:
            raise ValueError("tree depth must be >= 1")
        self.depth = int(depth)
        self._nodes = {ROOT: TreeNode()}

    # -- lookup ------------------------------------------------------------

    def node(self, node_id: NodeId) -> TreeNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise KeyError(f"no node {node_id!r} in tree") from None

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def node_ids(self) -> Iterator[NodeId]:
        """All NodeIds, parents always before children."""
        return iter(self._nodes)

    def child_ids(self, node_id: NodeId) -> list:
        return [node_id + (i,) for i in self.node(node_id).children]

    def leaf_ids(self) -> list:
        return [nid for nid in self._nodes if len(nid) == self.depth]

    def internal_ids(self) -> list:
        return [nid for nid in self._nodes if len(nid) < self.depth]

    # -- structure-only edits ---------------------------------------------

    def add_child(self, parent: NodeId) -> NodeId:
        """Create a fresh child under ``parent`` (no count changes)."""
        if len(parent) >= self.depth:
            raise ValueError(f"cannot add a child below depth-{self.depth} node {parent!r}")
        pnode = self.node(parent)
        idx = pnode.next_child
        pnode.next_child += 1
        pnode.children.append(idx)
        child = parent + (idx,)
        self._nodes[child] = TreeNode()
        return child

    def ensure_path(self, node_id: NodeId) -> NodeId:
        """Create any missing nodes along an explicit path (no count changes)."""
        if len(node_id) > self.depth:
            raise ValueError(f"path {node_id!r} exceeds tree depth {self.depth}")
        for d in range(len(node_id)):
            child = node_id[: d + 1]
            if child in self._nodes:
                continue
            idx = child[-1]
            if idx < 1:
                raise ValueError(f"child indices must be positive, got {idx}")
            pnode = self.node(child[:-1])
            pnode.children.append(idx)
            pnode.next_child = max(pnode.next_child, idx + 1)
            self._nodes[child] = TreeNode()
        return node_id

    # -- data edits --------------------------------------------------------

    def attach_leaf(self, branch_point: NodeId, new_branch: bool) -> NodeId:
        """Place one datum: on an existing leaf, or on a fresh chain below
        ``branch_point``.  Increments ``n_desc`` along the whole path and
        returns the leaf that received the datum."""
        self.node(branch_point)  # raises KeyError if absent
        if new_branch:
            if len(branch_point) >= self.depth:
                raise ValueError(f"{branch_point!r} is a leaf; new branches start at internal nodes")
            leaf = branch_point
            while len(leaf) < self.depth:
                leaf = self.add_child(leaf)
        else:
            if len(branch_point) != self.depth:
                raise ValueError(f"{branch_point!r} is not a depth-{self.depth} leaf")
            leaf = branch_point
        self.node(leaf).n_here += 1
        self.add_count(leaf, +1)
        return leaf

    def detach_leaf(self, leaf: NodeId) -> None:
        """Remove one datum from ``leaf``; prune any chain left empty."""
        node = self.node(leaf)
        if len(leaf) != self.depth:
            raise ValueError(f"{leaf!r} is not a depth-{self.depth} leaf")
        if node.n_here < 1:
            raise ValueError(f"{leaf!r} holds no data")
        node.n_here -= 1
        self.add_count(leaf, -1)
        self.prune_empty_chain(leaf)

    def add_count(self, leaf: NodeId, delta: int) -> None:
        """Adjust ``n_desc`` along root..leaf (no pruning, no n_here)."""
        for d in range(len(leaf) + 1):
            self._nodes[leaf[:d]].n_desc += delta

    def prune_empty_chain(self, leaf: NodeId) -> list:
        """Delete the zero-count suffix of ``leaf``'s path; return removed ids."""
        removed = []
        path = leaf
        while path != ROOT and path in self._nodes and self._nodes[path].n_desc == 0:
            del self._nodes[path]
            self._nodes[path[:-1]].children.remove(path[-1])
            removed.append(path)
            path = path[:-1]
        return removed

    # -- whole-tree operations ---------------------------------------------

    def copy(self) -> "TreeArena":
        dup = TreeArena(self.depth)
        dup._nodes = {nid: node.copy() for nid, node in self._nodes.items()}
        return dup

    def recount(self) -> "TreeArena":
        """Return a copy with ``n_desc`` recomputed bottom-up from ``n_here``."""
        dup = self.copy()
        for nid in sorted(dup._nodes, key=len, reverse=True):
            node = dup._nodes[nid]
            node.n_desc = node.n_here + sum(
                dup._nodes[nid + (i,)].n_desc for i in node.children
            )
        return dup

    def validate(self) -> None:
        """Raise ValueError if any structural or count invariant is broken."""
        for nid, node in self._nodes.items():
            if nid != ROOT and nid[:-1] not in self._nodes:
                raise ValueError(f"orphan node {nid!r}")
            if nid != ROOT and nid[-1] not in self._nodes[nid[:-1]].children:
                raise ValueError(f"{nid!r} missing from its parent's child list")
            for idx in node.children:
                if nid + (idx,) not in self._nodes:
                    raise ValueError(f"dangling child {nid + (idx,)!r}")
            if node.n_here and len(nid) != self.depth:
                raise ValueError(f"data stored at internal node {nid!r}")
            if node.n_here < 0 or node.n_desc < 0:
                raise ValueError(f"negative count at {nid!r}")
            total = node.n_here + sum(self._nodes[nid + (i,)].n_desc for i in node.children)
            if node.n_desc != total:
                raise ValueError(
                    f"count mismatch at {nid!r}: n_desc={node.n_desc}, children+here={total}"
                )
            if nid != ROOT and node.n_desc == 0 and self._nodes[ROOT].n_desc > 0:
                # zero-count nodes are only ever transient inside an edit
                raise ValueError(f"unpruned empty node {nid!r}")

    def __eq__(self, other) -> bool:
        """Structure and counts (fresh-index counters and child insertion
        order are bookkeeping, not state)."""
        if not isinstance(other, TreeArena):
            return NotImplemented
        if self.depth != other.depth or self._nodes.keys() != other._nodes.keys():
            return False
        for nid, node in self._nodes.items():
            onode = other._nodes[nid]
            if (
                sorted(node.children) != sorted(onode.children)
                or node.n_here != onode.n_here
                or node.n_desc != onode.n_desc
            ):
                return False
        return True

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"TreeArena(depth={self.depth}, nodes={len(self._nodes)}, "
            f"n={self._nodes[ROOT].n_desc})"
        )
