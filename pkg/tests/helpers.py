"""Shared test utilities that build package objects (not oracles)."""

import math

import numpy as np

from dfpmix.fragmentation import DivergenceSchedule
from dfpmix.tree import TreeArena

# Verdict lines appended by test_acceptance._criterion; conftest echoes them
# in the terminal summary so they survive output capture.
criterion_lines = []


def tree_from_paths(paths, depth):
    """A counted TreeArena holding one datum per path (paths may repeat)."""
    tree = TreeArena(depth)
    for p in paths:
        tree.ensure_path(p)
        tree.node(p).n_here += 1
        tree.add_count(p, +1)
    return tree


def schedule_with_alpha0(alpha0, depth=1, horizon=None):
    """A schedule whose level-0 concentration equals ``alpha0`` exactly."""
    horizon = depth + 1 if horizon is None else horizon
    c = alpha0 / math.log(horizon / (horizon - 1))
    return DivergenceSchedule(c=c, depth=depth, horizon=horizon)


def random_counted_tree(rng, depth, n, max_idx=3):
    """Random shared-leaf tree with ``n`` data over small child indices."""
    paths = [tuple(int(rng.integers(1, max_idx + 1)) for _ in range(depth)) for _ in range(n)]
    return tree_from_paths(paths, depth), paths
