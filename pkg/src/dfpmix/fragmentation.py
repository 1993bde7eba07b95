"""Mass fragmentation: stick-breaking splits applied level by level.

A mass sequence is fragmented by handing each atom to a normalized splitting
sequence and pooling the products; iterating this down a tree with the
level-dependent concentration ``alpha(level) = c*ln((H-l)/(H-l-1))`` produces
the random weight trees whose size-biased leaf sampling matches nested-CRP
seating (see :mod:`dfpmix.ncrp`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tree import ROOT, NodeId, TreeArena

_SUM_TOL = 1e-12
_NORMALIZED_TOL = 1e-9


@dataclass
class MassSequence:
    """Non-negative masses with their recorded total.

    ``is_sorted`` flags a non-increasing ordering (outputs of :func:`frag`).
    ``remainder`` carries the unbroken tail mass for stick-breaking draws.
    """

    masses: np.ndarray
    total: float
    is_sorted: bool = False
    remainder: Optional[float] = None

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.ndim != 1:
            raise ValueError("masses must be a 1-d sequence")
        if self.masses.size and self.masses.min() < 0:
            raise ValueError("masses must be non-negative")
        tol = _SUM_TOL * max(1.0, abs(self.total))
        if abs(float(self.masses.sum()) - self.total) > tol:
            raise ValueError("total does not match the sum of masses")
        if self.is_sorted and self.masses.size > 1 and np.any(np.diff(self.masses) > 0):
            raise ValueError("masses flagged sorted but not non-increasing")

    @classmethod
    def from_masses(cls, masses, is_sorted: bool = False) -> "MassSequence":
        masses = np.asarray(masses, dtype=float)
        return cls(masses, float(masses.sum()), is_sorted=is_sorted)

    def __len__(self) -> int:
        return self.masses.size


def frag(masses: MassSequence, fragments: Sequence[MassSequence]) -> MassSequence:
    """Fragment each atom of ``masses`` by its normalized splitting sequence.

    Returns the pooled products sorted non-increasing (ties keep the
    (atom index, fragment index) order).  Conserves total mass.
    """
    if len(fragments) != len(masses):
        raise ValueError(
            f"need one fragment sequence per mass: {len(masses)} masses, "
            f"{len(fragments)} fragment sequences"
        )
    for k, fr in enumerate(fragments):
        if abs(fr.total - 1.0) > _NORMALIZED_TOL:
            raise ValueError(f"fragment sequence {k} is not normalized (total={fr.total!r})")
    if not len(masses):
        return MassSequence.from_masses(np.empty(0), is_sorted=True)
    products = np.concatenate(
        [m * fr.masses for m, fr in zip(masses.masses, fragments)]
    )
    order = np.argsort(-products, kind="stable")
    return MassSequence.from_masses(products[order], is_sorted=True)


def sample_stick_fractions(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Beta(1, alpha) draws via the inverse CDF: nu = 1 - (1-U)^(1/alpha).

    Tied to the uniform stream of ``rng`` so runs reproduce across platforms;
    stable down to extreme alpha through log1p/expm1.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    u = rng.random(size)
    return -np.expm1(np.log1p(-u) / alpha)


def sticks_from_fractions(fractions) -> MassSequence:
    """Turn break fractions nu_k into stick masses nu_k * prod_{i<k}(1-nu_i)."""
    nu = np.asarray(fractions, dtype=float)
    if nu.size and (nu.min() < 0 or nu.max() > 1):
        raise ValueError("stick fractions must lie in [0, 1]")
    keep = np.cumprod(1.0 - nu)
    prefix = np.concatenate(([1.0], keep[:-1])) if nu.size else np.empty(0)
    masses = nu * prefix
    remainder = float(keep[-1]) if nu.size else 1.0
    return MassSequence(masses, float(masses.sum()), is_sorted=False, remainder=remainder)


def stick_break(alpha: float, truncation: int, rng: np.random.Generator) -> MassSequence:
    """Break a unit stick ``truncation`` times with Beta(1, alpha) fractions.

    Masses come back in stick order (not sorted); the unallocated tail mass is
    reported in ``remainder``.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    return sticks_from_fractions(sample_stick_fractions(alpha, truncation, rng))


def _break_with_fractions(alpha, truncation, rng):
    """(fractions, masses, remainder) of one stick_break draw."""
    nu = sample_stick_fractions(alpha, truncation, rng)
    sticks = sticks_from_fractions(nu)
    return nu, sticks.masses, sticks.remainder


@dataclass
class DivergenceSchedule:
    """Per-level concentrations alpha(l) = c * ln((H-l)/(H-l-1)).

    ``horizon`` H defaults to depth+1, which keeps every level of a
    depth-``depth`` tree finite; H = depth puts the singular last increment of
    the cumulative divergence -c*ln(1-s) at level depth-1, which raises.
    """

    c: float
    depth: int
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.horizon is None:
            self.horizon = self.depth + 1
        if self.horizon < self.depth:
            raise ValueError("horizon must be >= depth")

    def alpha(self, level: int) -> float:
        if not 0 <= level < self.depth:
            raise ValueError(f"level must lie in [0, {self.depth - 1}], got {level}")
        if level + 1 >= self.horizon:
            raise ValueError(
                f"divergence schedule is singular at level {level} (horizon {self.horizon})"
            )
        return self.c * (math.log(self.horizon - level) - math.log(self.horizon - level - 1))

    def alphas(self) -> tuple:
        return tuple(self.alpha(l) for l in range(self.depth))

    def with_c(self, c: float) -> "DivergenceSchedule":
        return DivergenceSchedule(c=c, depth=self.depth, horizon=self.horizon)


def divergence_alpha(level: int, schedule: DivergenceSchedule) -> float:
    """Concentration for splits at ``level`` (0 splits the root's mass)."""
    return schedule.alpha(level)


@dataclass
class WeightedTree:
    """A sampled weight tree: node masses, break fractions, truncation tails."""

    tree: TreeArena
    weights: dict
    fractions: dict = field(default_factory=dict)   # NodeId -> its break fraction
    remainders: dict = field(default_factory=dict)  # NodeId -> undistributed mass


def dfp_sample_weights(
    schedule: DivergenceSchedule, truncation: int, rng: np.random.Generator
) -> WeightedTree:
    """Sample a truncated random weight tree by recursive stick-breaking.

    Every node above the bottom level gets ``truncation`` children whose
    masses are its own mass times a fresh stick-breaking draw at that level's
    concentration.  Nodes are broken in creation (breadth-first) order, so the
    root's children reproduce a single ``stick_break`` call on the same rng.
    """
    tree = TreeArena(schedule.depth)
    weights = {ROOT: 1.0}
    fractions = {}
    remainders = {}
    queue = [ROOT]
    while queue:
        parent = queue.pop(0)
        depth = len(parent)
        if depth >= schedule.depth:
            continue
        nu, masses, remainder = _break_with_fractions(schedule.alpha(depth), truncation, rng)
        parent_mass = weights[parent]
        for k in range(truncation):
            child = tree.add_child(parent)
            weights[child] = parent_mass * float(masses[k])
            fractions[child] = float(nu[k])
            queue.append(child)
        remainders[parent] = parent_mass * float(remainder)
    return WeightedTree(tree=tree, weights=weights, fractions=fractions, remainders=remainders)


def node_weight(weighted: WeightedTree, node: NodeId) -> float:
    """Recompute a node's mass from break fractions along its path:
    prod over path steps of nu_child * prod_{earlier siblings}(1 - nu)."""
    tree = weighted.tree
    tree.node(node)  # raises KeyError if absent
    mass = 1.0
    for d in range(len(node)):
        parent = node[:d]
        target = node[d]
        for idx in tree.node(parent).children:
            child = parent + (idx,)
            if idx == target:
                mass *= weighted.fractions[child]
                break
            mass *= 1.0 - weighted.fractions[child]
        else:
            raise KeyError(f"{node!r} not reachable through recorded children")
    return mass


# -- lazily truncated leaf sampling -----------------------------------------


def sample_assignment_paths(
    schedule: DivergenceSchedule,
    n: int,
    n_replicates: int,
    rng: np.random.Generator,
    residual_tol: float = 1e-8,
    max_sticks: int = 100_000,
) -> np.ndarray:
    """Draw ``n`` i.i.d. leaves from each of ``n_replicates`` weight trees.

    Equivalent to sampling a multinomial over a truncated recursive
    stick-breaking weight tree, with sticks instantiated only where one of the
    ``n`` uniforms lands and broken until the unassigned tail of a node drops
    below ``residual_tol`` (leftover uniforms then share the next fresh
    stick).  Returns child indices of shape ``(n_replicates, n, depth)``.
    """
    if n < 1 or n_replicates < 1:
        raise ValueError("n and n_replicates must be >= 1")
    total = n_replicates * n
    jobs = np.repeat(np.arange(n_replicates, dtype=np.int64), n)
    out = np.empty((schedule.depth, total), dtype=np.int64)
    for level in range(schedule.depth):
        idx = _grouped_stick_walk(
            schedule.alpha(level), jobs, rng, residual_tol, max_sticks
        )
        out[level] = idx
        if level + 1 < schedule.depth:
            # a job at the next level = one (replicate, chosen prefix) node
            key = jobs * (int(idx.max()) + 2) + idx
            _, jobs = np.unique(key, return_inverse=True)
    return np.ascontiguousarray(out.T.reshape(n_replicates, n, schedule.depth))


def _grouped_stick_walk(alpha, jobs, rng, residual_tol, max_sticks):
    """Assign each datum a stick index from its job's shared Beta(1, alpha)
    stick sequence; one uniform per datum, sticks drawn on demand per job."""
    n_jobs = int(jobs.max()) + 1
    u = rng.random(jobs.size)
    out = np.full(jobs.size, -1, dtype=np.int64)
    cum = np.zeros(n_jobs)
    keep = np.ones(n_jobs)
    pending = np.arange(jobs.size)
    for t in range(max_sticks):
        live_jobs = np.unique(jobs[pending])
        nu = sample_stick_fractions(alpha, live_jobs.size, rng)
        cum[live_jobs] += keep[live_jobs] * nu
        keep[live_jobs] *= 1.0 - nu
        hit = u[pending] < cum[jobs[pending]]
        out[pending[hit]] = t + 1
        pending = pending[~hit]
        if pending.size == 0:
            return out
        exhausted = keep[jobs[pending]] < residual_tol
        out[pending[exhausted]] = t + 2
        pending = pending[~exhausted]
        if pending.size == 0:
            return out
    raise RuntimeError(f"stick walk did not terminate within {max_sticks} sticks")
