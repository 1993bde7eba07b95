"""Gaussian location diffusion over a tree, with exact collapsing.

Every node carries a location vector: the root is drawn N(0, 1/tau) and each
child adds N(0, 1/tau) noise to its parent, dimension by dimension; a datum
at a leaf adds N(0, 1/obs_tau) observation noise.  Locations are integrated
out exactly by sum-product message passing with one-dimensional Gaussian
potentials per dimension, giving marginal likelihoods, leaf predictives and
posterior location draws in one upward (plus one downward) sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .fragmentation import DivergenceSchedule
from .ncrp import ncrp_sample
from .tree import ROOT, NodeId, TreeArena

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class DiffusionParams:
    """Diffusion precision ``tau`` (root and every edge), observation
    precision ``obs_tau`` (defaults to ``tau``), and data dimensionality."""

    tau: float
    obs_tau: Optional[float] = None
    dims: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.obs_tau is None:
            self.obs_tau = self.tau
        if self.obs_tau <= 0:
            raise ValueError(f"obs_tau must be positive, got {self.obs_tau}")
        if self.dims < 1:
            raise ValueError("dims must be >= 1")


class GaussianPotential:
    """exp(log_norm - precision*|phi|^2/2 + precision_mean.phi) over a
    dims-vector location.

    Every source of precision here (observation counts, diffusion edges) is
    identical across dimensions, so ``precision`` is a single float and
    ``log_norm`` is kept already summed over dimensions; only
    ``precision_mean`` is a vector.  Multiplying two potentials adds all
    three fields; marginalizing a child's potential through its parent edge
    is :meth:`through_edge`.
    """

    __slots__ = ("precision", "precision_mean", "log_norm")

    def __init__(self, precision: float, precision_mean, log_norm: float):
        self.precision = precision
        self.precision_mean = precision_mean
        self.log_norm = log_norm

    @classmethod
    def flat(cls, dims: int) -> "GaussianPotential":
        return cls(0.0, np.zeros(dims), 0.0)

    @classmethod
    def from_observations(cls, m, s1, s2, prec) -> "GaussianPotential":
        """Product of m observation factors with sum s1 and square-sum s2."""
        s1 = np.asarray(s1, dtype=float)
        return cls(
            m * prec,
            prec * s1,
            0.5 * m * len(s1) * (math.log(prec) - _LOG_2PI)
            - 0.5 * prec * float(np.sum(s2)),
        )

    def __add__(self, other: "GaussianPotential") -> "GaussianPotential":
        return GaussianPotential(
            self.precision + other.precision,
            self.precision_mean + other.precision_mean,
            self.log_norm + other.log_norm,
        )

    def __sub__(self, other: "GaussianPotential") -> "GaussianPotential":
        return GaussianPotential(
            self.precision - other.precision,
            self.precision_mean - other.precision_mean,
            self.log_norm - other.log_norm,
        )

    def through_edge(self, prec: float) -> "GaussianPotential":
        """Integrate out this node's location along an edge of precision
        ``prec``, leaving a potential in the parent's location."""
        s = self.precision + prec
        w = prec / s
        h = self.precision_mean
        return GaussianPotential(
            self.precision * w,
            h * w,
            self.log_norm + 0.5 * len(h) * math.log(w) + float(h @ h) / (2.0 * s),
        )

    def log_partition(self) -> float:
        """log of the integral over the location, all dimensions."""
        h = self.precision_mean
        return (
            self.log_norm
            + 0.5 * len(h) * (_LOG_2PI - math.log(self.precision))
            + float(h @ h) / (2.0 * self.precision)
        )


def _root_prior(params: DiffusionParams) -> GaussianPotential:
    return GaussianPotential(
        params.tau,
        np.zeros(params.dims),
        0.5 * params.dims * (math.log(params.tau) - _LOG_2PI),
    )


def _observation_lp(pot: GaussianPotential, y: np.ndarray, q: float) -> float:
    """log p(y | evidence in pot) for one observation of the node's location
    through precision-q noise; equals log_partition(pot * obs) - log_partition(pot)."""
    r = pot.precision
    r2 = r + q
    h = pot.precision_mean
    h2 = h + q * y
    return (
        0.5 * len(h) * (math.log(q) - _LOG_2PI + math.log(r) - math.log(r2))
        - 0.5 * q * float(y @ y)
        + float(h2 @ h2) / (2.0 * r2)
        - float(h @ h) / (2.0 * r)
    )


class CollapsedGaussianTree:
    """Location-collapsed computations on one counted tree.

    Keeps per-leaf observation sufficient statistics and the upward messages
    (``B``: evidence in a node's subtree, ``M``: that evidence passed through
    the parent edge).  Callers editing the tree keep the caches in sync with
    :meth:`add_observation` / :meth:`remove_observation` / :meth:`refresh_path`
    / :meth:`drop`; everything else reads them.
    """

    def __init__(self, tree: TreeArena, params: DiffusionParams, leaf_data=None):
        self.tree = tree
        self.params = params
        self.stats = {}
        if leaf_data is not None:
            for leaf, rows in leaf_data.items():
                rows = np.atleast_2d(np.asarray(rows, dtype=float))
                if len(leaf) != tree.depth:
                    raise ValueError(f"data attached to non-leaf node {leaf!r}")
                tree.node(leaf)
                if rows.shape[1] != params.dims:
                    raise ValueError(
                        f"data at {leaf!r} has {rows.shape[1]} dims, expected {params.dims}"
                    )
                self.stats[leaf] = [
                    rows.shape[0],
                    rows.sum(axis=0),
                    (rows * rows).sum(axis=0),
                ]
        self.B = {}
        self.M = {}
        self.full_refresh()

    # -- cache maintenance -------------------------------------------------

    def _data_potential(self, nid: NodeId) -> Optional[GaussianPotential]:
        st = self.stats.get(nid)
        if not st or st[0] == 0:
            return None
        return GaussianPotential.from_observations(st[0], st[1], st[2], self.params.obs_tau)

    def _recompute_node(self, nid: NodeId) -> None:
        pot = self._data_potential(nid)
        if pot is None:
            pot = GaussianPotential.flat(self.params.dims)
        for child in self.tree.child_ids(nid):
            pot = pot + self.M[child]
        self.B[nid] = pot
        if nid != ROOT:
            self.M[nid] = pot.through_edge(self.params.tau)

    def full_refresh(self) -> None:
        self.B.clear()
        self.M.clear()
        for nid in reversed(list(self.tree.node_ids())):
            self._recompute_node(nid)

    def refresh_path(self, leaf: NodeId) -> None:
        """Recompute messages from ``leaf`` up to the root (after the leaf's
        data or any node on the path changed)."""
        for d in range(len(leaf), -1, -1):
            self._recompute_node(leaf[:d])

    def add_observation(self, leaf: NodeId, y: np.ndarray) -> None:
        st = self.stats.setdefault(leaf, [0, np.zeros(self.params.dims), np.zeros(self.params.dims)])
        st[0] += 1
        st[1] = st[1] + y
        st[2] = st[2] + y * y
        self.refresh_path(leaf)

    def remove_observation(self, leaf: NodeId, y: np.ndarray) -> None:
        st = self.stats[leaf]
        if st[0] < 1:
            raise ValueError(f"no observations to remove at {leaf!r}")
        st[0] -= 1
        if st[0] == 0:
            del self.stats[leaf]
        else:
            st[1] = st[1] - y
            st[2] = st[2] - y * y
        self.refresh_path(leaf)

    def drop(self, node_ids) -> None:
        """Forget pruned nodes (their caches, and any leaf stats)."""
        for nid in node_ids:
            self.B.pop(nid, None)
            self.M.pop(nid, None)
            self.stats.pop(nid, None)

    # -- collapsed queries ---------------------------------------------------

    def node_marginals(self) -> dict:
        """Evidence potential on every node's location (prior included):
        one downward pass; entry ``nid`` is the posterior potential of that
        node's location given all observations."""
        marg = {}
        down = {ROOT: _root_prior(self.params)}
        for nid in self.tree.node_ids():
            m = down[nid] + self.B[nid]
            marg[nid] = m
            for child in self.tree.child_ids(nid):
                down[child] = (m - self.M[child]).through_edge(self.params.tau)
        return marg

    def marginal_gaussians(self):
        """The same downward pass as :meth:`node_marginals`, returned as flat
        arrays (node ids, precisions, precision-means) without the
        log-normalizers, which cancel out of predictive ratios anyway."""
        tau = self.params.tau
        ids, rs, hs = [], [], []
        down = {ROOT: (tau, np.zeros(self.params.dims))}
        for nid in self.tree.node_ids():
            dr, dh = down[nid]
            b = self.B[nid]
            r = dr + b.precision
            h = dh + b.precision_mean
            ids.append(nid)
            rs.append(r)
            hs.append(h)
            for idx in self.tree.node(nid).children:
                child = nid + (idx,)
                m = self.M[child]
                cr = r - m.precision
                w = tau / (cr + tau)
                down[child] = (cr * w, (h - m.precision_mean) * w)
        return ids, np.asarray(rs), np.asarray(hs)

    def marginal_loglik(self) -> float:
        return (self.B[ROOT] + _root_prior(self.params)).log_partition()

    def leaf_predictive(self, marginal: GaussianPotential, y: np.ndarray) -> float:
        """log p(y at an existing leaf | marginal potential of its location)."""
        return _observation_lp(marginal, y, self.params.obs_tau)

    def branch_predictive(
        self, marginal: GaussianPotential, y: np.ndarray, depth: int
    ) -> float:
        """log p(y on a fresh chain below a depth-``depth`` node): the new
        leaf's location adds depth_L - depth diffusion steps of noise."""
        steps = self.tree.depth - depth
        q = 1.0 / (steps / self.params.tau + 1.0 / self.params.obs_tau)
        return _observation_lp(marginal, y, q)

    def sample_locations(self, rng: np.random.Generator) -> dict:
        """One joint posterior draw of every node's location (root first,
        then each child given its parent and the evidence below it)."""
        tau = self.params.tau
        phis = {}
        for nid in self.tree.node_ids():
            b = self.B[nid]
            if nid == ROOT:
                r = b.precision + tau
                h = b.precision_mean
            else:
                r = b.precision + tau
                h = b.precision_mean + tau * phis[nid[:-1]]
            mean = h / r
            phis[nid] = mean + rng.standard_normal(self.params.dims) / math.sqrt(r)
        return phis


# -- functional wrappers -----------------------------------------------------


def marginal_data_loglik(tree: TreeArena, leaf_data, params: DiffusionParams) -> float:
    """Exact log p(data | tree, params) with all locations integrated out."""
    return CollapsedGaussianTree(tree, params, leaf_data).marginal_loglik()


def collapsed_leaf_predictive(
    tree: TreeArena, leaf_data, target: NodeId, y, params: DiffusionParams
) -> float:
    """Exact log p(y | data, tree) for y placed at ``target``: at the leaf
    itself if ``target`` is bottom-level, else on a fresh chain diverging
    below ``target``.  ``y`` must not already be in ``leaf_data``."""
    engine = CollapsedGaussianTree(tree, params, leaf_data)
    y = np.asarray(y, dtype=float).reshape(params.dims)
    marg = engine.node_marginals()[target]
    if len(target) == tree.depth:
        return engine.leaf_predictive(marg, y)
    return engine.branch_predictive(marg, y, len(target))


def sample_phi(
    tree: TreeArena, leaf_data, params: DiffusionParams, rng: np.random.Generator
) -> dict:
    """One exact posterior draw of all node locations given the data."""
    return CollapsedGaussianTree(tree, params, leaf_data).sample_locations(rng)


# -- forward simulation ------------------------------------------------------


def transition_sample(
    phi_parent, params: DiffusionParams, rng: np.random.Generator
) -> np.ndarray:
    """One diffusion step: child location given the parent's (None = draw
    the root from its zero-mean prior)."""
    base = np.zeros(params.dims) if phi_parent is None else np.asarray(phi_parent, dtype=float)
    return base + rng.standard_normal(params.dims) / math.sqrt(params.tau)


class GeneratedData(NamedTuple):
    points: np.ndarray
    tree: TreeArena
    phis: dict
    assignments: list


def generate_dataset(
    n: int,
    schedule: DivergenceSchedule,
    params: DiffusionParams,
    rng: np.random.Generator,
) -> GeneratedData:
    """Forward-simulate: nested-CRP structure, diffused locations, noisy
    observations.  Marginally each point is N(0, (depth+2)/tau) per dimension
    when obs_tau == tau."""
    tree, assignments = ncrp_sample(n, schedule, rng)
    phis = {}
    for nid in tree.node_ids():
        phis[nid] = transition_sample(None if nid == ROOT else phis[nid[:-1]], params, rng)
    points = np.empty((n, params.dims))
    for i, leaf in enumerate(assignments):
        points[i] = phis[leaf] + rng.standard_normal(params.dims) / math.sqrt(params.obs_tau)
    return GeneratedData(points=points, tree=tree, phis=phis, assignments=assignments)
