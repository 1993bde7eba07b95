"""Partially collapsed Gibbs sampling for the tree mixture.

One sweep is: every assignment re-sampled with locations integrated out,
then locations, then the diffusion precision, then the divergence scale.
Assignment updates soft-detach the datum (counts and evidence out, structure
kept) so that re-seating it where it came from restores the previous state
bit for bit, fresh-index counters included; a chain left empty is pruned
only once the datum commits elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .diffusion import CollapsedGaussianTree, DiffusionParams
from .fragmentation import DivergenceSchedule
from .ncrp import descent_log_probs, ncrp_sample, tree_log_prob
from .tree import ROOT, NodeId, TreeArena

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Hyperpriors:
    """Gamma(shape, rate) priors on the divergence scale and the precision."""

    c_shape: float = 1.0
    c_rate: float = 1.0
    tau_shape: float = 1.0
    tau_rate: float = 1.0

    def __post_init__(self):
        for name in ("c_shape", "c_rate", "tau_shape", "tau_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ModelConfig:
    """Model shape and which hyperparameters the sampler moves.

    ``obs_tau=None`` ties the observation precision to the diffusion
    precision ``tau`` (both updated together); a number fixes it.
    ``tau_update`` is the conjugate "shape-rate" draw, or "rate-only",
    which keeps the prior shape and updates just the rate.
    """

    depth: int
    dims: int = 1
    horizon: Optional[float] = None
    c: float = 1.0
    tau: float = 1.0
    obs_tau: Optional[float] = None
    update_c: bool = True
    update_tau: bool = True
    tau_update: str = "shape-rate"
    hyper: Hyperpriors = field(default_factory=Hyperpriors)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.tau_update not in ("shape-rate", "rate-only"):
            raise ValueError(f"unknown tau_update {self.tau_update!r}")

    def schedule(self, c: Optional[float] = None) -> DivergenceSchedule:
        return DivergenceSchedule(
            c=self.c if c is None else c, depth=self.depth, horizon=self.horizon
        )


@dataclass
class SamplerState:
    """Everything the chain carries between sweeps."""

    config: ModelConfig
    tree: TreeArena
    assignments: list
    schedule: DivergenceSchedule
    tau: float
    engine: CollapsedGaussianTree
    phis: Optional[dict] = None
    sweep: int = 0

    @property
    def c(self) -> float:
        return self.schedule.c

    @property
    def obs_tau(self) -> float:
        return self.tau if self.config.obs_tau is None else self.config.obs_tau

    @property
    def params(self) -> DiffusionParams:
        return DiffusionParams(tau=self.tau, obs_tau=self.obs_tau, dims=self.config.dims)


def _as_data(data, config: ModelConfig) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.ndim != 2:
        raise ValueError(f"data must be n x dims, got shape {data.shape}")
    if data.shape[1] != config.dims:
        raise ValueError(f"data has {data.shape[1]} dims, config says {config.dims}")
    if data.size and not np.isfinite(data).all():
        raise ValueError("data contains non-finite values")
    return data


def _grouped(assignments, data) -> dict:
    groups: dict = {}
    for leaf, y in zip(assignments, data):
        groups.setdefault(leaf, []).append(y)
    return {leaf: np.asarray(rows) for leaf, rows in groups.items()}


def make_state(
    data, config: ModelConfig, tree: TreeArena, assignments, c: float, tau: float
) -> SamplerState:
    """Assemble a state around given structure and hyperparameter values."""
    data = _as_data(data, config)
    if len(assignments) != len(data):
        raise ValueError("one assignment per datum required")
    schedule = config.schedule(c)
    params = DiffusionParams(
        tau=tau, obs_tau=tau if config.obs_tau is None else config.obs_tau, dims=config.dims
    )
    engine = CollapsedGaussianTree(tree, params, _grouped(assignments, data))
    return SamplerState(
        config=config,
        tree=tree,
        assignments=list(assignments),
        schedule=schedule,
        tau=tau,
        engine=engine,
    )


def init_state(data, config: ModelConfig, rng: np.random.Generator) -> SamplerState:
    """Seat the data by a sequential prior draw at the configured c and tau."""
    data = _as_data(data, config)
    tree, assignments = ncrp_sample(len(data), config.schedule(), rng)
    return make_state(data, config, tree, assignments, config.c, config.tau)


def replace_data(state: SamplerState, data) -> np.ndarray:
    """Swap in new observations for the same seating; refreshes the evidence
    caches.  Used when data is re-generated around a fixed structure."""
    data = _as_data(data, state.config)
    if len(data) != len(state.assignments):
        raise ValueError("replacement data must match the current size")
    state.engine = CollapsedGaussianTree(
        state.tree, state.params, _grouped(state.assignments, data)
    )
    return data


# -- assignment updates ------------------------------------------------------


def _conditional_outcomes(state: SamplerState, y: np.ndarray):
    """Weights for seating one held-out datum anywhere in the current tree.

    Outcomes are ("leaf", id) for every occupied leaf and ("branch", id) for
    a fresh chain below every occupied internal node (the root always
    counts).  Weight = reach probability x seat-or-diverge factor x
    location-collapsed predictive.
    """
    tree, engine, params = state.tree, state.engine, state.params
    depth = tree.depth
    reach = descent_log_probs(tree, state.schedule)
    ids, R, H = engine.marginal_gaussians()
    index = {nid: k for k, nid in enumerate(ids)}
    alphas = [state.schedule.alpha(level) for level in range(depth)]
    # observation precision of a fresh chain from level d (d = depth: onto
    # the leaf itself, no extra diffusion steps)
    q_level = [
        1.0 / ((depth - d) / params.tau + 1.0 / params.obs_tau)
        for d in range(depth + 1)
    ]
    outcomes, prior, rows, qs = [], [], [], []
    for nid, lp in reach.items():
        d = len(nid)
        rows.append(index[nid])
        qs.append(q_level[d])
        if d == depth:
            outcomes.append(("leaf", nid))
            prior.append(lp)
        else:
            alpha = alphas[d]
            outcomes.append(("branch", nid))
            prior.append(lp + math.log(alpha) - math.log(tree.node(nid).n_desc + alpha))
    R = R[rows]
    H = H[rows]
    Q = np.asarray(qs)
    R2 = R + Q
    H2 = H + Q[:, None] * y
    lp_obs = (
        0.5 * params.dims * (np.log(Q) - _LOG_2PI + np.log(R) - np.log(R2))
        - 0.5 * Q * float(y @ y)
        + (H2 * H2).sum(axis=1) / (2.0 * R2)
        - (H * H).sum(axis=1) / (2.0 * R)
    )
    return outcomes, np.asarray(prior) + lp_obs


def _soft_detach(state: SamplerState, y: np.ndarray, leaf: NodeId) -> NodeId:
    """Take one datum out of ``leaf`` without pruning; returns the deepest
    ancestor that still holds data (the revival branch point)."""
    node = state.tree.node(leaf)
    node.n_here -= 1
    state.tree.add_count(leaf, -1)
    state.engine.remove_observation(leaf, y)
    for d in range(len(leaf) - 1, -1, -1):
        if state.tree.node(leaf[:d]).n_desc > 0:
            return leaf[:d]
    return ROOT


def _reattach(state: SamplerState, y: np.ndarray, leaf: NodeId) -> None:
    state.tree.attach_leaf(leaf, new_branch=False)
    state.engine.add_observation(leaf, y)


def assignment_conditional(state: SamplerState, data, i: int):
    """The full conditional of datum ``i``'s seat, leaving the state intact.

    Returns (outcomes, log probabilities), normalized.
    """
    y = data[i]
    old = state.assignments[i]
    _soft_detach(state, y, old)
    outcomes, logw = _conditional_outcomes(state, y)
    _reattach(state, y, old)
    return outcomes, logw - logsumexp(logw)


def _sample_log_weights(logw: np.ndarray, rng: np.random.Generator) -> int:
    w = np.exp(logw - logw.max())
    cum = np.cumsum(w)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def sample_z_i(
    state: SamplerState,
    data,
    i: int,
    rng: Optional[np.random.Generator],
    force=None,
) -> NodeId:
    """Gibbs-update the seat of datum ``i``; returns its new leaf.

    ``force`` picks an outcome (as returned by :func:`assignment_conditional`)
    instead of sampling; forcing the datum back where it was is a no-op on
    the whole state, fresh-index counters included.
    """
    y = data[i]
    old = state.assignments[i]
    revival = _soft_detach(state, y, old)
    outcomes, logw = _conditional_outcomes(state, y)
    if force is None:
        kind, nid = outcomes[_sample_log_weights(logw, rng)]
    else:
        if force not in outcomes:
            _reattach(state, y, old)
            raise ValueError(f"forced outcome {force!r} is not available")
        kind, nid = force
    chain_empty = state.tree.node(old).n_desc == 0
    if kind == "branch" and chain_empty and nid == revival:
        new_leaf = old  # the fresh chain below nid is the one just vacated
    elif kind == "branch":
        if chain_empty:
            state.engine.drop(state.tree.prune_empty_chain(old))
        new_leaf = state.tree.attach_leaf(nid, new_branch=True)
        state.engine.add_observation(new_leaf, y)
        state.assignments[i] = new_leaf
        return new_leaf
    else:
        new_leaf = nid
        if chain_empty:
            state.engine.drop(state.tree.prune_empty_chain(old))
    _reattach(state, y, new_leaf)
    state.assignments[i] = new_leaf
    return new_leaf


# -- location and hyperparameter updates -------------------------------------


def sample_phi_state(state: SamplerState, rng: np.random.Generator) -> dict:
    """Draw all node locations from their joint posterior; also mirrors them
    onto the tree nodes for export."""
    phis = state.engine.sample_locations(rng)
    state.phis = phis
    for nid, value in phis.items():
        state.tree.node(nid).phi = value
    return phis


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    if x <= 0:
        return -math.inf
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x


def sample_tau(
    state: SamplerState,
    data,
    rng: np.random.Generator,
    rate_scale: float = 1.0,
) -> float:
    """Gibbs-update the diffusion precision given the sampled locations.

    Every node contributes its step from its parent (the root steps from
    zero); with a tied observation precision the data residuals contribute
    too.  ``rate_scale`` multiplies the evidence half of the rate, a hook
    for deliberately detuning the move.
    """
    if state.phis is None:
        raise ValueError("locations have not been sampled yet")
    hyper = state.config.hyper
    dims = state.config.dims
    steps = 0
    ss = 0.0
    for nid, phi in state.phis.items():
        parent = np.zeros(dims) if nid == ROOT else state.phis[nid[:-1]]
        delta = phi - parent
        ss += float(delta @ delta)
        steps += 1
    shape = hyper.tau_shape
    if state.config.tau_update == "shape-rate":
        shape = shape + 0.5 * dims * steps
    rate_evidence = 0.5 * ss
    if state.config.obs_tau is None:
        resid = data - np.array([state.phis[leaf] for leaf in state.assignments])
        rate_evidence += 0.5 * float((resid * resid).sum())
        if state.config.tau_update == "shape-rate":
            shape += 0.5 * dims * len(data)
    rate = hyper.tau_rate + rate_scale * rate_evidence
    state.tau = float(rng.gamma(shape, 1.0 / rate))
    state.engine = CollapsedGaussianTree(
        state.tree, state.params, _grouped(state.assignments, data)
    )
    return state.tau


def slice_sample_1d(
    log_density,
    x0: float,
    rng: np.random.Generator,
    width: float = 1.0,
    max_steps: int = 50,
) -> float:
    """One slice-sampling update: step the bracket out, then shrink it."""
    height = log_density(x0) - rng.exponential()
    lo = x0 - width * rng.random()
    hi = lo + width
    for _ in range(max_steps):
        if log_density(lo) <= height:
            break
        lo -= width
    for _ in range(max_steps):
        if log_density(hi) <= height:
            break
        hi += width
    for _ in range(10000):
        x1 = rng.uniform(lo, hi)
        if log_density(x1) >= height:
            return x1
        if x1 < x0:
            lo = x1
        else:
            hi = x1
    raise RuntimeError("slice sampler failed to find an acceptable point")


def sample_c(state: SamplerState, rng: np.random.Generator) -> float:
    """Slice-sample the divergence scale on the log axis (prior included)."""
    hyper = state.config.hyper

    def target(ln_c: float) -> float:
        c = math.exp(ln_c)
        return (
            tree_log_prob(state.tree, state.schedule.with_c(c))
            + _gamma_logpdf(c, hyper.c_shape, hyper.c_rate)
            + ln_c
        )

    ln_c = slice_sample_1d(target, math.log(state.c), rng)
    state.schedule = state.schedule.with_c(math.exp(ln_c))
    return state.c


# -- sweeps and monitoring ---------------------------------------------------


def log_joint(state: SamplerState) -> float:
    """Collapsed joint density of everything the chain moves: seating, data
    with locations integrated out, and priors on the sampled hyperparameters."""
    hyper = state.config.hyper
    total = tree_log_prob(state.tree, state.schedule) + state.engine.marginal_loglik()
    if state.config.update_c:
        total += _gamma_logpdf(state.c, hyper.c_shape, hyper.c_rate)
    if state.config.update_tau:
        total += _gamma_logpdf(state.tau, hyper.tau_shape, hyper.tau_rate)
    return total


def gibbs_sweep(
    state: SamplerState,
    data,
    rng: np.random.Generator,
    tau_rate_scale: float = 1.0,
) -> dict:
    """One full sweep (seats, locations, precision, scale); returns a trace
    record of the state it leaves behind."""
    for i in range(len(data)):
        sample_z_i(state, data, i, rng)
    sample_phi_state(state, rng)
    if state.config.update_tau:
        sample_tau(state, data, rng, rate_scale=tau_rate_scale)
    if state.config.update_c:
        sample_c(state, rng)
    state.sweep += 1
    occupancies = [state.tree.node(leaf).n_here for leaf in state.tree.leaf_ids()]
    return {
        "sweep": state.sweep,
        "log_joint": log_joint(state),
        "c": state.c,
        "tau": state.tau,
        "n_leaves": len(occupancies),
        "max_leaf_occupancy": max(occupancies, default=0),
    }


def heldout_predictive(state: SamplerState, y) -> float:
    """log p(new point | state): seat it anywhere, collapsed over locations."""
    y = np.asarray(y, dtype=float).reshape(state.config.dims)
    _, logw = _conditional_outcomes(state, y)
    return float(logsumexp(logw))


def heldout_predictives(states, Y) -> np.ndarray:
    """Per-point log predictive density averaged over posterior states."""
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    per_state = np.array([[heldout_predictive(s, y) for y in Y] for s in states])
    return logsumexp(per_state, axis=0) - math.log(len(states))
