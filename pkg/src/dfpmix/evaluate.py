"""Fitting runs and the held-out density evaluation protocol.

A run is a seeded Gibbs chain over a fixed number of sweeps; post-burn-in
states are kept every ``thin`` sweeps and pooled for prediction.  The
evaluation protocol carves off a seeded holdout split, fits on the rest
(optionally several independent chains), and reports the mean per-point
held-out log likelihood with its standard error over test points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .inference import (
    Hyperpriors,
    ModelConfig,
    SamplerState,
    gibbs_sweep,
    heldout_predictives,
    init_state,
    make_state,
)


@dataclass
class RunConfig:
    """One chain's knobs: tree shape, schedule length, seeding, and whether
    the divergence scale and precision are sampled or held fixed."""

    depth: int
    sweeps: int = 2000
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0
    holdout_fraction: float = 0.1
    horizon: Optional[float] = None
    c: float = 1.0
    tau: float = 1.0
    sample_c: bool = True
    sample_tau: bool = True
    hyper: Hyperpriors = field(default_factory=Hyperpriors)

    def __post_init__(self):
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    def model_config(self, dims: int) -> ModelConfig:
        return ModelConfig(
            depth=self.depth,
            dims=dims,
            horizon=self.horizon,
            c=self.c,
            tau=self.tau,
            update_c=self.sample_c,
            update_tau=self.sample_tau,
            hyper=self.hyper,
        )


def _snapshot(state: SamplerState, data: np.ndarray) -> SamplerState:
    return make_state(
        data,
        state.config,
        state.tree.copy(),
        list(state.assignments),
        state.c,
        state.tau,
    )


@dataclass
class FitResult:
    states: list          # thinned post-burn-in snapshots
    trace: list           # their trace records
    final: SamplerState   # the live end-of-run state (has locations)


def fit_points(
    points,
    config: RunConfig,
    rng: Optional[np.random.Generator] = None,
    trace_sink: Optional[Callable[[dict], None]] = None,
) -> FitResult:
    """Run one chain; keeps a state snapshot and trace row per retained
    sweep.  ``trace_sink`` (if given) sees every sweep's record as it
    happens."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if rng is None:
        rng = np.random.default_rng(config.seed)
    model = config.model_config(points.shape[1])
    state = init_state(points, model, rng)
    states, trace = [], []
    for sweep in range(config.sweeps):
        record = gibbs_sweep(state, points, rng)
        if trace_sink is not None:
            trace_sink(record)
        # floor((sweeps - burn_in)/thin) retained rows, last sweep included
        # whenever the span divides evenly
        if sweep >= config.burn_in and (sweep - config.burn_in) % config.thin == config.thin - 1:
            states.append(_snapshot(state, points))
            trace.append(record)
    return FitResult(states=states, trace=trace, final=state)


def holdout_split(n: int, fraction: float, seed: int):
    """Deterministic (seed, n) -> (train indices, test indices)."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(n * fraction)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass
class EvalReport:
    mean: float
    se: float
    per_point: np.ndarray
    n_train: int
    n_test: int
    n_chains: int
    n_states: int

    def __str__(self) -> str:
        return (
            f"held-out log likelihood {self.mean:.4f} +/- {self.se:.4f} per point "
            f"({self.n_test} test points, {self.n_train} train, "
            f"{self.n_chains} chain(s), {self.n_states} pooled states)"
        )


def eval_protocol(points, config: RunConfig, n_chains: int = 1) -> EvalReport:
    """Seeded holdout split, fit on train, average the per-point predictive
    over all pooled posterior states, report mean and standard error."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    train_idx, test_idx = holdout_split(len(points), config.holdout_fraction, config.seed)
    if len(test_idx) == 0:
        raise ValueError("holdout fraction leaves no test points")
    train, test = points[train_idx], points[test_idx]
    pooled = []
    for chain in range(n_chains):
        rng = np.random.default_rng((config.seed, chain))
        pooled.extend(fit_points(train, config, rng=rng).states)
    per_point = heldout_predictives(pooled, test)
    se = float(per_point.std(ddof=1) / math.sqrt(len(per_point))) if len(per_point) > 1 else 0.0
    return EvalReport(
        mean=float(per_point.mean()),
        se=se,
        per_point=per_point,
        n_train=len(train_idx),
        n_test=len(test_idx),
        n_chains=n_chains,
        n_states=len(pooled),
    )
