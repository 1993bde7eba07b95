"""Joint-distribution testing of the whole sampler.

Two ways of drawing (structure, hyperparameters, data) from the same joint:
marginal-conditional (forward simulation, independent draws) and
successive-conditional (one Gibbs sweep, then regenerate the data around the
new state).  If every move targets its conditional exactly, summary
statistics of the two streams agree; z-scores with batch-means standard
errors quantify the comparison.  ``tau_rate_scale`` detunes the precision
move on the chain side, the canary for verifying the test has teeth.

Priors here need some meat on them: with a Gamma(shape <= 2) precision the
second moment of the data has infinite variance and the z-scores never
settle.  Keep ``tau_shape`` above 2 (above 4 for comfort) when configuring
a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import DiffusionParams, generate_dataset
from .inference import ModelConfig, gibbs_sweep, make_state, replace_data
from .tree import TreeArena

STAT_NAMES = ("y_mean", "y_sq_mean", "tau", "c", "n_leaves", "max_occupancy")


def _summaries(points: np.ndarray, tree: TreeArena, tau: float, c: float) -> tuple:
    occ = [tree.node(leaf).n_here for leaf in tree.leaf_ids()]
    return (
        float(points.mean()),
        float((points * points).mean()),
        tau,
        c,
        float(len(occ)),
        float(max(occ, default=0)),
    )


def batch_means_se(x: np.ndarray, n_batches: int = 32) -> float:
    """Standard error of the mean of a (possibly autocorrelated) stream."""
    x = np.asarray(x, dtype=float)
    size = len(x) // n_batches
    if size < 1:
        raise ValueError(f"need at least {n_batches} samples, got {len(x)}")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class GewekeResult:
    names: tuple
    forward_mean: dict
    chain_mean: dict
    forward_se: dict
    chain_se: dict
    z_scores: dict
    n_forward: int
    n_chain: int

    @property
    def max_abs_z(self) -> float:
        return max(abs(z) for z in self.z_scores.values())

    def __str__(self) -> str:
        lines = [
            f"{'statistic':<14} {'forward':>12} {'chain':>12} {'z':>8}",
        ]
        for name in self.names:
            lines.append(
                f"{name:<14} {self.forward_mean[name]:>12.5f} "
                f"{self.chain_mean[name]:>12.5f} {self.z_scores[name]:>8.2f}"
            )
        return "\n".join(lines)


def _forward_draw(config: ModelConfig, n: int, rng: np.random.Generator):
    hyper = config.hyper
    c = float(rng.gamma(hyper.c_shape, 1.0 / hyper.c_rate))
    tau = float(rng.gamma(hyper.tau_shape, 1.0 / hyper.tau_rate))
    params = DiffusionParams(
        tau=tau, obs_tau=tau if config.obs_tau is None else config.obs_tau, dims=config.dims
    )
    gen = generate_dataset(n, config.schedule(c), params, rng)
    return gen, c, tau


def geweke_test(
    config: ModelConfig,
    n: int,
    n_forward: int,
    n_chain: int,
    rng: np.random.Generator,
    tau_rate_scale: float = 1.0,
    n_batches: int = 32,
) -> GewekeResult:
    """Compare forward simulation against the Gibbs kernel on ``n`` points."""
    forward = np.empty((n_forward, len(STAT_NAMES)))
    for t in range(n_forward):
        gen, c, tau = _forward_draw(config, n, rng)
        forward[t] = _summaries(gen.points, gen.tree, tau, c)

    gen, c, tau = _forward_draw(config, n, rng)
    state = make_state(gen.points, config, gen.tree, gen.assignments, c, tau)
    data = np.asarray(gen.points)
    chain = np.empty((n_chain, len(STAT_NAMES)))
    obs_sd_fixed = None if config.obs_tau is None else 1.0 / math.sqrt(config.obs_tau)
    for t in range(n_chain):
        gibbs_sweep(state, data, rng, tau_rate_scale=tau_rate_scale)
        obs_sd = 1.0 / math.sqrt(state.tau) if obs_sd_fixed is None else obs_sd_fixed
        centers = np.array([state.phis[z] for z in state.assignments])
        data = centers + rng.standard_normal(centers.shape) * obs_sd
        data = replace_data(state, data)
        chain[t] = _summaries(data, state.tree, state.tau, state.c)

    fm, cm, fse, cse, z = {}, {}, {}, {}, {}
    for k, name in enumerate(STAT_NAMES):
        fm[name] = float(forward[:, k].mean())
        cm[name] = float(chain[:, k].mean())
        fse[name] = batch_means_se(forward[:, k], n_batches)
        cse[name] = batch_means_se(chain[:, k], n_batches)
        z[name] = (fm[name] - cm[name]) / math.hypot(fse[name], cse[name])
    return GewekeResult(
        names=STAT_NAMES,
        forward_mean=fm,
        chain_mean=cm,
        forward_se=fse,
        chain_se=cse,
        z_scores=z,
        n_forward=n_forward,
        n_chain=n_chain,
    )
