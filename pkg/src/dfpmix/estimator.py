"""scikit-learn facade over the sampler.

``DFPMixture`` is a density estimator (``fit`` / ``score_samples`` /
``score``) whose posterior also yields a flat clustering of the training
data (``fit_predict``, one integer per distinct leaf of the final state).
All constructor arguments are plain hyperparameters in the scikit-learn
sense; validation happens in ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .evaluate import RunConfig, fit_points
from .inference import heldout_predictives


class DFPMixture(DensityMixin, BaseEstimator):
    """Tree-structured Gaussian mixture fit by collapsed Gibbs sampling.

    Parameters mirror :class:`dfpmix.evaluate.RunConfig`; ``random_state``
    accepts anything ``numpy.random.default_rng`` does.
    """

    def __init__(
        self,
        depth: int = 2,
        sweeps: int = 400,
        burn_in: int = 200,
        thin: int = 5,
        c: float = 1.0,
        tau: float = 1.0,
        sample_c: bool = True,
        sample_tau: bool = True,
        horizon=None,
        random_state=None,
    ):
        self.depth = depth
        self.sweeps = sweeps
        self.burn_in = burn_in
        self.thin = thin
        self.c = c
        self.tau = tau
        self.sample_c = sample_c
        self.sample_tau = sample_tau
        self.horizon = horizon
        self.random_state = random_state

    def _run_config(self) -> RunConfig:
        seed = self.random_state if isinstance(self.random_state, int) else 0
        return RunConfig(
            depth=self.depth,
            sweeps=self.sweeps,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=seed,
            holdout_fraction=0.0,
            horizon=self.horizon,
            c=self.c,
            tau=self.tau,
            sample_c=self.sample_c,
            sample_tau=self.sample_tau,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        rng = np.random.default_rng(self.random_state)
        result = fit_points(X, self._run_config(), rng=rng)
        self.n_features_in_ = X.shape[1]
        self.states_ = result.states
        self.trace_ = result.trace
        self.final_state_ = result.final
        return self

    def score_samples(self, X) -> np.ndarray:
        """Posterior-averaged log density of each row."""
        check_is_fitted(self, "states_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, the model was fit with {self.n_features_in_}"
            )
        return heldout_predictives(self.states_, X)

    def score(self, X, y=None) -> float:
        """Mean log density per point."""
        return float(np.mean(self.score_samples(X)))

    def fit_predict(self, X, y=None) -> np.ndarray:
        """Fit and return a flat cluster label per training point: one
        integer per distinct leaf of the final posterior state."""
        self.fit(X, y)
        ids: dict = {}
        return np.array(
            [ids.setdefault(leaf, len(ids)) for leaf in self.final_state_.assignments]
        )
