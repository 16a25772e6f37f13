"""Estimator-style facade over the SDDP engine.

``RiskAverseSDDP`` follows the scikit-learn parameter conventions
(constructor stores hyperparameters verbatim, ``fit`` does the work,
fitted state carries a trailing underscore) so it composes with
``get_params`` / ``set_params`` tooling.  ``fit`` takes an
:class:`~rasddp.model.Instance` instead of an (X, y) pair; there is no
meaningful design matrix for a stagewise stochastic program.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .cuts import CutPool
from .engine import RunConfig, run
from .model import Instance, validate
from .risk import RiskParams
from .sampling import SamplerSpec, finalize_bad_outcome_weights, load_weights

__all__ = ["RiskAverseSDDP"]


class RiskAverseSDDP(BaseEstimator):
    """Fit a cutting-plane policy to a multistage stochastic linear program.

    Parameters mirror the experiment modes: ``sampling`` is one of
    'uniform', 'fixed' (reads ``weights_path``), or 'dynamic' (frequency
    ranked with the given ``decay``).  With ``switch_iteration`` set,
    sampling starts uniform and switches to fixed bad-outcome weights
    derived from the run's own frequency record.
    """

    def __init__(
        self,
        lam: float = 0.0,
        alpha: float = 0.05,
        iterations: int = 100,
        seed: int = 0,
        sampling: str = "uniform",
        decay: str = "none",
        weights_path: str | None = None,
        switch_iteration: int | None = None,
        compute_upper_bound: bool = False,
    ):
        self.lam = lam
        self.alpha = alpha
        self.iterations = iterations
        self.seed = seed
        self.sampling = sampling
        self.decay = decay
        self.weights_path = weights_path
        self.switch_iteration = switch_iteration
        self.compute_upper_bound = compute_upper_bound

    def _config(self) -> RunConfig:
        fixed = None
        if self.sampling == "fixed":
            if self.weights_path is None:
                raise ValueError("sampling='fixed' needs weights_path")
            fixed = load_weights(self.weights_path)
        sampler = SamplerSpec(kind=self.sampling, fixed_weights=fixed, decay=self.decay)
        return RunConfig(
            risk=RiskParams(lam=self.lam, alpha=self.alpha),
            max_iterations=self.iterations,
            seed=self.seed,
            sampler=sampler,
            compute_upper_bound=self.compute_upper_bound,
            switch_iteration=self.switch_iteration,
        )

    def fit(self, instance: Instance, y=None) -> "RiskAverseSDDP":
        problems = validate(instance)
        if problems:
            raise ValueError("invalid instance: " + "; ".join(problems))
        result = run(instance, self._config())
        self.instance_ = instance
        self.result_ = result
        self.pools_: dict[int, CutPool] = result.pools
        self.log_ = result.log
        self.frequencies_ = result.frequencies
        self.lower_bound_ = result.log[-1].lower_bound
        return self

    def bad_outcome_weights_(self) -> list[np.ndarray]:
        """Rank-based weights from the fitted frequency record."""
        self._check_fitted()
        return finalize_bad_outcome_weights(
            self.frequencies_, RiskParams(lam=self.lam, alpha=self.alpha)
        )

    def predict(self, instance: Instance | None = None) -> np.ndarray:
        """First-stage decision of the fitted policy (optionally on another
        instance sharing the cut pools' state dimensions)."""
        self._check_fitted()
        from .engine import _solve_stage

        inst = instance if instance is not None else self.instance_
        sol = _solve_stage(inst.first_stage, None, self.pools_[2], 1)
        return sol.x[: inst.first_stage.n_vars]

    def score(self, instance: Instance | None = None, y=None) -> float:
        """Negated lower bound, so larger is better as sklearn expects."""
        self._check_fitted()
        if instance is None:
            return -self.lower_bound_
        from .engine import lower_bound

        return -lower_bound(instance, self.pools_)

    def _check_fitted(self) -> None:
        if not hasattr(self, "pools_"):
            raise RuntimeError("call fit first")
