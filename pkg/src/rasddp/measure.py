"""Change-of-measure risk-neutral problem: reweight the stage outcomes with
identified bad-outcome weights and solve with plain weighted expectation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tree
from .cuts import Cut
from .engine import RunConfig, run
from .model import Instance, reweight
from .risk import RiskParams
from .sampling import SamplerSpec, finalize_bad_outcome_weights

__all__ = ["MeasureChange", "build", "weighted_expectation_cut", "equivalence_report"]


@dataclass
class MeasureChange:
    """Per-stage outcome weights (t = 2..T) plus identification provenance."""

    weights: list[np.ndarray]
    provenance: dict = field(default_factory=dict)


def build(instance: Instance, mc: MeasureChange) -> Instance:
    """Reweighted instance; solve it with lam = 0 downstream."""
    return reweight(instance, mc.weights)


def weighted_expectation_cut(
    values: np.ndarray,
    gradients: np.ndarray,
    q: np.ndarray,
    anchor: np.ndarray,
    origin_iteration: int = 0,
) -> Cut:
    """Plain q-weighted average of (value, subgradient) pairs, anchored."""
    values = np.asarray(values, dtype=float).ravel()
    gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
    q = np.asarray(q, dtype=float).ravel()
    if not values.size == gradients.shape[0] == q.size:
        raise ValueError("values, gradients and weights must have matching lengths")
    value = float(q @ values)
    grad = q @ gradients
    return Cut(
        intercept=value - float(grad @ np.asarray(anchor, dtype=float)),
        gradient=grad,
        origin_iteration=origin_iteration,
    )


def equivalence_report(
    instance: Instance,
    risk: RiskParams,
    budget: int,
    seed: int = 0,
    node_cap: int = tree.DEFAULT_NODE_CAP,
) -> dict:
    """Compare the risk-averse value with its change-of-measure counterpart.

    Runs the risk-averse algorithm with uniform sampling for ``budget``
    iterations to identify bad-outcome weights, then evaluates both sides
    with the extensive-form oracle.  The gap is diagnostic: it is small
    only when the value ordering of the outcomes is state-independent.
    """
    result = run(
        instance,
        RunConfig(
            risk=risk,
            max_iterations=budget,
            seed=seed,
            sampler=SamplerSpec(kind="uniform", decay="none"),
        ),
    )
    weights = finalize_bad_outcome_weights(result.frequencies, risk)
    mc = MeasureChange(
        weights=weights,
        provenance={"iterations": budget, "lam": risk.lam, "alpha": risk.alpha, "seed": seed},
    )
    com_instance = build(instance, mc)
    risk_averse_value = tree.exact_value(instance, risk, node_cap)
    com_value = tree.exact_value(com_instance, RiskParams(lam=0.0, alpha=risk.alpha), node_cap)
    gap = abs(risk_averse_value - com_value) / (1.0 + abs(risk_averse_value))
    return {
        "risk_averse_value": risk_averse_value,
        "com_value": com_value,
        "gap": gap,
        "weights": [list(w) for w in weights],
        "sddp_lower_bound": result.log[-1].lower_bound,
    }
