"""Forward-pass scenario samplers and bad-outcome frequency bookkeeping.

The frequency table counts, per stage and outcome, how often an outcome's
backward-pass value landed at or above the stage's tail quantile.  The
undecayed counts identify bad outcomes post hoc; the decayed variants
drive dynamic biased sampling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .risk import RiskParams, kappa_index, weights_from_scores

__all__ = [
    "DECAYS",
    "FrequencyTable",
    "SamplerSpec",
    "sample_index",
    "sample_scenario",
    "record_backward_values",
    "current_stage_weights",
    "finalize_bad_outcome_weights",
    "save_weights",
    "load_weights",
    "save_frequencies",
]

# decay applied after the per-iteration increments (iteration number m >= 1)
DECAYS = {
    "none": lambda m: 1.0,
    "m_over_m_plus_1": lambda m: m / (m + 1.0),
    "one_minus_half_pow": lambda m: 1.0 - 0.5**m,
}


@dataclass
class SamplerSpec:
    """kind: 'uniform' (instance stage weights), 'fixed', or 'dynamic'."""

    kind: str = "uniform"
    fixed_weights: list[np.ndarray] | None = None  # per stage t = 2..T
    # decay applied to the frequency counters each iteration; dynamic modes
    # usually want "m_over_m_plus_1", the post-hoc tracker wants "none"
    decay: str = "none"

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed", "dynamic"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.kind == "fixed" and self.fixed_weights is None:
            raise ValueError("fixed sampler needs weights")
        if self.decay not in DECAYS:
            raise ValueError(f"unknown decay {self.decay!r}")


@dataclass
class FrequencyTable:
    """Per-stage outcome counters for stages t = 2..T."""

    counts: dict[int, np.ndarray] = field(default_factory=dict)
    iterations_observed: int = 0

    @classmethod
    def empty(cls, horizon: int, n_outcomes: dict[int, int]) -> "FrequencyTable":
        return cls(counts={t: np.zeros(n_outcomes[t]) for t in range(2, horizon + 1)})


def sample_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    """One categorical draw; deterministic given the generator state."""
    u = rng.random()
    return int(np.searchsorted(np.cumsum(weights), u, side="right").clip(0, weights.size - 1))


def sample_scenario(stage_weights: list[np.ndarray], rng: np.random.Generator) -> list[int]:
    """Independent categorical draw per stage."""
    return [sample_index(w, rng) for w in stage_weights]


def record_backward_values(
    table: FrequencyTable,
    stage: int,
    values: np.ndarray,
    alpha: float,
    iteration: int,
    decay: str = "none",
) -> None:
    """Increment counters for outcomes at or above the tail quantile, then decay.

    The threshold is the kappa-th smallest value; ties at the threshold all
    count (the defining condition is >=), so at least ceil(alpha * N)
    counters grow per call.  Decay order follows the dynamic-sampling
    recipe: increment first, then scale the whole stage vector.
    """
    values = np.asarray(values, dtype=float).ravel()
    counts = table.counts[stage]
    if values.size != counts.size:
        raise ValueError(f"stage {stage}: {values.size} values for {counts.size} outcomes")
    kappa = kappa_index(values.size, alpha)
    threshold = np.sort(values, kind="stable")[kappa - 1]
    counts[values >= threshold] += 1.0
    counts *= DECAYS[decay](iteration)


def current_stage_weights(
    spec: SamplerSpec,
    table: FrequencyTable | None,
    risk: RiskParams,
    stage: int,
    n_outcomes: int,
    base_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Forward-sampling distribution for one stage.

    'uniform' follows the instance's own stage weights (so a reweighted
    instance is sampled under its measure); 'fixed' uses stored weights;
    'dynamic' ranks the decayed frequencies, falling back to the base
    measure before any iteration has been recorded or when lam = 0.
    """
    uniform = base_weights if base_weights is not None else np.full(n_outcomes, 1.0 / n_outcomes)
    if spec.kind == "uniform":
        return uniform
    if spec.kind == "fixed":
        w = np.asarray(spec.fixed_weights[stage - 2], dtype=float)
        if w.size != n_outcomes:
            raise ValueError(f"fixed weights for stage {stage} have wrong length")
        return w
    if table is None or table.iterations_observed == 0 or risk.lam == 0.0:
        return uniform
    return weights_from_scores(table.counts[stage], risk)


def finalize_bad_outcome_weights(table: FrequencyTable, risk: RiskParams) -> list[np.ndarray]:
    """Rank-based weights from the recorded counts, one vector per stage 2..T."""
    if table.iterations_observed == 0:
        raise ValueError("frequency table is empty")
    return [weights_from_scores(table.counts[t], risk) for t in sorted(table.counts)]


def save_weights(weights: list[np.ndarray], path, first_stage: int = 2) -> None:
    doc = {"stages": [{"t": first_stage + i, "q": list(w)} for i, w in enumerate(weights)]}
    with open(path, "w") as f:
        json.dump(doc, f)


def load_weights(path) -> list[np.ndarray]:
    with open(path) as f:
        doc = json.load(f)
    stages = sorted(doc["stages"], key=lambda s: s["t"])
    return [np.array(s["q"], dtype=float) for s in stages]


def save_frequencies(table: FrequencyTable, path) -> None:
    """CSV rows (t, j, W_t_j)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "j", "W"])
        for t in sorted(table.counts):
            for j, count in enumerate(table.counts[t]):
                w.writerow([t, j + 1, repr(float(count))])
