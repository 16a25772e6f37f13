"""Discrete coherent risk measures: V@R, AV@R and the mixture
``(1 - lam) * E + lam * AV@R_alpha``, together with the worst-case discrete
densities that attain the dual representation.

Outcome vectors carry equal base probability 1/N unless explicit
``weights`` are given.  Weight vectors returned by this module are indexed
by the *original* outcome index, with ties between equal values broken by
a stable ascending sort on (value, index) so that results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RiskParams",
    "kappa_index",
    "value_at_risk",
    "average_value_at_risk",
    "rho",
    "worst_case_weights",
    "weights_from_scores",
]

# weights may come out of the three-case formula a hair below zero in floats
_NEG_TOL = 1e-12


@dataclass(frozen=True)
class RiskParams:
    """Mixture parameters: ``lam`` in [0, 1], tail level ``alpha`` in (0, 1).

    ``lam = 0`` is the risk-neutral (pure expectation) case and ``lam = 1``
    the pure tail case; both boundaries are accepted.
    """

    lam: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


def _as_values(values) -> np.ndarray:
    z = np.asarray(values, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("empty distribution")
    return z


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"weights length {w.size} does not match {n} outcomes")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return w


def kappa_index(n: int, alpha: float) -> int:
    """Rank of the V@R atom: smallest integer >= (1 - alpha) * n.

    A small guard absorbs binary-float drift such as 0.8 * 5 = 4.0000...01,
    which would otherwise bump the ceiling to the wrong integer.
    """
    if n < 1:
        raise ValueError("need at least one outcome")
    return math.ceil((1.0 - alpha) * n - 1e-9)


def value_at_risk(values, alpha: float, weights=None) -> float:
    """(1 - alpha)-quantile inf{t : P(Z <= t) >= 1 - alpha}.

    With equal base probabilities this is the kappa-th smallest value; with
    explicit ``weights`` it is evaluated on the weighted empirical cdf.
    """
    z = _as_values(values)
    if weights is None:
        k = kappa_index(z.size, alpha)
        return float(np.sort(z, kind="stable")[k - 1])
    w = _check_weights(weights, z.size)
    order = np.argsort(z, kind="stable")
    cdf = np.cumsum(w[order])
    idx = int(np.searchsorted(cdf, 1.0 - alpha - 1e-12, side="left"))
    idx = min(idx, z.size - 1)
    return float(z[order[idx]])


def average_value_at_risk(values, alpha: float, weights=None) -> float:
    """AV@R_alpha(Z) = inf_u { u + E[Z - u]_+ / alpha }.

    The infimum is attained at u = V@R_alpha(Z), which gives the sorted
    closed form used here.  Works for alpha * N < 1 as well, where the
    measure degenerates to the maximum value.
    """
    z = _as_values(values)
    u = value_at_risk(z, alpha, weights)
    if weights is None:
        excess = np.maximum(z - u, 0.0).sum() / (alpha * z.size)
    else:
        w = _check_weights(weights, z.size)
        excess = float(w @ np.maximum(z - u, 0.0)) / alpha
    return float(u + excess)


def rho(values, rp: RiskParams, weights=None) -> float:
    """(1 - lam) * E[Z] + lam * AV@R_alpha(Z)."""
    z = _as_values(values)
    if weights is None:
        mean = float(z.mean())
    else:
        mean = float(_check_weights(weights, z.size) @ z)
    return (1.0 - rp.lam) * mean + rp.lam * average_value_at_risk(z, rp.alpha, weights)


def _rank_weights(n: int, rp: RiskParams) -> np.ndarray:
    """Three-case weight per ascending rank (1-based rank vs kappa)."""
    kappa = kappa_index(n, rp.alpha)
    if kappa > n:
        raise ValueError("tail level too fine for N")
    lam, alpha = rp.lam, rp.alpha
    q = np.full(n, (1.0 - lam) / n)
    q[kappa - 1] += lam - lam * (n - kappa) / (alpha * n)
    if kappa < n:
        q[kappa:] += lam / (alpha * n)
    q[(q < 0) & (q >= -_NEG_TOL)] = 0.0
    if np.any(q < 0):
        raise ValueError("negative weight from rank formula")
    return q / q.sum()


def weights_from_scores(scores, rp: RiskParams) -> np.ndarray:
    """Assign the worst-case density by ascending rank of ``scores``.

    Mechanics are shared with :func:`worst_case_weights`; scores can be any
    badness proxy (stage values, frequencies, decayed frequencies).  Stable
    tie-break on original index keeps the sum exactly 1.
    """
    s = _as_values(scores)
    order = np.argsort(s, kind="stable")
    q = np.empty_like(s)
    q[order] = _rank_weights(s.size, rp)
    return q


def worst_case_weights(values, rp: RiskParams) -> np.ndarray:
    """Density attaining rho(Z) = sum_i q_i Z_(i), mapped to original indices.

    Defined for equal base probabilities only.
    """
    return weights_from_scores(values, rp)
