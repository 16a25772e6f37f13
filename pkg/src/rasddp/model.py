"""Multistage problem representation: stagewise-independent finite noise.

An :class:`Instance` holds one deterministic first-stage realization and,
for each later stage, a list of realizations ``(c, B, A, b, lb, ub)`` with
outcome weights (uniform by default).  The JSON interchange format used by
the CLI lives here as well.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

__all__ = [
    "StageRealization",
    "StageData",
    "Instance",
    "validate",
    "reweight",
    "scenario_count",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
]


def _csr(mat) -> sp.csr_matrix:
    if sp.issparse(mat):
        return mat.tocsr()
    return sp.csr_matrix(np.atleast_2d(np.asarray(mat, dtype=float)))


@dataclass
class StageRealization:
    """One noise outcome: data of the stage LP  min c'x  s.t.  Bx_prev + Ax = b."""

    c: np.ndarray
    a_mat: sp.csr_matrix
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    b_mat: sp.csr_matrix | None = None  # None for the first stage

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lb = np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.asarray(self.ub, dtype=float).ravel()
        self.a_mat = _csr(self.a_mat)
        if self.b_mat is not None:
            self.b_mat = _csr(self.b_mat)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size


@dataclass
class StageData:
    realizations: list[StageRealization]
    weights: np.ndarray = None  # defaults to uniform

    def __post_init__(self):
        n = len(self.realizations)
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n) if n else np.empty(0)
        else:
            self.weights = np.asarray(self.weights, dtype=float).ravel()

    @property
    def n_outcomes(self) -> int:
        return len(self.realizations)


@dataclass
class Instance:
    """Horizon-T problem: deterministic stage 1 plus StageData for t = 2..T."""

    horizon: int
    first_stage: StageRealization
    stages: list[StageData] = field(default_factory=list)

    def stage_data(self, t: int) -> StageData:
        """StageData for stage t in 2..T."""
        return self.stages[t - 2]

    def n_vars(self, t: int) -> int:
        if t == 1:
            return self.first_stage.n_vars
        return self.stage_data(t).realizations[0].n_vars


def validate(instance: Instance) -> list[str]:
    """Dimensional and weight coherence checks; empty list means valid."""
    out: list[str] = []
    T = instance.horizon
    if T < 2:
        out.append(f"horizon must be >= 2, got {T}")
        return out
    if len(instance.stages) != T - 1:
        out.append(f"expected {T - 1} random stages, got {len(instance.stages)}")
        return out
    fs = instance.first_stage
    if fs.b_mat is not None:
        out.append("first stage must not have a coupling matrix")
    for name, arr in (("c", fs.c), ("b", fs.b)):
        if not np.all(np.isfinite(arr)):
            out.append(f"first stage {name} is not finite")
    if np.any(np.isnan(fs.lb)) or np.any(np.isnan(fs.ub)):
        out.append("first stage NaN bound")
    if fs.a_mat.shape != (fs.n_rows, fs.n_vars):
        out.append("first stage A shape mismatch")
    prev_dim = fs.n_vars
    for t in range(2, T + 1):
        sd = instance.stage_data(t)
        if sd.n_outcomes < 1:
            out.append(f"stage {t}: no realizations")
            continue
        dim = sd.realizations[0].n_vars
        rows = sd.realizations[0].n_rows
        for j, r in enumerate(sd.realizations):
            if r.n_vars != dim or r.n_rows != rows:
                out.append(f"stage {t}: realization {j} dimension mismatch")
                continue
            if r.a_mat.shape != (rows, dim):
                out.append(f"stage {t}: realization {j} A shape mismatch")
            if r.b_mat is None:
                out.append(f"stage {t}: realization {j} missing coupling matrix")
            elif r.b_mat.shape != (rows, prev_dim):
                out.append(
                    f"stage {t}: realization {j} B shape {r.b_mat.shape} "
                    f"does not match ({rows}, {prev_dim})"
                )
            for name, arr in (("c", r.c), ("b", r.b)):
                if not np.all(np.isfinite(arr)):
                    out.append(f"stage {t}: realization {j} non-finite {name}")
            if np.any(np.isnan(r.lb)) or np.any(np.isnan(r.ub)):
                out.append(f"stage {t}: realization {j} NaN bound")
        w = sd.weights
        if w.size != sd.n_outcomes:
            out.append(f"stage {t}: weight length mismatch")
        elif np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            out.append(f"stage {t}: invalid weights (sum {w.sum()!r})")
        prev_dim = dim
    return out


def reweight(instance: Instance, weights_per_stage: list[np.ndarray]) -> Instance:
    """New instance with replaced stage weights; realizations are shared."""
    if len(weights_per_stage) != len(instance.stages):
        raise ValueError("need one weight vector per random stage")
    new_stages = []
    for sd, w in zip(instance.stages, weights_per_stage):
        w = np.asarray(w, dtype=float).ravel()
        if w.size != sd.n_outcomes:
            raise ValueError(f"weight length {w.size} != {sd.n_outcomes} outcomes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("invalid weight vector")
        new_stages.append(StageData(realizations=sd.realizations, weights=w))
    return replace(instance, stages=new_stages)


def scenario_count(instance: Instance, cap: int = 10**15) -> tuple[int, bool]:
    """Product of per-stage outcome counts; clamped at ``cap`` with a flag."""
    total = 1
    for sd in instance.stages:
        total *= sd.n_outcomes
        if total > cap:
            return cap, True
    return total, False


# --- JSON interchange -------------------------------------------------------

def _num_out(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _num_in(v) -> float:
    if v == "inf":
        return float("inf")
    if v == "-inf":
        return float("-inf")
    return float(v)


def _mat_out(m: sp.csr_matrix) -> dict:
    coo = m.tocoo()
    return {
        "shape": [int(m.shape[0]), int(m.shape[1])],
        "triplets": [[int(r), int(c), float(v)] for r, c, v in zip(coo.row, coo.col, coo.data)],
    }


def _mat_in(d: dict) -> sp.csr_matrix:
    rows, cols = d["shape"]
    trip = d.get("triplets", [])
    if trip:
        r, c, v = zip(*trip)
        return sp.coo_matrix((v, (r, c)), shape=(rows, cols)).tocsr()
    return sp.csr_matrix((rows, cols))


def _real_out(r: StageRealization) -> dict:
    d = {
        "c": list(r.c),
        "A": _mat_out(r.a_mat),
        "b": list(r.b),
        "lb": [_num_out(v) for v in r.lb],
        "ub": [_num_out(v) for v in r.ub],
    }
    if r.b_mat is not None:
        d["B"] = _mat_out(r.b_mat)
    return d


def _real_in(d: dict) -> StageRealization:
    return StageRealization(
        c=np.array(d["c"], dtype=float),
        a_mat=_mat_in(d["A"]),
        b=np.array(d["b"], dtype=float),
        lb=np.array([_num_in(v) for v in d["lb"]]),
        ub=np.array([_num_in(v) for v in d["ub"]]),
        b_mat=_mat_in(d["B"]) if "B" in d else None,
    )


def instance_to_json(instance: Instance) -> dict:
    return {
        "horizon": instance.horizon,
        "first_stage": _real_out(instance.first_stage),
        "stages": [
            {
                "realizations": [_real_out(r) for r in sd.realizations],
                "weights": list(sd.weights),
            }
            for sd in instance.stages
        ],
    }


def instance_from_json(doc: dict) -> Instance:
    return Instance(
        horizon=int(doc["horizon"]),
        first_stage=_real_in(doc["first_stage"]),
        stages=[
            StageData(
                realizations=[_real_in(r) for r in sd["realizations"]],
                weights=np.array(sd["weights"], dtype=float),
            )
            for sd in doc["stages"]
        ],
    )


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as f:
        json.dump(instance_to_json(instance), f)


def load_instance(path) -> Instance:
    with open(path) as f:
        return instance_from_json(json.load(f))
