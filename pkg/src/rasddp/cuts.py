"""Affine-minorant pools for the stage cost-to-go functions and assembly of
the epigraph-form stage LP.

A pool approximates a convex cost-to-go function from below by
``max(L, max_k intercept_k + <gradient_k, x>)``.  Cuts enter the stage LP
through an epigraph variable theta with one slack-completed equality row
per cut, so changing the incoming state only touches the right-hand side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lp import INF, LinearProgram
from .model import StageRealization

__all__ = ["Cut", "CutPool", "assemble_stage_lp", "save_pools", "load_pools"]


@dataclass(frozen=True)
class Cut:
    intercept: float
    gradient: np.ndarray
    origin_iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float).ravel())
        if not np.isfinite(self.intercept) or not np.all(np.isfinite(self.gradient)):
            raise ValueError("cut entries must be finite")

    def value_at(self, x: np.ndarray) -> float:
        return float(self.intercept + self.gradient @ x)


@dataclass
class CutPool:
    """Pool for one stage: cuts plus a constant initial lower bound."""

    dim: int
    lower_bound: float = 0.0
    cuts: list[Cut] = field(default_factory=list)
    # optional FIFO cap; evicting cuts breaks monotone-refinement guarantees
    max_cuts: int | None = None

    def __len__(self) -> int:
        return len(self.cuts)

    def add(self, cut: Cut) -> bool:
        """Append a cut; exact duplicates are dropped.  Returns True if added."""
        if cut.gradient.size != self.dim:
            raise ValueError(f"cut dimension {cut.gradient.size} != pool dimension {self.dim}")
        for existing in self.cuts:
            if abs(existing.intercept - cut.intercept) <= 1e-12 and np.all(
                np.abs(existing.gradient - cut.gradient) <= 1e-12
            ):
                return False
        self.cuts.append(cut)
        if self.max_cuts is not None and len(self.cuts) > self.max_cuts:
            self.cuts.pop(0)
        return True

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ValueError(f"point dimension {x.size} != pool dimension {self.dim}")
        best = self.lower_bound
        if self.cuts:
            g = np.array([c.gradient for c in self.cuts])
            a = np.array([c.intercept for c in self.cuts])
            best = max(best, float(np.max(a + g @ x)))
        return best


def assemble_stage_lp(
    realization: StageRealization,
    x_prev: np.ndarray | None,
    pool: CutPool,
) -> LinearProgram:
    """Epigraph-form stage LP.

    Columns: stage variables x (n of them), theta, one slack per cut.
    Rows: structural equalities A x = b - B x_prev first, then one row
    ``<g_k, x> - theta + s_k = -intercept_k`` (s_k >= 0) per cut.
    theta has lower bound ``pool.lower_bound`` and objective coefficient 1;
    an empty pool therefore prices the future at exactly that bound.
    """
    n = realization.n_vars
    m = realization.n_rows
    ncuts = len(pool.cuts)
    if pool.dim != n:
        raise ValueError(f"pool dimension {pool.dim} != stage dimension {n}")

    rhs_struct = realization.b.copy()
    if realization.b_mat is not None:
        if x_prev is None:
            raise ValueError("coupled stage needs the previous decision")
        x_prev = np.asarray(x_prev, dtype=float).ravel()
        if x_prev.size != realization.b_mat.shape[1]:
            raise ValueError("previous decision dimension mismatch")
        rhs_struct = rhs_struct - realization.b_mat @ x_prev

    c = np.concatenate([realization.c, [1.0], np.zeros(ncuts)])
    lb = np.concatenate([realization.lb, [pool.lower_bound], np.zeros(ncuts)])
    ub = np.concatenate([realization.ub, [INF], np.full(ncuts, INF)])

    blocks = [sp.hstack([realization.a_mat, sp.csr_matrix((m, 1 + ncuts))])]
    rhs = [rhs_struct]
    if ncuts:
        g = sp.csr_matrix(np.array([cut.gradient for cut in pool.cuts]))
        theta_col = sp.csr_matrix(-np.ones((ncuts, 1)))
        blocks.append(sp.hstack([g, theta_col, sp.identity(ncuts, format="csr")]))
        rhs.append(np.array([-cut.intercept for cut in pool.cuts]))
    return LinearProgram(
        c=c,
        a_eq=sp.vstack(blocks, format="csr"),
        b_eq=np.concatenate(rhs),
        lb=lb,
        ub=ub,
    )


def save_pools(pools: dict[int, CutPool], path) -> None:
    """JSON lines, one object per cut; floats round-trip at full precision."""
    with open(path, "w") as f:
        for t in sorted(pools):
            for cut in pools[t].cuts:
                f.write(
                    json.dumps(
                        {
                            "t": t,
                            "intercept": cut.intercept,
                            "gradient": list(cut.gradient),
                            "iter": cut.origin_iteration,
                        }
                    )
                    + "\n"
                )


def load_pools(path, dims: dict[int, int], lower_bounds: dict[int, float] | None = None) -> dict[int, CutPool]:
    """Load pools for the given per-stage dimensions; empty file -> empty pools."""
    lower_bounds = lower_bounds or {}
    pools = {t: CutPool(dim=d, lower_bound=lower_bounds.get(t, 0.0)) for t, d in dims.items()}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            t = int(rec["t"])
            if t not in pools:
                raise ValueError(f"cut file references unknown stage {t}")
            grad = np.array(rec["gradient"], dtype=float)
            if grad.size != pools[t].dim:
                raise ValueError(
                    f"cut for stage {t} has dimension {grad.size}, expected {pools[t].dim}"
                )
            pools[t].cuts.append(
                Cut(intercept=float(rec["intercept"]), gradient=grad, origin_iteration=int(rec.get("iter", 0)))
            )
    return pools
