"""Ground-truth extensive-form solver for tiny instances.

The nested objective is linearized exactly: every internal tree node gets
an epigraph value theta together with the variational encoding of the
tail measure (scalar u, per-child excess w >= z - u), so that minimizing
theta reproduces ``(1 - lam) * E + lam * AV@R_alpha`` node by node.  Node
counts are hard-capped; this module is a test oracle, not a solver.
"""

from __future__ import annotations

import numpy as np

from .lp import INF, LinearProgram, LpStatus, solve
from .model import Instance
from .risk import RiskParams

__all__ = ["extensive_form", "exact_value", "exact_value_and_policy", "exact_cost_to_go"]

DEFAULT_NODE_CAP = 5000


class _Builder:
    def __init__(self):
        self.cost: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.triplets: list[tuple[int, int, float]] = []
        self.rhs: list[float] = []

    def cols(self, n: int, cost=0.0, lo=-INF, hi=INF) -> range:
        start = len(self.cost)
        cost = np.broadcast_to(np.asarray(cost, dtype=float), (n,))
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
        self.cost.extend(cost)
        self.lb.extend(lo)
        self.ub.extend(hi)
        return range(start, start + n)

    def row(self, entries, rhs: float) -> None:
        r = len(self.rhs)
        self.triplets.extend((r, c, v) for c, v in entries if v != 0.0)
        self.rhs.append(float(rhs))

    def lp(self) -> LinearProgram:
        return LinearProgram.from_triplets(
            self.cost, [(r, c, v) for r, c, v in self.triplets], self.rhs, self.lb, self.ub
        )


def _count_nodes(instance: Instance, start_stage: int) -> int:
    total = 0
    layer = 1
    for t in range(start_stage, instance.horizon + 1):
        if t >= 2:
            layer *= instance.stage_data(t).n_outcomes
        total += layer
    return total


def _build_tree(
    instance: Instance,
    risk: RiskParams,
    node_cap: int,
    start_stage: int = 1,
    x_prev: np.ndarray | None = None,
):
    """Returns (builder, root_x_cols, objective_theta_col)."""
    T = instance.horizon
    if _count_nodes(instance, start_stage) > node_cap:
        raise ValueError("scenario tree exceeds the oracle node cap")
    b = _Builder()
    lam, alpha = risk.lam, risk.alpha

    def build_node(t: int, realization, parent_x_cols, prev_const):
        """Allocate one node; returns (x_cols, z_expr) where z_expr is the
        list of (col, coef) terms of this node's cost-to-go-inclusive value."""
        n = realization.n_vars
        x_cols = b.cols(n, cost=0.0, lo=realization.lb, hi=realization.ub)
        rhs = realization.b.copy()
        if realization.b_mat is not None and prev_const is not None:
            rhs = rhs - realization.b_mat @ prev_const
        a = realization.a_mat.tocoo()
        rows: dict[int, list[tuple[int, float]]] = {i: [] for i in range(realization.n_rows)}
        for i, jcol, v in zip(a.row, a.col, a.data):
            rows[int(i)].append((x_cols[int(jcol)], float(v)))
        if realization.b_mat is not None and parent_x_cols is not None:
            bm = realization.b_mat.tocoo()
            for i, jcol, v in zip(bm.row, bm.col, bm.data):
                rows[int(i)].append((parent_x_cols[int(jcol)], float(v)))
        for i in range(realization.n_rows):
            b.row(rows[i], rhs[i])

        z_expr = [(x_cols[i], float(realization.c[i])) for i in range(n)]
        theta = None
        if t < T:
            theta = _risk_block(t + 1, x_cols)
            z_expr.append((theta, 1.0))
        return x_cols, z_expr, theta

    def _risk_block(child_stage: int, parent_x_cols) -> int:
        """Epigraph value of the conditional risk over the children at
        ``child_stage`` given the parent decision columns; returns theta col."""
        sd = instance.stage_data(child_stage)
        child_exprs = []
        for r in sd.realizations:
            _, z, _ = build_node(child_stage, r, parent_x_cols, None)
            child_exprs.append(z)
        theta = b.cols(1, cost=0.0)[0]
        p = sd.weights
        if lam == 0.0:
            entries = [(theta, 1.0)]
            for pj, z in zip(p, child_exprs):
                entries.extend((c, -pj * v) for c, v in z)
            b.row(entries, 0.0)
        else:
            u = b.cols(1, cost=0.0)[0]
            w = b.cols(len(child_exprs), cost=0.0, lo=0.0)
            s = b.cols(len(child_exprs), cost=0.0, lo=0.0)
            entries = [(theta, 1.0), (u, -lam)]
            for j, (pj, z) in enumerate(zip(p, child_exprs)):
                entries.extend((c, -(1.0 - lam) * pj * v) for c, v in z)
                entries.append((w[j], -(lam / alpha) * pj))
                b.row(z + [(u, -1.0), (w[j], -1.0), (s[j], 1.0)], 0.0)
            b.row(entries, 0.0)
        return theta

    if start_stage == 1:
        fs = instance.first_stage
        x_cols, _, theta_col = build_node(1, fs, None, None)
        for i in range(fs.n_vars):
            b.cost[x_cols[i]] = float(fs.c[i])
        if theta_col is not None:
            b.cost[theta_col] = 1.0
        return b, x_cols, theta_col

    # virtual root: risk over stage ``start_stage`` outcomes at a fixed state
    sd = instance.stage_data(start_stage)
    child_exprs = []
    for r in sd.realizations:
        _, z, _ = build_node(start_stage, r, None, np.asarray(x_prev, dtype=float))
        child_exprs.append(z)
    theta = b.cols(1, cost=1.0)[0]
    p = sd.weights
    if lam == 0.0:
        entries = [(theta, 1.0)]
        for pj, z in zip(p, child_exprs):
            entries.extend((c, -pj * v) for c, v in z)
        b.row(entries, 0.0)
    else:
        u = b.cols(1, cost=0.0)[0]
        w = b.cols(len(child_exprs), cost=0.0, lo=0.0)
        s = b.cols(len(child_exprs), cost=0.0, lo=0.0)
        entries = [(theta, 1.0), (u, -lam)]
        for j, (pj, z) in enumerate(zip(p, child_exprs)):
            entries.extend((c, -(1.0 - lam) * pj * v) for c, v in z)
            entries.append((w[j], -(lam / alpha) * pj))
            b.row(z + [(u, -1.0), (w[j], -1.0), (s[j], 1.0)], 0.0)
        b.row(entries, 0.0)
    return b, None, theta


def extensive_form(instance: Instance, risk: RiskParams, node_cap: int = DEFAULT_NODE_CAP) -> LinearProgram:
    """The single LP over the full scenario tree."""
    builder, _, _ = _build_tree(instance, risk, node_cap)
    return builder.lp()


def exact_value(instance: Instance, risk: RiskParams, node_cap: int = DEFAULT_NODE_CAP) -> float:
    value, _ = exact_value_and_policy(instance, risk, node_cap)
    return value


def exact_value_and_policy(
    instance: Instance, risk: RiskParams, node_cap: int = DEFAULT_NODE_CAP
) -> tuple[float, np.ndarray]:
    """Optimal nested value and one optimal first-stage decision."""
    builder, x_cols, _ = _build_tree(instance, risk, node_cap)
    sol = solve(builder.lp())
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"extensive form not optimal: {sol.status}")
    return sol.objective, sol.x[x_cols.start : x_cols.stop]


def exact_cost_to_go(
    instance: Instance,
    risk: RiskParams,
    stage: int,
    x_prev: np.ndarray,
    node_cap: int = DEFAULT_NODE_CAP,
) -> float:
    """Exact cost-to-go of stages ``stage``..T given the previous decision."""
    if not 2 <= stage <= instance.horizon:
        raise ValueError(f"stage must be in 2..{instance.horizon}")
    builder, _, _ = _build_tree(instance, risk, node_cap, start_stage=stage, x_prev=x_prev)
    sol = solve(builder.lp())
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"cost-to-go subtree not optimal: {sol.status}")
    return sol.objective
