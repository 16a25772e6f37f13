"""Stage LP solving: equality-constrained LPs with variable bounds.

Solutions carry the equality-row duals pi (sensitivities of the optimal
value to the right-hand side) that the cut construction needs, plus
reduced costs for the bound constraints.  The backend is the HiGHS dual
simplex shipped inside scipy, driven through its model API so that the
per-solve overhead stays small; basic optimal solutions give exact basic
duals, which is what makes the generated cuts valid subgradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.optimize._highspy._core as _hs

INF = float("inf")

__all__ = [
    "LpStatus",
    "LinearProgram",
    "LpSolution",
    "PersistentLp",
    "solve",
    "solve_with_dual_start",
    "dump",
]


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """min c'x  s.t.  A_eq x = b_eq,  lb <= x <= ub."""

    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        self.lb = np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.asarray(self.ub, dtype=float).ravel()
        if not sp.issparse(self.a_eq):
            self.a_eq = sp.csr_matrix(np.atleast_2d(np.asarray(self.a_eq, dtype=float)))
        else:
            self.a_eq = self.a_eq.tocsr()
        n = self.c.size
        m = self.b_eq.size
        if self.a_eq.shape != (m, n):
            raise ValueError(
                f"malformed LP: matrix shape {self.a_eq.shape} vs {m} rows, {n} cols"
            )
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("malformed LP: bound vectors do not match variable count")
        if np.any(self.lb > self.ub):
            raise ValueError("malformed LP: lb > ub")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b_eq.size

    @classmethod
    def from_triplets(cls, c, triplets, b_eq, lb, ub) -> "LinearProgram":
        """Build from (row, col, value) triplets; duplicates are summed."""
        c = np.asarray(c, dtype=float).ravel()
        b = np.asarray(b_eq, dtype=float).ravel()
        if triplets:
            rows, cols, vals = zip(*triplets)
            if max(rows) >= b.size or max(cols) >= c.size:
                raise ValueError("malformed LP: triplet index out of range")
            a = sp.coo_matrix((vals, (rows, cols)), shape=(b.size, c.size)).tocsr()
            a.sum_duplicates()
        else:
            a = sp.csr_matrix((b.size, c.size))
        return cls(c=c, a_eq=a, b_eq=b, lb=lb, ub=ub)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    objective: float = float("nan")
    eq_duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.empty(0))
    # simplex basis statuses (ints), usable for warm starts
    col_basis: np.ndarray | None = None
    row_basis: np.ndarray | None = None


def _build_model(lp: LinearProgram) -> "_hs._Highs":
    h = _hs._Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("presolve", "off")
    h.setOptionValue("solver", "simplex")
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    model = _hs.HighsLp()
    model.num_col_ = lp.n_vars
    model.num_row_ = lp.n_rows
    model.col_cost_ = lp.c
    model.col_lower_ = lp.lb
    model.col_upper_ = lp.ub
    model.row_lower_ = lp.b_eq
    model.row_upper_ = lp.b_eq
    model.a_matrix_.format_ = _hs.MatrixFormat.kRowwise
    model.a_matrix_.start_ = lp.a_eq.indptr.astype(np.int32)
    model.a_matrix_.index_ = lp.a_eq.indices.astype(np.int32)
    model.a_matrix_.value_ = lp.a_eq.data
    h.passModel(model)
    return h


def _extract(h: "_hs._Highs", lp: LinearProgram | None = None) -> LpSolution:
    status = h.getModelStatus()
    if status == _hs.HighsModelStatus.kOptimal:
        sol = h.getSolution()
        basis = h.getBasis()
        return LpSolution(
            status=LpStatus.OPTIMAL,
            x=np.array(sol.col_value),
            objective=float(h.getObjectiveValue()),
            eq_duals=np.array(sol.row_dual),
            reduced_costs=np.array(sol.col_dual),
            col_basis=np.array([int(s) for s in basis.col_status], dtype=np.int8),
            row_basis=np.array([int(s) for s in basis.row_status], dtype=np.int8),
        )
    if status == _hs.HighsModelStatus.kInfeasible:
        return LpSolution(status=LpStatus.INFEASIBLE)
    if status == _hs.HighsModelStatus.kUnbounded:
        return LpSolution(status=LpStatus.UNBOUNDED)
    if status == _hs.HighsModelStatus.kIterationLimit:
        raise RuntimeError("solver stalled")
    raise RuntimeError(f"unexpected solver status: {status}")


def solve(lp: LinearProgram) -> LpSolution:
    """Solve to a basic optimal solution with exact equality duals.

    Deterministic for identical inputs (single thread, fixed seed).
    """
    h = _build_model(lp)
    h.run()
    return _extract(h, lp)


def solve_with_dual_start(lp: LinearProgram, previous: LpSolution) -> LpSolution:
    """Re-solve a structurally identical LP starting from a previous basis.

    The warm start only affects runtime; any dimension mismatch with the
    previous solution falls back to a cold solve.
    """
    if (
        previous.status is not LpStatus.OPTIMAL
        or previous.col_basis is None
        or previous.col_basis.size != lp.n_vars
        or previous.row_basis is None
        or previous.row_basis.size != lp.n_rows
    ):
        return solve(lp)
    h = _build_model(lp)
    basis = _hs.HighsBasis()
    basis.valid = True
    basis.col_status = [_hs.HighsBasisStatus(int(s)) for s in previous.col_basis]
    basis.row_status = [_hs.HighsBasisStatus(int(s)) for s in previous.row_basis]
    if h.setBasis(basis) != _hs.HighsStatus.kOk:
        return solve(lp)
    h.run()
    return _extract(h, lp)


class PersistentLp:
    """Re-solvable LP handle for a fixed column block.

    Supports changing the equality right-hand sides in place and appending
    rows of the form ``coeffs . x + s = rhs`` with a fresh slack ``s >= 0``
    (the epigraph-cut row shape).  The solver keeps its basis between
    solves, so successive calls after small edits are much cheaper than
    cold solves.  The base row count is frozen at construction; duals of
    those rows stay at the same positions as appended rows accumulate.
    """

    def __init__(
        self,
        lp: LinearProgram,
        n_base_rows: int | None = None,
        n_base_vars: int | None = None,
        n_extra_rows: int = 0,
    ):
        """``n_base_rows``/``n_base_vars`` mark the editable block when the
        initial LP already carries appended rows and their slack columns."""
        self._h = _build_model(lp)
        self.n_base_vars = lp.n_vars if n_base_vars is None else n_base_vars
        self.n_base_rows = lp.n_rows if n_base_rows is None else n_base_rows
        self.n_extra_rows = n_extra_rows
        if self.n_base_vars + self.n_extra_rows != lp.n_vars:
            raise ValueError("base/extra column split does not match the LP")
        if self.n_base_rows + self.n_extra_rows != lp.n_rows:
            raise ValueError("base/extra row split does not match the LP")

    def set_rhs(self, b: np.ndarray) -> None:
        b = np.asarray(b, dtype=float).ravel()
        if b.size != self.n_base_rows:
            raise ValueError("rhs length does not match the base row count")
        for i, v in enumerate(b):
            self._h.changeRowBounds(i, v, v)

    def append_slack_row(self, indices, values, rhs: float) -> None:
        s = self.n_base_vars + self.n_extra_rows
        empty_i = np.empty(0, dtype=np.int32)
        empty_v = np.empty(0, dtype=float)
        self._h.addCol(0.0, 0.0, INF, 0, empty_i, empty_v)
        idx = np.append(np.asarray(indices, dtype=np.int32), np.int32(s))
        val = np.append(np.asarray(values, dtype=float), 1.0)
        self._h.addRow(float(rhs), float(rhs), idx.size, idx, val)
        self.n_extra_rows += 1

    def solve(self) -> LpSolution:
        self._h.run()
        status = self._h.getModelStatus()
        if status not in (
            _hs.HighsModelStatus.kOptimal,
            _hs.HighsModelStatus.kInfeasible,
            _hs.HighsModelStatus.kUnbounded,
        ):
            # a stale basis can strand the simplex after many incremental
            # edits; retry once from scratch
            self._h.clearSolver()
            self._h.run()
        return _extract(self._h, None)


def dump(lp: LinearProgram) -> str:
    """Human-readable text dump of an LP, for bug reports."""
    lines = [f"minimize over {lp.n_vars} vars, {lp.n_rows} equality rows"]
    lines.append("obj: " + " ".join(f"{v:.17g}" for v in lp.c))
    coo = lp.a_eq.tocoo()
    by_row: dict[int, list[str]] = {}
    for r, c, v in zip(coo.row, coo.col, coo.data):
        by_row.setdefault(int(r), []).append(f"{v:+.17g} x{c}")
    for i, b in enumerate(lp.b_eq):
        lines.append(f"row {i}: " + " ".join(by_row.get(i, ["0"])) + f" = {b:.17g}")
    for j, (lo, hi) in enumerate(zip(lp.lb, lp.ub)):
        lines.append(f"bound x{j}: [{lo:.17g}, {hi:.17g}]")
    return "\n".join(lines)
