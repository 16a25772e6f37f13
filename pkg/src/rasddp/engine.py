"""The SDDP iteration loop: sampled forward passes produce trial points,
backward passes add one risk-adjusted cut per stage, and the first-stage
objective against the current pools is a valid, monotone lower bound.

Stage LPs are solved in epigraph form (see :mod:`rasddp.cuts`); the cut at
stage t combines the N backward values and subgradients with the
worst-case tail weights, anchored at the iteration's trial point.  The
per-stage backward value vectors are also fed to the frequency tracker
that drives biased sampling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from .cuts import Cut, CutPool, assemble_stage_lp
from .model import Instance, StageRealization
from .risk import RiskParams, kappa_index
from .sampling import (
    FrequencyTable,
    SamplerSpec,
    current_stage_weights,
    finalize_bad_outcome_weights,
    record_backward_values,
    sample_index,
)

__all__ = [
    "Trajectory",
    "IterationRecord",
    "RunConfig",
    "RunResult",
    "make_pools",
    "forward_pass",
    "backward_pass",
    "lower_bound",
    "statistical_upper_bound",
    "run",
]


@dataclass
class Trajectory:
    """One forward-pass realization."""

    sampled_indices: dict[int, int]  # stage -> outcome index
    trial_points: dict[int, np.ndarray]  # stage -> x_t, t = 1..T-1
    stage_costs: dict[int, float]  # direct cost c'x per visited stage
    first_stage_objective: float  # f_1(x_1) + pooled future value = lower bound


@dataclass
class IterationRecord:
    iteration: int
    lower_bound: float
    upper_bound: float | None
    cumulative_cost: float
    wall_ms: float
    scenario: tuple[int, ...]


@dataclass
class RunConfig:
    risk: RiskParams
    max_iterations: int
    seed: int = 0
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    mode: str = ""
    compute_upper_bound: bool = False
    # switch to fixed-bias sampling (weights from own frequencies) at this iteration
    switch_iteration: int | None = None
    switch_weights: list[np.ndarray] | None = None
    # optional stall rule: stop when relative lb improvement over the window drops below tol
    stall_tolerance: float | None = None
    stall_window: int = 100
    track_frequencies: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RunResult:
    pools: dict[int, CutPool]
    log: list[IterationRecord]
    frequencies: FrequencyTable
    config: RunConfig


def make_pools(instance: Instance, lower_bounds: dict[int, float] | None = None) -> dict[int, CutPool]:
    """One pool per stage t = 2..T+1; pool t approximates the cost-to-go of
    stages t..T as a function of x_{t-1}.  Pool T+1 stays empty (terminal)."""
    lower_bounds = lower_bounds or {}
    T = instance.horizon
    pools = {}
    for t in range(2, T + 2):
        pools[t] = CutPool(dim=instance.n_vars(t - 1), lower_bound=lower_bounds.get(t, 0.0))
    return pools


def _check_status(sol: lpmod.LpSolution, stage: int) -> lpmod.LpSolution:
    if sol.status is lpmod.LpStatus.INFEASIBLE:
        raise RuntimeError(f"recourse violated at stage {stage}: infeasible stage LP")
    if sol.status is lpmod.LpStatus.UNBOUNDED:
        raise RuntimeError(f"unbounded stage LP at stage {stage}")
    return sol


def _solve_stage(
    realization: StageRealization,
    x_prev: np.ndarray | None,
    pool: CutPool,
    stage: int,
    warm: lpmod.LpSolution | None = None,
) -> lpmod.LpSolution:
    lp = assemble_stage_lp(realization, x_prev, pool)
    sol = lpmod.solve_with_dual_start(lp, warm) if warm is not None else lpmod.solve(lp)
    return _check_status(sol, stage)


class _SolverCache:
    """One persistent LP per (stage, outcome index), kept in sync with the
    pools by appending the cut rows added since the last solve.  Reusing the
    solver's basis across the run makes the repeated stage solves cheap."""

    def __init__(self):
        self._solvers: dict[tuple[int, int], list] = {}

    def solve(
        self,
        stage: int,
        outcome: int,
        realization: StageRealization,
        x_prev: np.ndarray | None,
        pool: CutPool,
    ) -> lpmod.LpSolution:
        key = (stage, outcome)
        entry = self._solvers.get(key)
        if entry is not None and len(pool.cuts) < entry[1]:
            entry = None  # pool was rebuilt or truncated; start over
        if entry is None:
            ps = lpmod.PersistentLp(
                assemble_stage_lp(realization, x_prev, pool),
                n_base_rows=realization.n_rows,
                n_base_vars=realization.n_vars + 1,  # x block plus epigraph
                n_extra_rows=len(pool.cuts),
            )
            self._solvers[key] = entry = [ps, len(pool.cuts)]
        else:
            ps, synced = entry
            n = realization.n_vars
            for cut in pool.cuts[synced:]:
                nz = np.flatnonzero(cut.gradient)
                idx = np.append(nz, n)  # n is the epigraph column
                val = np.append(cut.gradient[nz], -1.0)
                ps.append_slack_row(idx, val, -cut.intercept)
            entry[1] = len(pool.cuts)
            rhs = realization.b
            if realization.b_mat is not None:
                rhs = rhs - realization.b_mat @ np.asarray(x_prev, dtype=float)
            ps.set_rhs(rhs)
        return _check_status(ps.solve(), stage)


def forward_pass(
    instance: Instance,
    pools: dict[int, CutPool],
    stage_weights: dict[int, np.ndarray],
    rng: np.random.Generator,
    sample_last_stage: bool = True,
    cache: "_SolverCache | None" = None,
) -> Trajectory:
    """Sample one scenario for stages 2..T-1 and roll the current policy.

    Stage T is not solved here; its outcome index is drawn (from the
    instance's own stage weights) so the backward pass can price the
    iteration's full scenario cost.
    """
    T = instance.horizon
    indices: dict[int, int] = {}
    for t in range(2, T):
        indices[t] = sample_index(stage_weights[t], rng)
    if sample_last_stage:
        indices[T] = sample_index(instance.stage_data(T).weights, rng)

    def stage_solve(t, j, r, x_prev, pool):
        if cache is not None:
            return cache.solve(t, j, r, x_prev, pool)
        return _solve_stage(r, x_prev, pool, t)

    trial: dict[int, np.ndarray] = {}
    costs: dict[int, float] = {}
    fs = instance.first_stage
    sol = stage_solve(1, 0, fs, None, pools[2])
    x = sol.x[: fs.n_vars]
    trial[1] = x
    costs[1] = float(fs.c @ x)
    first_obj = sol.objective
    for t in range(2, T):
        r = instance.stage_data(t).realizations[indices[t]]
        sol = stage_solve(t, indices[t], r, trial[t - 1], pools[t + 1])
        x = sol.x[: r.n_vars]
        trial[t] = x
        costs[t] = float(r.c @ x)
    return Trajectory(
        sampled_indices=indices,
        trial_points=trial,
        stage_costs=costs,
        first_stage_objective=first_obj,
    )


def _cut_combination(
    values: np.ndarray,
    gradients: np.ndarray,
    weights: np.ndarray,
    risk: RiskParams,
) -> tuple[float, np.ndarray]:
    """Combine per-outcome (value, subgradient) pairs into one affine minorant.

    lam = 0: plain weighted expectation (valid for any outcome weights).
    lam > 0: tail-adjusted combination over the ascending value order;
    requires equal outcome weights.
    """
    n = values.size
    if risk.lam == 0.0:
        return float(weights @ values), weights @ gradients
    if not np.allclose(weights, 1.0 / n, rtol=0.0, atol=1e-12):
        raise ValueError("risk-averse cuts require equal outcome weights")
    order = np.argsort(values, kind="stable")
    v = values[order]
    g = gradients[order]
    kappa = kappa_index(n, risk.alpha)
    lam, alpha = risk.lam, risk.alpha
    val = (1.0 - lam) / n * v.sum() + lam * v[kappa - 1]
    grad = (1.0 - lam) / n * g.sum(axis=0) + lam * g[kappa - 1]
    if kappa < n:
        val += lam / (alpha * n) * float(np.sum(v[kappa:] - v[kappa - 1]))
        grad = grad + lam / (alpha * n) * (g[kappa:] - g[kappa - 1]).sum(axis=0)
    return val, grad


def backward_pass(
    instance: Instance,
    pools: dict[int, CutPool],
    trajectory: Trajectory,
    risk: RiskParams,
    iteration: int = 0,
    cache: "_SolverCache | None" = None,
) -> dict[int, np.ndarray]:
    """Refine pools T down to 2 at the trajectory's trial points.

    Returns the per-stage vectors of backward values (indexed by outcome),
    for the frequency tracker and for scenario-cost bookkeeping.
    """
    T = instance.horizon
    stage_values: dict[int, np.ndarray] = {}
    for t in range(T, 1, -1):
        sd = instance.stage_data(t)
        x_anchor = trajectory.trial_points[t - 1]
        n_prev = x_anchor.size
        values = np.empty(sd.n_outcomes)
        grads = np.empty((sd.n_outcomes, n_prev))
        sol = None
        for j, r in enumerate(sd.realizations):
            if cache is not None:
                sol = cache.solve(t, j, r, x_anchor, pools[t + 1])
            else:
                # consecutive outcomes share the LP structure, so the
                # previous basis is a good dual-simplex starting point
                sol = _solve_stage(r, x_anchor, pools[t + 1], t, warm=sol)
            values[j] = sol.objective
            pi = sol.eq_duals[: r.n_rows]
            grads[j] = -(r.b_mat.T @ pi)
        val, grad = _cut_combination(values, grads, sd.weights, risk)
        pools[t].add(
            Cut(
                intercept=val - float(grad @ x_anchor),
                gradient=grad,
                origin_iteration=iteration,
            )
        )
        stage_values[t] = values
    return stage_values


def lower_bound(instance: Instance, pools: dict[int, CutPool]) -> float:
    """First-stage optimum against the current pools."""
    sol = _solve_stage(instance.first_stage, None, pools[2], 1)
    return sol.objective


def statistical_upper_bound(log: list[IterationRecord], m: int, risk: RiskParams) -> float:
    """Running average of the first m cumulative scenario costs.

    Only meaningful when forward sampling follows the objective measure,
    i.e. risk-neutral runs (including change-of-measure runs); refused
    otherwise because the average then estimates the wrong functional.
    """
    if risk.lam > 0.0:
        raise ValueError("statistical upper bound is only valid for risk-neutral runs")
    if not 1 <= m <= len(log):
        raise ValueError(f"iteration {m} outside the log")
    return float(np.mean([rec.cumulative_cost for rec in log[:m]]))


def run(
    instance: Instance,
    config: RunConfig,
    initial_pools: dict[int, CutPool] | None = None,
) -> RunResult:
    """Alternate forward and backward passes for the configured budget."""
    T = instance.horizon
    if config.compute_upper_bound and config.risk.lam > 0.0:
        raise ValueError("statistical upper bound is only valid for risk-neutral runs")
    pools = initial_pools if initial_pools is not None else make_pools(instance)
    n_outcomes = {t: instance.stage_data(t).n_outcomes for t in range(2, T + 1)}
    freq = FrequencyTable.empty(T, n_outcomes)
    rng = np.random.default_rng(config.seed)
    sampler = config.sampler
    cache = _SolverCache()
    log: list[IterationRecord] = []
    cost_sum = 0.0

    for m in range(1, config.max_iterations + 1):
        t0 = time.perf_counter()
        if config.switch_iteration is not None and m == config.switch_iteration + 1:
            weights = config.switch_weights
            if weights is None:
                weights = finalize_bad_outcome_weights(freq, config.risk)
            sampler = SamplerSpec(kind="fixed", fixed_weights=weights)
        stage_weights = {
            t: current_stage_weights(
                sampler,
                freq,
                config.risk,
                t,
                n_outcomes[t],
                base_weights=instance.stage_data(t).weights,
            )
            for t in range(2, T)
        }
        traj = forward_pass(instance, pools, stage_weights, rng, cache=cache)
        stage_values = backward_pass(
            instance, pools, traj, config.risk, iteration=m, cache=cache
        )
        if config.track_frequencies:
            for t in range(2, T + 1):
                record_backward_values(
                    freq, t, stage_values[t], config.risk.alpha, m, decay=sampler.decay
                )
            freq.iterations_observed += 1
        last_cost = float(stage_values[T][traj.sampled_indices[T]])
        cum = sum(traj.stage_costs.values()) + last_cost
        cost_sum += cum
        ub = cost_sum / m if config.compute_upper_bound else None
        log.append(
            IterationRecord(
                iteration=m,
                lower_bound=traj.first_stage_objective,
                upper_bound=ub,
                cumulative_cost=cum,
                wall_ms=(time.perf_counter() - t0) * 1e3,
                scenario=tuple(traj.sampled_indices[t] for t in sorted(traj.sampled_indices)),
            )
        )
        if config.stall_tolerance is not None and m > config.stall_window:
            past = log[-config.stall_window - 1].lower_bound
            now = log[-1].lower_bound
            if abs(now - past) <= config.stall_tolerance * (1.0 + abs(now)):
                break
    return RunResult(pools=pools, log=log, frequencies=freq, config=config)
