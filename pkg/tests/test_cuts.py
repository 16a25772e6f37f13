import numpy as np
import pytest
import scipy.sparse as sp

from rasddp.cuts import Cut, CutPool, assemble_stage_lp, load_pools, save_pools
from rasddp.lp import LpStatus, solve
from rasddp.model import StageRealization


def make_realization(coupled=True):
    # min x1 + 10 x2 s.t. x1 + x2 - 0.5 x1_prev = 2
    return StageRealization(
        c=np.array([1.0, 10.0]),
        a_mat=sp.csr_matrix(np.array([[1.0, 1.0]])),
        b=np.array([2.0]),
        lb=np.zeros(2),
        ub=np.full(2, np.inf),
        b_mat=sp.csr_matrix(np.array([[-0.5, 0.0]])) if coupled else None,
    )


def test_cut_rejects_nonfinite():
    with pytest.raises(ValueError):
        Cut(intercept=np.nan, gradient=[1.0])
    with pytest.raises(ValueError):
        Cut(intercept=0.0, gradient=[np.inf])


def test_pool_evaluate_is_max_of_cuts_and_floor():
    pool = CutPool(dim=2, lower_bound=1.0)
    assert pool.evaluate([0.0, 0.0]) == 1.0
    pool.add(Cut(intercept=0.0, gradient=[1.0, 0.0]))
    pool.add(Cut(intercept=3.0, gradient=[-1.0, 0.0]))
    assert pool.evaluate([5.0, 0.0]) == 5.0
    assert pool.evaluate([0.5, 0.0]) == 2.5
    assert pool.evaluate([1.0, 7.0]) == 2.0


def test_pool_drops_exact_duplicates():
    pool = CutPool(dim=1)
    assert pool.add(Cut(intercept=1.0, gradient=[2.0]))
    assert not pool.add(Cut(intercept=1.0, gradient=[2.0]))
    assert len(pool) == 1


def test_pool_dimension_mismatch():
    pool = CutPool(dim=2)
    with pytest.raises(ValueError):
        pool.add(Cut(intercept=0.0, gradient=[1.0]))
    with pytest.raises(ValueError):
        pool.evaluate([1.0])


def test_pool_fifo_cap():
    pool = CutPool(dim=1, max_cuts=2)
    for k in range(4):
        pool.add(Cut(intercept=float(k), gradient=[0.0]))
    assert [c.intercept for c in pool.cuts] == [2.0, 3.0]


def test_stage_lp_prices_future_through_epigraph():
    r = make_realization()
    pool = CutPool(dim=2, lower_bound=0.0)
    pool.add(Cut(intercept=4.0, gradient=[-1.0, 0.0]))  # future >= 4 - x1
    lp = assemble_stage_lp(r, np.array([2.0, 0.0]), pool)
    sol = solve(lp)
    assert sol.status is LpStatus.OPTIMAL
    # rhs becomes 3; x1 = 3 costs 3 and brings future to 1: total 4
    assert sol.objective == pytest.approx(4.0, abs=1e-9)
    x1, x2, theta = sol.x[0], sol.x[1], sol.x[2]
    assert (x1, x2) == pytest.approx((3.0, 0.0), abs=1e-9)
    assert theta == pytest.approx(1.0, abs=1e-9)


def test_stage_lp_empty_pool_prices_floor():
    r = make_realization(coupled=False)
    pool = CutPool(dim=2, lower_bound=7.5)
    sol = solve(assemble_stage_lp(r, None, pool))
    assert sol.objective == pytest.approx(2.0 + 7.5, abs=1e-9)


def test_stage_lp_requires_matching_dimensions():
    r = make_realization()
    with pytest.raises(ValueError):
        assemble_stage_lp(r, None, CutPool(dim=2))  # coupled but no x_prev
    with pytest.raises(ValueError):
        assemble_stage_lp(r, np.zeros(3), CutPool(dim=2))
    with pytest.raises(ValueError):
        assemble_stage_lp(r, np.zeros(2), CutPool(dim=5))


def test_stage_objective_matches_pool_evaluation():
    """Optimal stage value == min over x of direct cost + pool.evaluate,
    checked by discretizing the one relevant variable."""
    r = make_realization()
    pool = CutPool(dim=2)
    pool.add(Cut(intercept=6.0, gradient=[-2.0, 0.0]))
    pool.add(Cut(intercept=1.0, gradient=[-0.25, 0.0]))
    x_prev = np.array([1.0, 1.0])
    sol = solve(assemble_stage_lp(r, x_prev, pool))
    xs = np.linspace(0.0, 2.5, 2001)
    direct = xs * 1.0  # x2 stays 0 (cost 10)
    future = np.array([pool.evaluate([x, 2.5 - x]) for x in xs])
    assert sol.objective == pytest.approx(np.min(direct + future), abs=1e-6)


def test_pools_round_trip(tmp_path):
    pools = {
        2: CutPool(dim=2, cuts=[Cut(1.0 / 3.0, [0.1, -0.2], 5)]),
        3: CutPool(dim=1, cuts=[Cut(2.0, [7e-17], 1), Cut(3.0, [1.5], 2)]),
    }
    path = tmp_path / "cuts.jsonl"
    save_pools(pools, path)
    back = load_pools(path, dims={2: 2, 3: 1})
    assert back[2].cuts[0].intercept == pools[2].cuts[0].intercept  # full precision
    assert back[3].cuts[0].gradient[0] == 7e-17
    assert back[3].cuts[1].origin_iteration == 2
    with pytest.raises(ValueError):
        load_pools(path, dims={2: 2})  # stage 3 missing
    with pytest.raises(ValueError):
        load_pools(path, dims={2: 1, 3: 1})  # wrong dimension
