import itertools

import numpy as np
import pytest

from rasddp.engine import RunConfig, _solve_stage, make_pools, run
from rasddp.hydro import (
    Arc,
    DeficitTier,
    HydroSystemSpec,
    Subsystem,
    ThermalPlant,
    build_instance,
    default_desk_spec,
    load_spec,
    save_spec,
    validate_spec,
    variable_names,
)
from rasddp.model import scenario_count, validate
from rasddp.risk import RiskParams


def test_desk_specs_validate_and_build():
    for size in ("tiny", "small"):
        spec = default_desk_spec(size)
        assert validate_spec(spec) == []
        inst = build_instance(spec)
        assert validate(inst) == []
    with pytest.raises(ValueError):
        default_desk_spec("huge")


def test_desk_spec_is_seeded_deterministic():
    a = default_desk_spec("tiny")
    b = default_desk_spec("tiny")
    for ea, eb in zip(a.noise, b.noise):
        np.testing.assert_array_equal(ea, eb)


def test_small_scenario_count_overflows_small_caps():
    inst = build_instance(default_desk_spec("small"))
    count, overflow = scenario_count(inst)
    assert count == 10**11 and not overflow
    count, overflow = scenario_count(inst, cap=10**6)
    assert overflow


def test_validator_catches_bad_specs():
    spec = default_desk_spec("tiny")
    spec.subsystems[0].deficit_tiers[-1].cap = 100.0  # bounded top tier
    assert any("deficit" in p for p in validate_spec(spec))
    with pytest.raises(ValueError):
        build_instance(spec)

    spec = default_desk_spec("tiny")
    spec.noise[0] = np.array([[1.0], [0.0], [1.2]])  # nonpositive noise
    assert any("positive" in p for p in validate_spec(spec))

    spec = default_desk_spec("tiny")
    spec.subsystems[0].demand = [1.0]  # wrong horizon
    assert any("demand" in p for p in validate_spec(spec))


def test_variable_names_match_layout():
    spec = default_desk_spec("small")
    names = variable_names(spec)
    inst = build_instance(spec)
    assert len(names) == inst.n_vars(1)
    assert names[0] == "StoVol_S1"
    assert any(n.startswith("Exchange_") for n in names)
    assert sum(n.startswith("Inflow_") for n in names) == 2


def test_state_dimension_four_subsystems():
    """With 4 subsystems and one inflow lag the coupling state is 8 numbers:
    4 storages plus 4 lagged inflows."""
    T = 3
    subs = [
        Subsystem(
            name=f"R{k}",
            storage_cap=10.0,
            hydro_cap=5.0,
            demand=[6.0] * T,
            thermal=[ThermalPlant(cost=10.0, hi=8.0)],
            deficit_tiers=[DeficitTier(cost=100.0)],
        )
        for k in range(4)
    ]
    spec = HydroSystemSpec(
        horizon=T,
        subsystems=subs,
        arcs=[Arc(0, 1, 0.0, 2.0)],
        lag=1,
        period=12,
        phi0=[np.full(4, 3.0)] * 12,
        phi=[[0.3 * np.eye(4)]] * 12,
        noise=[np.ones((2, 4))] * (T - 1),
    )
    assert validate_spec(spec) == []
    inst = build_instance(spec)
    r = inst.stage_data(2).realizations[0]
    coupled_cols = np.unique(r.b_mat.tocoo().col)
    assert coupled_cols.size == 8


def test_row_residuals_match_balance_equations():
    """Feed random consistent vectors through the generated rows and check
    the three equation families hold with the stated coefficients."""
    spec = default_desk_spec("small")
    inst = build_instance(spec)
    rng = np.random.default_rng(0)
    K = 2
    n = inst.n_vars(1)
    for _ in range(100):
        t = int(rng.integers(2, spec.horizon + 1))
        j = int(rng.integers(len(spec.noise[t - 2])))
        r = inst.stage_data(t).realizations[j]
        x_prev = rng.uniform(0.0, 5.0, size=n)
        x = rng.uniform(0.0, 5.0, size=n)
        resid = r.a_mat @ x + r.b_mat @ x_prev - r.b
        eta = np.asarray(spec.noise[t - 2][j])
        season = (t - 1) % spec.period
        phi0 = np.asarray(spec.phi0[season])
        phi = np.asarray(spec.phi[season][0])
        # manual re-evaluation: storage rows then inflow rows then load rows
        v_next, q, s, a = x[0:K], x[K : 2 * K], x[2 * K : 3 * K], x[16:18]
        v_prev, a_prev = x_prev[0:K], x_prev[16:18]
        storage = v_next - (v_prev + a - q - s)
        inflow = a - eta * (phi0 + phi @ a_prev)
        thermal = x[6:10]
        deficit = x[10:14]
        flows = x[14:16]
        demand = np.array([sub.demand[t - 1] for sub in spec.subsystems])
        load = np.empty(K)
        load[0] = q[0] + thermal[0] + thermal[1] + deficit[0] + deficit[1] + flows[1] - flows[0] - demand[0]
        load[1] = q[1] + thermal[2] + thermal[3] + deficit[2] + deficit[3] + flows[0] - flows[1] - demand[1]
        manual = np.concatenate([storage, inflow, load])
        assert np.max(np.abs(resid - manual)) <= 1e-10


def test_zero_demand_costs_nothing():
    spec = default_desk_spec("tiny")
    for sub in spec.subsystems:
        sub.demand = [0.0] * spec.horizon
    inst = build_instance(spec)
    res = run(inst, RunConfig(risk=RiskParams(0.5, 0.2), max_iterations=10, seed=0))
    assert res.log[-1].lower_bound == pytest.approx(0.0, abs=1e-9)


def test_tiny_feasible_on_every_scenario():
    inst = build_instance(default_desk_spec("tiny"))
    pools = make_pools(inst)
    T = inst.horizon
    n_paths = 0
    for path in itertools.product(range(3), repeat=T - 1):
        x = _solve_stage(inst.first_stage, None, pools[2], 1).x[: inst.n_vars(1)]
        for t in range(2, T + 1):
            r = inst.stage_data(t).realizations[path[t - 2]]
            sol = _solve_stage(r, x, pools[t + 1], t)
            x = sol.x[: r.n_vars]
        n_paths += 1
    assert n_paths == 3 ** (T - 1)


def test_inflows_stay_positive_along_paths():
    spec = default_desk_spec("tiny")
    inst = build_instance(spec)
    pools = make_pools(inst)
    inflow_col = variable_names(spec).index("Inflow_S1")
    for path in itertools.product(range(3), repeat=inst.horizon - 1):
        x = _solve_stage(inst.first_stage, None, pools[2], 1).x[: inst.n_vars(1)]
        assert x[inflow_col] > 0
        for t in range(2, inst.horizon + 1):
            r = inst.stage_data(t).realizations[path[t - 2]]
            x = _solve_stage(r, x, pools[t + 1], t).x[: r.n_vars]
            assert x[inflow_col] > 0


def test_discount_prefolded_into_costs():
    spec = default_desk_spec("tiny")
    inst = build_instance(spec)
    base_cost = spec.subsystems[0].thermal[0].cost
    # thermal column 3 (after storage, hydro, spill)
    assert inst.first_stage.c[3] == pytest.approx(base_cost, abs=1e-12)
    assert inst.stage_data(2).realizations[0].c[3] == pytest.approx(
        base_cost * spec.discount, abs=1e-12
    )
    assert inst.stage_data(6).realizations[0].c[3] == pytest.approx(
        base_cost * spec.discount**5, abs=1e-12
    )


def test_lagged_inflow_carry_variables():
    """With lag 2 the previous stage's inflow must be carried one stage so
    stage t can couple to a_{t-2} through the previous decision vector."""
    spec = default_desk_spec("tiny")
    spec.lag = 2
    spec.phi = [[0.35 * np.eye(1), 0.1 * np.eye(1)] for _ in range(12)]
    spec.initial_inflows = np.full((2, 1), 4.0)
    assert validate_spec(spec) == []
    inst = build_instance(spec)
    names = variable_names(spec)
    assert "InflowLag1_S1" in names
    assert validate(inst) == []
    res = run(inst, RunConfig(risk=RiskParams(0.2, 0.4), max_iterations=10, seed=0))
    assert np.isfinite(res.log[-1].lower_bound)


def test_spec_json_round_trip(tmp_path):
    spec = default_desk_spec("small")
    path = tmp_path / "spec.json"
    save_spec(spec, path)
    back = load_spec(path)
    assert validate_spec(back) == []
    assert back.horizon == spec.horizon
    assert np.isinf(back.subsystems[0].deficit_tiers[-1].cap)
    for ea, eb in zip(spec.noise, back.noise):
        np.testing.assert_array_equal(ea, eb)
    inst_a = build_instance(spec)
    inst_b = build_instance(back)
    np.testing.assert_array_equal(
        inst_a.stage_data(5).realizations[3].b, inst_b.stage_data(5).realizations[3].b
    )
