"""Aggregated hydrothermal long-term planning model builder.

Per subsystem: a storage balance, a periodic autoregressive inflow row
with multiplicative noise, and a load balance over hydro, thermal,
deficit tiers and interchange.  The builder emits a generic
:class:`~rasddp.model.Instance`; the top deficit tier is unbounded so
every stage LP along every scenario stays feasible.

Per-stage decision vector layout (in order):
    storage_next (K), hydro (K), spill (K), thermal (per plant),
    deficit (per tier), flow (per directed arc), inflow (K),
    inflow lag carries (K per extra lag)

The numeric data of the desk instances is synthetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import Instance, StageData, StageRealization

__all__ = [
    "ThermalPlant",
    "DeficitTier",
    "Subsystem",
    "Arc",
    "HydroSystemSpec",
    "validate_spec",
    "build_instance",
    "variable_names",
    "default_desk_spec",
    "save_spec",
    "load_spec",
]

INF = float("inf")


@dataclass
class ThermalPlant:
    cost: float
    lo: float = 0.0
    hi: float = INF


@dataclass
class DeficitTier:
    cost: float
    cap: float = INF  # top tier must stay unbounded


@dataclass
class Subsystem:
    name: str
    storage_cap: float
    hydro_cap: float
    demand: list[float]  # one entry per stage
    thermal: list[ThermalPlant] = field(default_factory=list)
    deficit_tiers: list[DeficitTier] = field(default_factory=lambda: [DeficitTier(cost=1000.0)])


@dataclass
class Arc:
    frm: int  # subsystem indices
    to: int
    lo: float = 0.0
    hi: float = INF


@dataclass
class HydroSystemSpec:
    horizon: int
    subsystems: list[Subsystem]
    arcs: list[Arc] = field(default_factory=list)
    lag: int = 1
    period: int = 12
    # phi0[s] is a K-vector, phi[s][nu-1] a (K, K) matrix, for season s
    phi0: list[np.ndarray] = field(default_factory=list)
    phi: list[list[np.ndarray]] = field(default_factory=list)
    # noise[t-2][j] is a positive K-vector of multiplicative factors, t = 2..T
    noise: list[np.ndarray] = field(default_factory=list)
    first_stage_noise: np.ndarray | None = None  # defaults to ones
    discount: float = 1.0
    initial_storage: np.ndarray | None = None
    initial_inflows: np.ndarray | None = None  # shape (lag, K): a_0, a_{-1}, ...
    reporting_horizon: int | None = None

    @property
    def n_subsystems(self) -> int:
        return len(self.subsystems)


def validate_spec(spec: HydroSystemSpec) -> list[str]:
    out: list[str] = []
    K = spec.n_subsystems
    T = spec.horizon
    if T < 2:
        out.append("horizon must be >= 2")
    if K < 1:
        out.append("need at least one subsystem")
    if spec.lag < 1:
        out.append("lag must be >= 1")
    if not 0.0 < spec.discount <= 1.0:
        out.append("discount must be in (0, 1]")
    if len(spec.phi0) != spec.period or len(spec.phi) != spec.period:
        out.append("phi/phi0 must have one entry per season")
    for s, mats in enumerate(spec.phi):
        if len(mats) != spec.lag:
            out.append(f"season {s}: expected {spec.lag} lag matrices")
        for m in mats:
            if np.asarray(m).shape != (K, K):
                out.append(f"season {s}: lag matrix shape mismatch")
            if np.any(np.asarray(m) < 0):
                out.append(f"season {s}: negative autoregressive coefficient")
    if len(spec.noise) != T - 1:
        out.append(f"expected noise for stages 2..{T}")
    for i, eta in enumerate(spec.noise):
        eta = np.asarray(eta)
        if eta.ndim != 2 or eta.shape[1] != K:
            out.append(f"stage {i + 2}: noise must be (N, {K})")
        elif np.any(eta <= 0):
            out.append(f"stage {i + 2}: noise factors must be positive")
    for k, sub in enumerate(spec.subsystems):
        if sub.storage_cap < 0 or sub.hydro_cap < 0:
            out.append(f"subsystem {k}: negative capacity")
        if len(sub.demand) != T:
            out.append(f"subsystem {k}: need one demand per stage")
        if not sub.deficit_tiers or np.isfinite(sub.deficit_tiers[-1].cap):
            out.append(f"subsystem {k}: top deficit tier must be unbounded")
    for a in spec.arcs:
        if not (0 <= a.frm < K and 0 <= a.to < K) or a.frm == a.to:
            out.append(f"arc {a.frm}->{a.to}: bad endpoints")
    if spec.initial_storage is not None and np.asarray(spec.initial_storage).shape != (K,):
        out.append("initial_storage shape mismatch")
    if spec.initial_inflows is not None and np.asarray(spec.initial_inflows).shape != (spec.lag, K):
        out.append("initial_inflows shape mismatch")
    if spec.reporting_horizon is not None and not 1 <= spec.reporting_horizon <= T:
        out.append("reporting_horizon outside 1..T")
    return out


def _layout(spec: HydroSystemSpec):
    """Column offsets of the per-stage decision vector."""
    K = spec.n_subsystems
    nT = sum(len(s.thermal) for s in spec.subsystems)
    nD = sum(len(s.deficit_tiers) for s in spec.subsystems)
    nA = len(spec.arcs)
    off = {}
    pos = 0
    for name, size in (
        ("storage", K),
        ("hydro", K),
        ("spill", K),
        ("thermal", nT),
        ("deficit", nD),
        ("flow", nA),
        ("inflow", K),
        ("carry", K * (spec.lag - 1)),
    ):
        off[name] = pos
        pos += size
    return off, pos


def variable_names(spec: HydroSystemSpec) -> list[str]:
    """Stage-variable names matching the decision-vector layout."""
    names = []
    subs = spec.subsystems
    for prefix in ("StoVol", "HydroGen", "Spill"):
        names += [f"{prefix}_{s.name}" for s in subs]
    for s in subs:
        names += [f"ThermalGen_{s.name}_{i}" for i in range(len(s.thermal))]
    for s in subs:
        names += [f"Deficit_{s.name}_{i}" for i in range(len(s.deficit_tiers))]
    names += [f"Exchange_{subs[a.frm].name}_{subs[a.to].name}" for a in spec.arcs]
    names += [f"Inflow_{s.name}" for s in subs]
    for nu in range(1, spec.lag):
        names += [f"InflowLag{nu}_{s.name}" for s in subs]
    return names


def _stage_realization(spec: HydroSystemSpec, t: int, eta: np.ndarray) -> StageRealization:
    """One stage-t outcome.  For t = 1 the initial state is folded into the
    right-hand side and no coupling matrix is attached."""
    K = spec.n_subsystems
    off, n = _layout(spec)
    season = (t - 1) % spec.period
    phi0 = np.asarray(spec.phi0[season], dtype=float)
    phis = [np.asarray(m, dtype=float) for m in spec.phi[season]]
    first = t == 1
    v_init = (
        np.asarray(spec.initial_storage, dtype=float)
        if spec.initial_storage is not None
        else np.zeros(K)
    )
    a_init = (
        np.asarray(spec.initial_inflows, dtype=float)
        if spec.initial_inflows is not None
        else np.zeros((spec.lag, K))
    )

    def prev_col(name: str, idx: int) -> int:
        return off[name] + idx

    n_rows = 2 * K + K + K * (spec.lag - 1)
    a_trip: list[tuple[int, int, float]] = []
    b_trip: list[tuple[int, int, float]] = []
    rhs = np.zeros(n_rows)
    row = 0

    # storage balance: v_next - a + q + s = v_prev
    for k in range(K):
        a_trip += [
            (row, off["storage"] + k, 1.0),
            (row, off["inflow"] + k, -1.0),
            (row, off["hydro"] + k, 1.0),
            (row, off["spill"] + k, 1.0),
        ]
        if first:
            rhs[row] = v_init[k]
        else:
            b_trip.append((row, prev_col("storage", k), -1.0))
        row += 1

    # inflow model: a - diag(eta) * sum_nu phi_nu * a_{t-nu} = diag(eta) * phi0
    for k in range(K):
        a_trip.append((row, off["inflow"] + k, 1.0))
        rhs[row] = eta[k] * phi0[k]
        for nu in range(1, spec.lag + 1):
            coefs = eta[k] * phis[nu - 1][k, :]
            lagged_stage = t - nu
            if lagged_stage >= 1:
                # lagged inflow lives in the previous decision vector:
                # nu = 1 is its inflow block, nu > 1 its carry block
                src = "inflow" if nu == 1 else "carry"
                base = prev_col(src, (nu - 2) * K if nu > 1 else 0)
                for kk in range(K):
                    if coefs[kk] != 0.0:
                        b_trip.append((row, base + kk, -coefs[kk]))
            else:
                rhs[row] += float(coefs @ a_init[-lagged_stage, :])
        row += 1

    # load balance: q + thermal + deficit + inbound - outbound = demand
    t_off = off["thermal"]
    d_off = off["deficit"]
    for k, sub in enumerate(spec.subsystems):
        a_trip.append((row, off["hydro"] + k, 1.0))
        for _ in sub.thermal:
            a_trip.append((row, t_off, 1.0))
            t_off += 1
        for _ in sub.deficit_tiers:
            a_trip.append((row, d_off, 1.0))
            d_off += 1
        for ai, arc in enumerate(spec.arcs):
            if arc.to == k:
                a_trip.append((row, off["flow"] + ai, 1.0))
            if arc.frm == k:
                a_trip.append((row, off["flow"] + ai, -1.0))
        rhs[row] = float(sub.demand[t - 1])
        row += 1

    # carry rows: carry_nu = previous (inflow if nu == 1 else carry_{nu-1})
    for nu in range(1, spec.lag):
        for k in range(K):
            a_trip.append((row, off["carry"] + (nu - 1) * K + k, 1.0))
            if first:
                rhs[row] = a_init[nu - 1, k]
            else:
                src = off["inflow"] if nu == 1 else off["carry"] + (nu - 2) * K
                b_trip.append((row, src + k, -1.0))
            row += 1

    disc = spec.discount ** (t - 1)
    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.full(n, INF)
    for k, sub in enumerate(spec.subsystems):
        ub[off["storage"] + k] = sub.storage_cap
        ub[off["hydro"] + k] = sub.hydro_cap
    ti = off["thermal"]
    for sub in spec.subsystems:
        for plant in sub.thermal:
            c[ti] = disc * plant.cost
            lb[ti] = plant.lo
            ub[ti] = plant.hi
            ti += 1
    di = off["deficit"]
    for sub in spec.subsystems:
        for tier in sub.deficit_tiers:
            c[di] = disc * tier.cost
            ub[di] = tier.cap
            di += 1
    for ai, arc in enumerate(spec.arcs):
        lb[off["flow"] + ai] = arc.lo
        ub[off["flow"] + ai] = arc.hi
    # inflows and carries are pinned by equality rows
    lb[off["inflow"] :] = -INF

    def to_csr(trip, cols):
        if trip:
            r, ccol, v = zip(*trip)
            return sp.coo_matrix((v, (r, ccol)), shape=(n_rows, cols)).tocsr()
        return sp.csr_matrix((n_rows, cols))

    return StageRealization(
        c=c,
        a_mat=to_csr(a_trip, n),
        b=rhs,
        lb=lb,
        ub=ub,
        b_mat=None if first else to_csr(b_trip, n),
    )


def build_instance(spec: HydroSystemSpec) -> Instance:
    problems = validate_spec(spec)
    if problems:
        raise ValueError("invalid hydro spec: " + "; ".join(problems))
    T = spec.horizon
    K = spec.n_subsystems
    eta1 = (
        np.asarray(spec.first_stage_noise, dtype=float)
        if spec.first_stage_noise is not None
        else np.ones(K)
    )
    first = _stage_realization(spec, 1, eta1)
    stages = []
    for t in range(2, T + 1):
        etas = np.asarray(spec.noise[t - 2], dtype=float)
        stages.append(
            StageData(realizations=[_stage_realization(spec, t, eta) for eta in etas])
        )
    return Instance(horizon=T, first_stage=first, stages=stages)


def default_desk_spec(size: str = "tiny", seed: int = 20240811) -> HydroSystemSpec:
    """Synthetic desk-scale systems: 'tiny' (1 subsystem, T=6, N=3) and
    'small' (2 subsystems, T=12, N=10).  Seeded, hence reproducible."""
    rng = np.random.default_rng(seed)
    # hydro capacity sits below demand so thermal dispatch is always
    # priced in; inflows are scarce enough that storage policy matters
    if size == "tiny":
        T, K, N, lag, period = 6, 1, 3, 1, 12
        demand = 10.0
        caps = (8.0, 6.0)
        inflow_base, v0, a0 = 4.0, 5.0, 4.0
    elif size == "small":
        T, K, N, lag, period = 12, 2, 10, 1, 12
        demand = 14.0
        caps = (10.0, 7.0)
        inflow_base, v0, a0 = 5.0, 6.0, 5.0
    else:
        raise ValueError(f"unknown desk size {size!r}")

    subsystems = []
    for k in range(K):
        seasonal = demand * (1.0 + 0.15 * np.sin(2 * np.pi * (np.arange(T) + 3 * k) / period))
        subsystems.append(
            Subsystem(
                name=f"S{k + 1}",
                storage_cap=caps[0],
                hydro_cap=caps[1],
                demand=list(np.round(seasonal, 3)),
                thermal=[
                    ThermalPlant(cost=12.0 + 3.0 * k, hi=5.0),
                    ThermalPlant(cost=30.0 + 5.0 * k, hi=6.0),
                ],
                deficit_tiers=[
                    DeficitTier(cost=80.0, cap=3.0),
                    DeficitTier(cost=200.0, cap=INF),
                ],
            )
        )
    arcs = []
    if K == 2:
        arcs = [Arc(0, 1, 0.0, 4.0), Arc(1, 0, 0.0, 4.0)]
    phi0 = []
    phi = []
    for s in range(period):
        base = inflow_base * (1.0 + 0.25 * np.sin(2 * np.pi * s / period))
        phi0.append(np.full(K, round(base, 3)))
        phi.append([np.diag(np.full(K, 0.35))])
    noise = []
    for _ in range(T - 1):
        # heavy lower tail: occasional deep droughts carry the risk
        eta = rng.lognormal(mean=-0.25, sigma=0.8, size=(N, K))
        noise.append(np.round(np.clip(eta, 0.05, 2.5), 4))
    return HydroSystemSpec(
        horizon=T,
        subsystems=subsystems,
        arcs=arcs,
        lag=lag,
        period=period,
        phi0=phi0,
        phi=phi,
        noise=noise,
        discount=0.99,
        initial_storage=np.full(K, v0),
        initial_inflows=np.full((lag, K), a0),
        reporting_horizon=T,
    )


# --- JSON round-trip --------------------------------------------------------

def _num_out(v: float):
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _num_in(v) -> float:
    if v == "inf":
        return INF
    if v == "-inf":
        return -INF
    return float(v)


def spec_to_json(spec: HydroSystemSpec) -> dict:
    return {
        "horizon": spec.horizon,
        "lag": spec.lag,
        "period": spec.period,
        "discount": spec.discount,
        "reporting_horizon": spec.reporting_horizon,
        "subsystems": [
            {
                "name": s.name,
                "storage_cap": s.storage_cap,
                "hydro_cap": s.hydro_cap,
                "demand": list(map(float, s.demand)),
                "thermal": [{"cost": p.cost, "lo": p.lo, "hi": _num_out(p.hi)} for p in s.thermal],
                "deficit_tiers": [{"cost": d.cost, "cap": _num_out(d.cap)} for d in s.deficit_tiers],
            }
            for s in spec.subsystems
        ],
        "arcs": [{"frm": a.frm, "to": a.to, "lo": a.lo, "hi": _num_out(a.hi)} for a in spec.arcs],
        "phi0": [list(map(float, v)) for v in spec.phi0],
        "phi": [[np.asarray(m).tolist() for m in mats] for mats in spec.phi],
        "noise": [np.asarray(e).tolist() for e in spec.noise],
        "first_stage_noise": None
        if spec.first_stage_noise is None
        else list(map(float, spec.first_stage_noise)),
        "initial_storage": None
        if spec.initial_storage is None
        else list(map(float, spec.initial_storage)),
        "initial_inflows": None
        if spec.initial_inflows is None
        else np.asarray(spec.initial_inflows).tolist(),
    }


def spec_from_json(doc: dict) -> HydroSystemSpec:
    return HydroSystemSpec(
        horizon=int(doc["horizon"]),
        lag=int(doc["lag"]),
        period=int(doc["period"]),
        discount=float(doc["discount"]),
        reporting_horizon=doc.get("reporting_horizon"),
        subsystems=[
            Subsystem(
                name=s["name"],
                storage_cap=float(s["storage_cap"]),
                hydro_cap=float(s["hydro_cap"]),
                demand=[float(d) for d in s["demand"]],
                thermal=[
                    ThermalPlant(cost=float(p["cost"]), lo=float(p["lo"]), hi=_num_in(p["hi"]))
                    for p in s["thermal"]
                ],
                deficit_tiers=[
                    DeficitTier(cost=float(d["cost"]), cap=_num_in(d["cap"]))
                    for d in s["deficit_tiers"]
                ],
            )
            for s in doc["subsystems"]
        ],
        arcs=[
            Arc(frm=int(a["frm"]), to=int(a["to"]), lo=float(a["lo"]), hi=_num_in(a["hi"]))
            for a in doc["arcs"]
        ],
        phi0=[np.array(v, dtype=float) for v in doc["phi0"]],
        phi=[[np.array(m, dtype=float) for m in mats] for mats in doc["phi"]],
        noise=[np.array(e, dtype=float) for e in doc["noise"]],
        first_stage_noise=None
        if doc.get("first_stage_noise") is None
        else np.array(doc["first_stage_noise"], dtype=float),
        initial_storage=None
        if doc.get("initial_storage") is None
        else np.array(doc["initial_storage"], dtype=float),
        initial_inflows=None
        if doc.get("initial_inflows") is None
        else np.array(doc["initial_inflows"], dtype=float),
    )


def save_spec(spec: HydroSystemSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(spec_to_json(spec), f)


def load_spec(path) -> HydroSystemSpec:
    with open(path) as f:
        return spec_from_json(json.load(f))
