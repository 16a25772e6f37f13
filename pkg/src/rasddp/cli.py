"""Experiment driver: run one algorithm mode on an instance, log bounds,
extract frequencies and bad-outcome weights, simulate the final policy,
and compare simulation traces.

Modes
-----
raus      risk-averse, uniform sampling (undecayed frequency record)
rabs      risk-averse, fixed biased sampling (weights file required)
radbs     risk-averse, dynamic bias, decay m/(m+1)
radbsm1   risk-averse, dynamic bias, no decay
radbsm2   risk-averse, dynamic bias, decay 1-0.5^m
nrn       lam=0 on the reweighted instance, sampled under the new measure
raus+bs   uniform until --switch-iter, fixed bias afterwards

All CSV outputs start with a comment line carrying the run-manifest hash;
JSON outputs embed the hash as a field instead, to stay parseable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cuts import CutPool, load_pools, save_pools
from .engine import RunConfig, RunResult, _solve_stage, run
from .hydro import build_instance, default_desk_spec, load_spec, variable_names
from .model import Instance, load_instance, reweight, validate
from .risk import RiskParams
from .sampling import (
    SamplerSpec,
    finalize_bad_outcome_weights,
    load_weights,
    sample_index,
    save_weights,
)

__all__ = ["main", "run_experiment", "simulate_policy", "compare_runs"]

MODES = ("raus", "rabs", "radbs", "radbsm1", "radbsm2", "nrn", "raus+bs")

# decay keys per mode, with the display form recorded in the manifest
_MODE_DECAY = {
    "raus": ("none", "none"),
    "rabs": ("none", "none"),
    "radbs": ("m_over_m_plus_1", "m/(m+1)"),
    "radbsm1": ("none", "none"),
    "radbsm2": ("one_minus_half_pow", "1-0.5^m"),
    "nrn": ("none", "none"),
    "raus+bs": ("none", "none"),
}


def _fmt(v: float) -> str:
    return repr(float(v))


def _manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _load_problem(args) -> tuple[Instance, list[str] | None, int | None]:
    """Returns (instance, variable name map or None, reporting horizon)."""
    if args.hydro_spec is not None:
        if args.hydro_spec in ("tiny", "small"):
            spec = default_desk_spec(args.hydro_spec)
        else:
            spec = load_spec(args.hydro_spec)
        return build_instance(spec), variable_names(spec), spec.reporting_horizon
    instance = load_instance(args.instance)
    problems = validate(instance)
    if problems:
        raise SystemExit("invalid instance: " + "; ".join(problems))
    return instance, None, None


def _build_config(args, instance: Instance) -> tuple[Instance, RunConfig]:
    mode = args.mode
    decay_key, _ = _MODE_DECAY[mode]
    lam = 0.0 if mode == "nrn" else args.lam
    risk = RiskParams(lam=lam, alpha=args.alpha)
    switch = None
    switch_weights = None

    if mode in ("rabs", "nrn") and args.weights is None:
        raise SystemExit(f"mode {mode!r} requires --weights WEIGHTS_FILE")
    if mode == "raus+bs" and args.switch_iter is None:
        raise SystemExit("mode 'raus+bs' requires --switch-iter")

    if mode == "nrn":
        instance = reweight(instance, load_weights(args.weights))
        sampler = SamplerSpec(kind="uniform", decay=decay_key)
    elif mode == "rabs":
        sampler = SamplerSpec(kind="fixed", fixed_weights=load_weights(args.weights), decay=decay_key)
    elif mode in ("radbs", "radbsm1", "radbsm2"):
        sampler = SamplerSpec(kind="dynamic", decay=decay_key)
    else:  # raus, raus+bs
        sampler = SamplerSpec(kind="uniform", decay=decay_key)
        if mode == "raus+bs":
            switch = args.switch_iter
            switch_weights = load_weights(args.weights) if args.weights else None

    config = RunConfig(
        risk=risk,
        max_iterations=args.iters,
        seed=args.seed,
        sampler=sampler,
        mode=mode,
        compute_upper_bound=(mode == "nrn"),
        switch_iteration=switch,
        switch_weights=switch_weights,
    )
    return instance, config


def _write_bounds(path: Path, result: RunResult, tag: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# manifest sha256:{tag}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", "lower_bound", "upper_bound_or_empty", "cum_cost", "wall_ms"])
        for rec in result.log:
            w.writerow(
                [
                    rec.iteration,
                    _fmt(rec.lower_bound),
                    "" if rec.upper_bound is None else _fmt(rec.upper_bound),
                    _fmt(rec.cumulative_cost),
                    f"{rec.wall_ms:.3f}",
                ]
            )


def _write_freq(path: Path, result: RunResult, tag: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# manifest sha256:{tag}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "j", "W"])
        for t in sorted(result.frequencies.counts):
            for j, count in enumerate(result.frequencies.counts[t]):
                w.writerow([t, j + 1, _fmt(count)])


def simulate_policy(
    instance: Instance,
    pools: dict[int, CutPool],
    scenario_count: int,
    seed: int,
    reporting_horizon: int | None = None,
) -> list[tuple[int, int, int, float, float]]:
    """Roll the final policy over sampled scenarios.

    Returns rows (scenario id, stage, variable id, value, stage cost);
    every stage decision appears once per variable, the stage cost is
    repeated on each of its rows.  Stages beyond the reporting horizon
    are solved (they shape earlier decisions) but not reported.
    """
    T = instance.horizon
    horizon = reporting_horizon if reporting_horizon is not None else T
    rng = np.random.default_rng(seed)
    rows: list[tuple[int, int, int, float, float]] = []
    for s in range(scenario_count):
        x_prev = None
        for t in range(1, T + 1):
            if t == 1:
                r = instance.first_stage
            else:
                sd = instance.stage_data(t)
                r = sd.realizations[sample_index(sd.weights, rng)]
            sol = _solve_stage(r, x_prev, pools[t + 1] if t < T else pools[T + 1], t)
            x = sol.x[: r.n_vars]
            if t <= horizon:
                cost = float(r.c @ x)
                rows.extend((s, t, i + 1, float(x[i]), cost) for i in range(x.size))
            x_prev = x
    return rows


def _write_trace(path: Path, rows, tag: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# manifest sha256:{tag}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "stage", "variable", "value", "stage_cost"])
        for s, t, i, v, c in rows:
            w.writerow([s, t, i, _fmt(v), _fmt(c)])


def _read_trace(path) -> dict[tuple[int, int], np.ndarray]:
    """(stage, variable) -> value samples; variable 0 holds stage costs."""
    per_key: dict[tuple[int, int], list[float]] = {}
    costs_seen: dict[tuple[int, int], float] = {}
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("#"):
            f.seek(0)
        reader = csv.DictReader(f)
        if reader.fieldnames != ["scenario", "stage", "variable", "value", "stage_cost"]:
            raise ValueError(f"unexpected trace schema in {path}")
        for row in reader:
            t, i = int(row["stage"]), int(row["variable"])
            per_key.setdefault((t, i), []).append(float(row["value"]))
            costs_seen[(int(row["scenario"]), t)] = float(row["stage_cost"])
    out = {k: np.array(v) for k, v in per_key.items()}
    stages = sorted({t for _, t in costs_seen})
    for t in stages:
        out[(t, 0)] = np.array([costs_seen[(s, t)] for s, tt in sorted(costs_seen) if tt == t])
    return out


QUANTILES = (5, 25, 50, 75, 95)


def compare_runs(trace_a, trace_b) -> dict:
    """Per-stage quantile summary of two traces plus the largest absolute
    quantile difference.  Diagnostic only; no threshold is applied."""
    a = _read_trace(trace_a)
    b = _read_trace(trace_b)
    if set(a) != set(b):
        raise ValueError("trace schemas differ: stage/variable sets do not match")
    report: dict = {"quantiles": list(QUANTILES), "entries": [], "max_abs_diff": 0.0}
    for key in sorted(a):
        qa = np.percentile(a[key], QUANTILES)
        qb = np.percentile(b[key], QUANTILES)
        diff = float(np.max(np.abs(qa - qb)))
        report["entries"].append(
            {
                "stage": key[0],
                "variable": key[1],  # 0 denotes the stage cost
                "a": [float(v) for v in qa],
                "b": [float(v) for v in qb],
                "max_abs_diff": diff,
            }
        )
        report["max_abs_diff"] = max(report["max_abs_diff"], diff)
    return report


def run_experiment(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instance, names, reporting_horizon = _load_problem(args)
    instance, config = _build_config(args, instance)

    manifest = {
        "mode": args.mode,
        "instance": args.instance,
        "hydro_spec": args.hydro_spec,
        "lambda": config.risk.lam,
        "alpha": config.risk.alpha,
        "iterations": args.iters,
        "seed": args.seed,
        "switch_iteration": args.switch_iter,
        "weights": args.weights,
        "simulate": args.simulate,
        "load_cuts": args.load_cuts,
        "decay": _MODE_DECAY[args.mode][1],
        "generator": "numpy-pcg64",
        "version": __version__,
    }
    tag = _manifest_hash(manifest)
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)

    if args.load_cuts:
        dims = {t: instance.n_vars(t - 1) for t in range(2, instance.horizon + 2)}
        pools = load_pools(args.load_cuts, dims)
    else:
        pools = None

    result = run(instance, config, initial_pools=pools)

    _write_bounds(out / "bounds.csv", result, tag)
    _write_freq(out / "freq.csv", result, tag)
    if args.mode in ("raus", "raus+bs") and config.risk.lam > 0.0:
        weights = finalize_bad_outcome_weights(result.frequencies, config.risk)
        save_weights(weights, out / "weights.json")
        with open(out / "weights.json") as f:
            doc = json.load(f)
        doc["manifest_hash"] = tag
        with open(out / "weights.json", "w") as f:
            json.dump(doc, f)
    if args.save_cuts:
        save_pools(result.pools, args.save_cuts)
    if names is not None:
        with open(out / "names.json", "w") as f:
            json.dump({"manifest_hash": tag, "variables": {i + 1: n for i, n in enumerate(names)}}, f)
    if args.simulate:
        rows = simulate_policy(
            instance, result.pools, args.simulate, args.seed, reporting_horizon
        )
        _write_trace(out / "trace.csv", rows, tag)
    last = result.log[-1]
    print(f"{args.mode}: {len(result.log)} iterations, lower bound {last.lower_bound:.6f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rasddp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment mode")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="generic instance JSON")
    src.add_argument("--hydro-spec", help="hydrothermal spec JSON, or 'tiny'/'small'")
    r.add_argument("--mode", required=True, choices=MODES)
    r.add_argument("--lambda", dest="lam", type=float, default=0.0)
    r.add_argument("--alpha", type=float, default=0.05)
    r.add_argument("--iters", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--switch-iter", type=int, default=None)
    r.add_argument("--weights", default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--save-cuts", default=None)
    r.add_argument("--load-cuts", default=None)
    r.add_argument("--simulate", type=int, default=0, metavar="N")
    r.set_defaults(func=run_experiment)

    c = sub.add_parser("compare", help="quantile comparison of two trace files")
    c.add_argument("trace_a")
    c.add_argument("trace_b")
    c.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    c.set_defaults(func=_compare_cmd)
    return p


def _compare_cmd(args) -> int:
    report = compare_runs(args.trace_a, args.trace_b)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
