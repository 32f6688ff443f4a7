"""Command line experiment runner.

Resolves an instance (from a file or a generator config), runs the
requested algorithms, audits the invariants the engine promises, and
emits a deterministic report directory:

    summary.json        resolved spec, aggregate results, invariant audit
    per_run.csv         run,seed,algorithm,objective,feasible
    trace.jsonl         per-arrival decision records (with --trace)
    plotdata/*.csv      objective-vs-n sweep, voltage profile

Exit code 0 means every audited invariant suite passed, 1 means some
failed, 2 means the invocation itself was unusable.  Reports contain no
timestamps and all randomness is seed-derived, so rerunning the same
spec reproduces summary.json byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    Instance,
    ScheduleDecision,
    feasibility_check,
    load_instance,
    validate_instance,
)
from .online import (
    a3_bound_large,
    a3_bound_small,
    fractional_pass,
    rounding_pass,
    run_online,
)
from .oracle import MAX_BRUTE_N, brute_force_opt, fcfs
from .packing import check_claims
from .voltage import (
    FeederTopology,
    VoltageLimits,
    feeder_from_dict,
    validate_voltage_solution,
)
from .workload import (
    GeneratorConfig,
    canonical_feeder,
    config_from_dict,
    gen_customers,
    gen_instance,
    place_customers,
)
from .voltage import to_cspv_instance
from ._backend import kernel_kind

ALGO_CHOICES = ("online", "fcfs", "bruteforce")
_SWEEP_FRACTIONS = (0.25, 0.5, 0.75, 1.0)


class CliError(Exception):
    """Unusable invocation or input data."""


@dataclass(frozen=True)
class ExperimentSpec:
    problem: str
    gen_path: Optional[str]
    instance_path: Optional[str]
    algos: tuple[str, ...]
    runs: int
    seed: int
    correction: str
    rl_form: str
    out: str
    trace: bool

    def __post_init__(self):
        if self.problem not in ("cspc", "cspv"):
            raise CliError(f"unknown problem: {self.problem}")
        if (self.gen_path is None) == (self.instance_path is None):
            raise CliError("exactly one of --gen / --instance is required")
        if not self.algos:
            raise CliError("need at least one algorithm")
        for a in self.algos:
            if a not in ALGO_CHOICES:
                raise CliError(f"unknown algorithm: {a}")
        if self.runs < 1:
            raise CliError("--runs must be >= 1")


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    summary: dict
    per_run_rows: list[dict]
    trace_records: list[dict]
    sweep_rows: list[dict]
    voltage_rows: list[dict]
    ok: bool


def _run_seed(master: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((master, r))


def _load_gen_config(path: str):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read generator config {path}: {exc}") from exc
    feeder = data.pop("feeder", None)
    try:
        cfg = config_from_dict(data)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if feeder is not None:
        try:
            topo, limits = feeder_from_dict(feeder)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    else:
        topo, limits = canonical_feeder()
    return cfg, topo, limits


def _resolve_instance(spec: ExperimentSpec):
    """Build (instance, context) where context carries the raw demands
    and feeder when voltage physics applies."""
    cfg = None
    topo = None
    limits = None
    raw_demands = None
    if spec.instance_path is not None:
        try:
            inst = load_instance(spec.instance_path)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load instance: {exc}") from exc
    else:
        cfg, topo, limits = _load_gen_config(spec.gen_path)
        if spec.problem == "cspc":
            inst = gen_instance(cfg)
        else:
            raw_demands = gen_customers(cfg)
            topo = place_customers(raw_demands, topo, cfg.seed)
            try:
                inst = to_cspv_instance(raw_demands, topo, limits, cfg.m)
            except ValueError as exc:
                raise CliError(str(exc)) from exc
    rep = validate_instance(inst)
    if not rep.ok:
        raise CliError("instance fails validation: " + "; ".join(rep.violations))
    return inst, cfg, topo, limits, raw_demands


def _online_stats(inst: Instance, spec: ExperimentSpec, runs: int):
    """Monte-Carlo over rounding seeds on a cached fractional pass."""
    fp = fractional_pass(inst, rl_form=spec.rl_form)
    objs = np.empty(runs)
    feas = np.empty(runs, dtype=bool)
    decisions = []
    for r in range(runs):
        rr = rounding_pass(inst, fp, _run_seed(spec.seed, r), correction=spec.correction)
        objs[r] = rr.objective
        decision = ScheduleDecision.make(rr.x.tolist(), inst)
        feas[r] = feasibility_check(decision, inst)
        decisions.append(decision)
    return fp, objs, feas, decisions


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    inst, cfg, topo, limits, raw_demands = _resolve_instance(spec)

    if "bruteforce" in spec.algos and inst.n > MAX_BRUTE_N:
        raise CliError(
            f"bruteforce refused: n = {inst.n} exceeds {MAX_BRUTE_N}")

    results: dict = {}
    per_run_rows: list[dict] = []
    trace_records: list[dict] = []
    invariants: dict = {}
    ok = True

    opt_value = None
    decisions_by_algo: dict[str, ScheduleDecision] = {}

    if "bruteforce" in spec.algos:
        res = brute_force_opt(inst)
        opt_value = res.objective
        decisions_by_algo["bruteforce"] = res.decision
        results["bruteforce"] = {
            "objective": res.objective,
            "explored": res.explored,
            "feasible": feasibility_check(res.decision, inst),
        }

    if "fcfs" in spec.algos:
        dec = fcfs(inst)
        decisions_by_algo["fcfs"] = dec
        entry = {
            "objective": dec.objective,
            "feasible": feasibility_check(dec, inst),
        }
        if opt_value is not None:
            entry["ratio"] = 1.0 if opt_value <= 0.0 else dec.objective / opt_value
        results["fcfs"] = entry

    fp = None
    if "online" in spec.algos:
        fp, objs, feas, decisions = _online_stats(inst, spec, spec.runs)
        decisions_by_algo["online"] = decisions[0]
        mean = float(objs.mean())
        se = float(objs.std(ddof=1) / math.sqrt(spec.runs)) if spec.runs > 1 else 0.0
        entry = {
            "mean_objective": mean,
            "std_error": se,
            "min_objective": float(objs.min()),
            "max_objective": float(objs.max()),
            "clamped": fp.clamped_small + fp.clamped_large,
            "all_feasible": bool(feas.all()),
        }
        if opt_value is not None:
            if opt_value <= 0.0:
                entry["mean_ratio"] = 1.0
            else:
                entry["mean_ratio"] = mean / opt_value
        results["online"] = entry

        invariants["feasibility"] = {
            "checked": int(spec.runs),
            "violations": int((~feas).sum()),
            "ok": bool(feas.all()),
        }
        small = check_claims(fp.small_state, r_hat=a3_bound_small(inst.bounds))
        large = check_claims(fp.large_state, r_hat=a3_bound_large(inst.bounds))
        invariants["pd_claims"] = {
            "small": {"duality": small.duality_ok, "coverage": small.coverage_ok,
                      "load": small.load_ok},
            "large": {"duality": large.duality_ok, "coverage": large.coverage_ok,
                      "load": large.load_ok},
            "ok": small.all_ok and large.all_ok,
        }
        if opt_value is not None:
            bound = 0.5 * math.cos(inst.bounds.theta / 2.0) * min(
                0.0035 / fp.r_small, 0.0139 / fp.r_large)
            if opt_value <= 0.0:
                invariants["competitive_bound"] = {"ok": True, "reason": "OPT = 0"}
            else:
                mean_ratio = mean / opt_value
                se_ratio = se / opt_value
                invariants["competitive_bound"] = {
                    "bound": bound,
                    "mean_ratio": mean_ratio,
                    "margin": mean_ratio - (bound - 3.0 * se_ratio),
                    "ok": mean_ratio >= bound - 3.0 * se_ratio,
                }

        if spec.trace:
            first = run_online(inst, _run_seed(spec.seed, 0),
                               correction=spec.correction, rl_form=spec.rl_form)
            trace_records = [rec.to_dict() for rec in first.trace]

        for r in range(spec.runs):
            per_run_rows.append({
                "run": r, "seed": f"{spec.seed}:{r}", "algorithm": "online",
                "objective": float(objs[r]), "feasible": int(feas[r]),
            })

    for algo in ("fcfs", "bruteforce"):
        if algo in spec.algos:
            dec = decisions_by_algo[algo]
            f = int(feasibility_check(dec, inst))
            for r in range(spec.runs):
                per_run_rows.append({
                    "run": r, "seed": str(spec.seed), "algorithm": algo,
                    "objective": dec.objective, "feasible": f,
                })

    # Deterministic baselines must also be feasible.
    for algo, dec in decisions_by_algo.items():
        if algo == "online":
            continue
        if not feasibility_check(dec, inst):
            invariants.setdefault("feasibility", {"checked": 0, "violations": 0, "ok": True})
            invariants["feasibility"]["violations"] += 1
            invariants["feasibility"]["ok"] = False

    voltage_rows: list[dict] = []
    if spec.problem == "cspv":
        if raw_demands is None:
            invariants["voltage"] = {
                "ok": None,
                "reason": "instance file carries no feeder data; physics audit skipped",
            }
        else:
            volt = {"algorithms": {}, "ok": True}
            for algo, dec in decisions_by_algo.items():
                rep = validate_voltage_solution(dec, raw_demands, topo, limits,
                                                horizon=inst.m)
                v0 = limits.v0
                volt["algorithms"][algo] = {
                    "linear_ok": rep.linear_ok,
                    "nonlinear_ok": rep.nonlinear_ok,
                    "gap_max": rep.gap_max,
                    "iterations_max": rep.iterations_max,
                }
                if not rep.linear_ok:
                    volt["ok"] = False
                for node in range(topo.n_nodes):
                    voltage_rows.append({
                        "node": node,
                        "algorithm": algo,
                        "v_pu_min": math.sqrt(rep.v_min_nonlinear[node] / v0),
                        "v_pu_min_linear": math.sqrt(rep.v_min_linear[node] / v0),
                    })
            invariants["voltage"] = volt

    sweep_rows: list[dict] = []
    if cfg is not None and spec.problem == "cspc" and cfg.n > 0:
        sweep_rows = _objective_sweep(cfg, spec)

    for suite in invariants.values():
        if isinstance(suite, dict) and suite.get("ok") is False:
            ok = False

    summary = {
        "schema": 1,
        "kernel": kernel_kind(),
        "spec": {
            "problem": spec.problem,
            "source": spec.instance_path or spec.gen_path,
            "algos": list(spec.algos),
            "runs": spec.runs,
            "seed": spec.seed,
            "correction": spec.correction,
            "rl_form": spec.rl_form,
        },
        "instance": {
            "n": inst.n,
            "m": inst.m,
            "bounds": {
                "a_min": inst.bounds.a_min, "a_max": inst.bounds.a_max,
                "u_min": inst.bounds.u_min, "u_max": inst.bounds.u_max,
                "t_max": inst.bounds.T_max, "theta": inst.bounds.theta,
            },
        },
        "results": results,
        "invariants": invariants,
        "ok": ok,
    }
    return ExperimentReport(
        spec=spec, summary=summary, per_run_rows=per_run_rows,
        trace_records=trace_records, sweep_rows=sweep_rows,
        voltage_rows=voltage_rows, ok=ok)


def _objective_sweep(cfg: GeneratorConfig, spec: ExperimentSpec) -> list[dict]:
    """Mean online objective and baselines across instance sizes."""
    sizes = sorted({max(1, int(round(cfg.n * f))) for f in _SWEEP_FRACTIONS})
    runs = min(spec.runs, 200)
    rows = []
    for n in sizes:
        sub = replace(cfg, n=n)
        inst = gen_instance(sub)
        fp = fractional_pass(inst, rl_form=spec.rl_form)
        objs = np.empty(runs)
        for r in range(runs):
            objs[r] = rounding_pass(inst, fp, _run_seed(spec.seed, r),
                                    correction=spec.correction).objective
        se = float(objs.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
        rows.append({"n": n, "algorithm": "online",
                     "mean_objective": float(objs.mean()), "std_error": se})
        if "fcfs" in spec.algos:
            rows.append({"n": n, "algorithm": "fcfs",
                         "mean_objective": fcfs(inst).objective, "std_error": 0.0})
        if "bruteforce" in spec.algos and n <= MAX_BRUTE_N:
            rows.append({"n": n, "algorithm": "bruteforce",
                         "mean_objective": brute_force_opt(inst).objective,
                         "std_error": 0.0})
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fieldnames])


def emit_report(report: ExperimentReport, outdir) -> dict:
    """Write the report files; returns {name: path}. Deterministic for a
    given report (sorted keys, fixed float format, no timestamps)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    plotdir = outdir / "plotdata"
    plotdir.mkdir(exist_ok=True)
    paths = {}

    summary_path = outdir / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = summary_path

    per_run_path = outdir / "per_run.csv"
    _write_csv(per_run_path, ["run", "seed", "algorithm", "objective", "feasible"],
               report.per_run_rows)
    paths["per_run"] = per_run_path

    if report.spec.trace:
        trace_path = outdir / "trace.jsonl"
        with open(trace_path, "w") as fh:
            for rec in report.trace_records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        paths["trace"] = trace_path

    sweep_path = plotdir / "objective_vs_n.csv"
    _write_csv(sweep_path, ["n", "algorithm", "mean_objective", "std_error"],
               report.sweep_rows)
    paths["objective_vs_n"] = sweep_path

    volt_path = plotdir / "voltage_profile.csv"
    _write_csv(volt_path, ["node", "algorithm", "v_pu_min", "v_pu_min_linear"],
               report.voltage_rows)
    paths["voltage_profile"] = volt_path
    return paths


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gridsched",
        description="Run online demand-scheduling experiments and audits.")
    p.add_argument("--problem", choices=["cspc", "cspv"], default="cspc")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gen", metavar="CFG.json",
                     help="generator config JSON (optionally with a 'feeder' section)")
    src.add_argument("--instance", metavar="INST.json", help="instance JSON file")
    p.add_argument("--algos", default="online,fcfs",
                   help="comma list from: online,fcfs,bruteforce")
    p.add_argument("--runs", type=int, default=100,
                   help="online rounding seeds (default 100)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--correction", choices=["exact", "strict"], default="exact")
    p.add_argument("--rl-form", choices=["appendix", "printed"], default="appendix",
                   dest="rl_form")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trace", action="store_true",
                   help="write per-arrival decision trace for the first run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExperimentSpec(
            problem=args.problem,
            gen_path=args.gen,
            instance_path=args.instance,
            algos=tuple(a.strip() for a in args.algos.split(",") if a.strip()),
            runs=args.runs,
            seed=args.seed,
            correction=args.correction,
            rl_form=args.rl_form,
            out=args.out,
            trace=args.trace,
        )
        report = run_experiment(spec)
        emit_report(report, spec.out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
