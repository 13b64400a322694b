"""
Mobile-edge cloud simulator CLI: scenario generation, per-user partition and
demand search, the JCC auction with critical-value pricing, oracles,
experiment sweeps, truthfulness probes, verification suites and benchmarks.

Exit codes: 0 success, 1 verification failure, 2 invalid input.
"""

import argparse
import math
import os
import sys

import pandas as pd
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError
from tqdm import tqdm

from mecsim import harness, scenario as scen, verify
from mecsim.market import PRICING_MODES, price, true_welfare
from mecsim.models import (
    ADMISSION_METHODS, OFFLOAD_METHODS, AllocationModel, CrossEntropyParams, DemandModel,
    DemandOutcome, ExperimentSpec, OracleReportModel, PartitionPlanModel, SWEEP_VARIABLES, ScenarioConfig,
)
from mecsim.offload import Demand, NoOffloadNeeded, optimal_demand
from mecsim.oracles import (
    EXACT_CAP, brute_force_partition, naive_admission, special_case_relaxed_greedy,
)

load_dotenv()

DEFAULT_SEED = int(os.getenv("MEC_SEED", "0"))
DEFAULT_WORKERS = int(os.getenv("MEC_WORKERS", "1"))
DEFAULT_PRICING = os.getenv("MEC_PRICING_MODE", "definitional")
OUT_DIR = os.getenv("MEC_OUT_DIR", ".")

ORACLE_METHODS = (*ADMISSION_METHODS, "naive", "relaxed")
PARTITION_METHODS = (*OFFLOAD_METHODS, "brute")


def _out(name):
    return os.path.join(OUT_DIR, name)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def parse_args(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="PRNG seed (env MEC_SEED)")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="Tabular output format")
    common.add_argument("--timing", action="store_true", help="Record wall-clock runtimes instead of 0.0")

    parser = argparse.ArgumentParser(description="On-demand mobile-edge cloud offloading and JCC auction simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="Generate a seeded scenario file")
    gen.add_argument("--config", help="ScenarioConfig JSON file (flags below override it)")
    gen.add_argument("--n-users", type=int)
    gen.add_argument("--n-stations", type=int)
    gen.add_argument("--n-clouds", type=int)
    gen.add_argument("--area-m", type=float)
    gen.add_argument("--with-demands", action="store_true", help="Attach each user's minimum-occupancy demand")
    gen.add_argument("--out", default=_out("scenario.json"), help="Scenario JSON output path")

    part = sub.add_parser("partition", parents=[common], help="Partition one user's task graph")
    part.add_argument("--scenario", required=True, help="Scenario JSON path")
    part.add_argument("--user", type=int, required=True)
    part.add_argument("--q", type=int, required=True, help="Subchannels")
    part.add_argument("--vm-type", type=int, default=1, help="1-based VM type")
    part.add_argument("--planner", choices=PARTITION_METHODS, default="ours")
    part.add_argument("--out", default=_out("plan.json"))

    dem = sub.add_parser("demand", parents=[common], help="Minimum-occupancy demand per user")
    dem.add_argument("--scenario", required=True)
    dem.add_argument("--user", type=int, action="append", default=[], help="User id (repeatable, default all)")
    dem.add_argument("--planner", choices=OFFLOAD_METHODS, default="ours")
    dem.add_argument("--attach", help="Write the scenario with demands attached to this path")
    dem.add_argument("--out", default=_out("demands.json"))

    auc = sub.add_parser("auction", parents=[common], help="Greedy admission with critical-value payments")
    auc.add_argument("--scenario", required=True)
    auc.add_argument("--pricing-mode", choices=PRICING_MODES, default=DEFAULT_PRICING)
    auc.add_argument("--out", default=_out("allocation.json"))

    ora = sub.add_parser("oracle", parents=[common], help="Run a reference admission solver")
    ora.add_argument("--scenario", required=True)
    ora.add_argument("--method", choices=ORACLE_METHODS, default="exact")
    ora.add_argument("--exact-cap", type=int, default=EXACT_CAP)
    ora.add_argument("--out", default=_out("oracle.json"))

    run = sub.add_parser("run", parents=[common], help="Experiment sweep over scenarios and methods")
    run.add_argument("--spec", help="ExperimentSpec JSON file (flags below are ignored when given)")
    run.add_argument("--sweep", choices=SWEEP_VARIABLES, default="n_users")
    run.add_argument("--values", type=_floats, default=[50.0, 100.0, 200.0])
    run.add_argument("--methods", type=lambda s: s.split(","), default=["greedy", "ce", "coarse", "random"])
    run.add_argument("--seeds", type=_ints, help="Comma-separated seeds (default: --seed)")
    run.add_argument("--baseline", default="auto")
    run.add_argument("--pricing-mode", choices=PRICING_MODES, default=DEFAULT_PRICING)
    run.add_argument("--workers", type=int, default=DEFAULT_WORKERS, help="Parallel sweep cells (env MEC_WORKERS)")
    run.add_argument("--out", default=_out("experiment.csv"))

    occ = sub.add_parser("occupancy", parents=[common], help="Minimum occupancy per offloading scheme")
    occ.add_argument("--scenario", required=True)
    occ.add_argument("--methods", type=lambda s: s.split(","), default=list(OFFLOAD_METHODS))
    occ.add_argument("--out", default=_out("occupancy.csv"))

    pro = sub.add_parser("probe", parents=[common], help="Truthfulness probe over a claim grid")
    pro.add_argument("--scenario", required=True)
    pro.add_argument("--users", type=_ints, help="Comma-separated user ids")
    pro.add_argument("--grid", type=_floats, help="Comma-separated claims (default 0..2v, 21 points)")
    pro.add_argument("--pricing-mode", choices=PRICING_MODES, default=DEFAULT_PRICING)
    pro.add_argument("--out", default=_out("probe.csv"))

    ver = sub.add_parser("verify", parents=[common], help="Run the acceptance suites")
    ver.add_argument("--level", choices=sorted(verify.LEVELS), default="quick")
    ver.add_argument("--suite", action="append", default=[], help="Suite name (repeatable, default all)")
    ver.add_argument("--report-out", default=_out("verify_report.txt"), help="Text report output path")
    ver.add_argument("--detail-out", default=_out("verify_detail.csv"), help="Per-suite CSV output path")

    ben = sub.add_parser("bench", parents=[common], help="Wall-clock of greedy admission vs cross entropy")
    ben.add_argument("--sizes", type=_ints, default=[100, 400, 1000, 10_000])
    ben.add_argument("--seeds", type=_ints, help="Comma-separated seeds (default: --seed)")
    ben.add_argument("--reps", type=int, default=harness.BENCH_REPS)
    ben.add_argument("--ce-max", type=int, default=harness.BENCH_CE_MAX)
    ben.add_argument("--out", default=_out("bench.csv"))

    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def write_model(model: BaseModel, path: str) -> None:
    text = model.model_dump_json(indent=2)
    if path == "-":
        print(text)
        return
    with open(path, "w", encoding="utf-8") as file:
        file.write(text)
    print(f"Saved {path}")


def write_models(models, path: str) -> None:
    text = "[\n" + ",\n".join(m.model_dump_json(indent=2) for m in models) + "\n]"
    with open(path, "w", encoding="utf-8") as file:
        file.write(text)
    print(f"Saved {len(models)} records to {path}")


def write_table(df: pd.DataFrame, path: str, fmt: str) -> None:
    if fmt == "json":
        df.to_json(path, orient="records", indent=2)
    else:
        df.to_csv(path, index=False)
    print(f"Saved {len(df)} rows to {path}")


def load_with_demands(path: str) -> scen.Scenario:
    scenario = scen.load(path)
    if not any(u.demand is not None for u in scenario.users):
        tqdm.write("  No demands in scenario file, computing them")
        scenario = scen.attach_demands(scenario, scen.compute_demands(scenario))
    return scenario


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    config = ScenarioConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as file:
            config = ScenarioConfig.model_validate_json(file.read())
    overrides = {"seed": args.seed, "n_users": args.n_users, "n_stations": args.n_stations,
                 "n_clouds": args.n_clouds, "area_m": args.area_m}
    config = ScenarioConfig.model_validate({**config.model_dump(),
                                            **{k: v for k, v in overrides.items() if v is not None}})
    scenario = scen.generate(config)
    if args.with_demands:
        scenario = scen.attach_demands(scenario, scen.compute_demands(scenario))
    scen.save(scenario, args.out)
    bidders = sum(u.demand is not None for u in scenario.users)
    print(f"Saved scenario with {len(scenario.users)} users ({bidders} bidders) to {args.out}")
    return 0


def cmd_partition(args) -> int:
    scenario = scen.load(args.scenario)
    u = scenario.user(args.user)
    link = scenario.link_template(u.id).with_subchannels(args.q)
    vm_hz = scenario.catalog.capability(args.vm_type)
    planner = brute_force_partition if args.planner == "brute" else harness.PLANNERS[args.planner]
    plan = planner(u.graph, u.device, link, vm_hz)
    write_model(PartitionPlanModel.from_plan(plan), args.out)
    print(f"User {u.id}: total delay {plan.total_delay:.6f} s, offloaded {plan.offloaded}")
    return 0


def cmd_demand(args) -> int:
    scenario = scen.load(args.scenario)
    users = args.user or [u.id for u in scenario.users]
    planner = harness.PLANNERS[args.planner]
    outcomes = {}
    records = []
    for n in tqdm(users, desc="demand"):
        u = scenario.user(n)
        out = optimal_demand(u.graph, u.device, scenario.link_template(n), scenario.catalog, planner)
        outcomes[n] = out
        if isinstance(out, Demand):
            records.append(DemandOutcome(user=n, status="demand", demand=DemandModel.from_demand(out)))
        elif isinstance(out, NoOffloadNeeded):
            records.append(DemandOutcome(user=n, status="no_offload_needed", delay_s=out.local_delay))
        else:
            best = out.best_delay if math.isfinite(out.best_delay) else None
            records.append(DemandOutcome(user=n, status="infeasible", delay_s=best))
    write_models(records, args.out)
    if args.attach:
        scen.save(scen.attach_demands(scenario, outcomes), args.attach)
        print(f"Saved {args.attach}")
    return 0


def cmd_auction(args) -> int:
    scenario = load_with_demands(args.scenario)
    demands = scen.bids(scenario)
    result = price(demands, scenario.topology, scenario.catalog, args.pricing_mode)
    model = AllocationModel(
        winners=result.winners,
        payments=result.payments,
        welfare_bid=result.welfare_bid,
        welfare_true=true_welfare(result),
        rank_order=list(result.rank_order),
        pricing_mode=result.pricing_mode,
        revenue=result.revenue,
    )
    write_model(model, args.out)
    print(f"{len(result.winners)}/{len(demands)} bidders admitted, welfare {result.welfare_bid:g}, "
          f"revenue {result.revenue:g}")
    return 0


def cmd_oracle(args) -> int:
    scenario = load_with_demands(args.scenario)
    demands = scen.bids(scenario)
    topo, catalog = scenario.topology, scenario.catalog
    if args.method == "naive":
        report = naive_admission(demands, topo, catalog)
    elif args.method == "relaxed":
        report = special_case_relaxed_greedy(demands, topo, catalog)
    else:
        report = harness.run_method(args.method, demands, topo, catalog, args.seed,
                                    CrossEntropyParams(seed=args.seed), args.exact_cap)
    model = OracleReportModel(
        method=report.method,
        welfare=report.welfare,
        winners=list(report.winners),
        runtime_s=report.runtime_s if args.timing else 0.0,
        exact=report.exact,
        fractional=report.fractional,
    )
    write_model(model, args.out)
    print(f"{report.method}: welfare {report.welfare:g} with {len(report.winners)} winners")
    return 0


def cmd_run(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as file:
            spec = ExperimentSpec.model_validate_json(file.read())
    else:
        spec = ExperimentSpec(
            sweep=args.sweep,
            values=args.values,
            methods=args.methods,
            seeds=args.seeds or [args.seed],
            baseline=args.baseline,
            pricing_mode=args.pricing_mode,
        )
    df = harness.run_experiment(spec, workers=args.workers, timing=args.timing)
    write_table(df, args.out, args.format)
    return 0


def cmd_occupancy(args) -> int:
    scenario = scen.load(args.scenario)
    table = harness.occupancy_table(scenario, args.methods)
    write_table(table, args.out, args.format)
    print(harness.occupancy_summary(table).to_string(index=False))
    return 0


def cmd_probe(args) -> int:
    scenario = load_with_demands(args.scenario)
    table = harness.probe_table(scenario, args.users, args.grid, args.pricing_mode)
    write_table(table, args.out, args.format)
    return 0


def cmd_verify(args) -> int:
    results = verify.run_suites(args.level, args.seed, args.suite or None)
    lines, detail = verify.build_report(results, args.level, args.seed)

    report_text = "\n".join(lines)
    print(report_text)

    with open(args.report_out, "w", encoding="utf-8") as file:
        file.write(report_text)
    print(f"\nSaved {args.report_out}")

    detail.to_csv(args.detail_out, index=False)
    print(f"Saved {args.detail_out}")
    return 0 if all(r.passed for r in results) else 1


def cmd_bench(args) -> int:
    table = harness.bench_table(args.sizes, args.seeds or [args.seed], args.reps, args.ce_max)
    write_table(table, args.out, args.format)
    slope = harness.growth_fit(table)
    if slope is not None:
        print(f"greedy runtime ~ (N log N)^{slope:.2f}")
    largest = table[(table["method"] == "greedy") & (table["n_users"] >= 10_000)]
    if not largest.empty:
        print(f"greedy at N>=10,000: median {largest['median_s'].median() * 1000:.1f} ms (target < 1000 ms)")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "partition": cmd_partition,
    "demand": cmd_demand,
    "auction": cmd_auction,
    "oracle": cmd_oracle,
    "run": cmd_run,
    "occupancy": cmd_occupancy,
    "probe": cmd_probe,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None):
    args = parse_args(argv)
    try:
        code = COMMANDS[args.command](args)
    except (ValidationError, ValueError, ArithmeticError, FileNotFoundError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 2
    sys.exit(code)


if __name__ == "__main__":
    main()
