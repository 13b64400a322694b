"""
Experiment sweeps behind the CLI: welfare comparison across admission
methods, per-user minimum occupancy across offloading schemes, truthfulness
probes and runtime benchmarks. Every table is a pandas DataFrame in a
canonical row order.

Entry point: run_experiment(spec, workers, timing) -> pd.DataFrame
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from mecsim.market import DemandProfile, Topology, admit, occupancy, price, truthfulness_probe
from mecsim.models import (
    OFFLOAD_METHODS, CrossEntropyParams, ExperimentRow, ExperimentSpec,
)
from mecsim.offload import Demand, Infeasible, NoOffloadNeeded, Planner, VmCatalog, partition
from mecsim.oracles import (
    OracleReport, baseline_all_offload, baseline_coarse_greedy,
    baseline_odessa_greedy, baseline_random, cross_entropy_admission, exact_admission,
    greedy_admission,
)
from mecsim.scenario import Scenario, attach_demands, bids, compute_demands, generate, random_auction

PLANNERS: dict[str, Planner] = {
    "ours": partition,
    "all_offload": baseline_all_offload,
    "odessa": baseline_odessa_greedy,
}

PROBE_VALUES = (8.0, 16.0)
PROBE_POINTS = 21
BENCH_REPS = 5
BENCH_CE_MAX = 400


# ---------------------------------------------------------------------------
# Welfare sweep
# ---------------------------------------------------------------------------

def run_method(
    method: str,
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    seed: int,
    ce: CrossEntropyParams,
    exact_cap: int,
) -> OracleReport:
    if method == "greedy":
        return greedy_admission(demands, topo, catalog)
    if method == "exact":
        return exact_admission(demands, topo, catalog, cap=exact_cap)
    if method == "ce":
        return cross_entropy_admission(demands, topo, catalog, ce.model_copy(update={"seed": seed}))
    if method == "coarse":
        return baseline_coarse_greedy(demands, topo, catalog)
    if method == "random":
        return baseline_random(demands, topo, catalog, seed)
    raise ValueError(f"unknown admission method {method!r}")


def _max_users_per_cloud(demands: Sequence[DemandProfile], topo: Topology) -> int:
    counts: dict[int, int] = {}
    for d in demands:
        l = topo.cloud_of(d.user)
        counts[l] = counts.get(l, 0) + 1
    return max(counts.values(), default=0)


def sweep_scenario(spec: ExperimentSpec, value: float, seed: int) -> tuple[Scenario, dict[int, float]]:
    """Scenario for one sweep cell plus any claim overrides."""
    update: dict = {"seed": seed}
    if spec.sweep == "n_users":
        update["n_users"] = int(value)
    elif spec.sweep == "n_clouds":
        update["n_clouds"] = int(value)
    scenario = generate(spec.config.model_copy(update=update))
    scenario = attach_demands(scenario, compute_demands(scenario))
    claims: dict[int, float] = {}
    if spec.sweep == "claimed_value":
        bidders = [u.id for u in scenario.users if u.demand is not None]
        if bidders:
            claims[bidders[0]] = float(value)
    return scenario, claims


def run_cell(spec: ExperimentSpec, value: float, seed: int, timing: bool = False) -> list[dict]:
    scenario, claims = sweep_scenario(spec, value, seed)
    demands = bids(scenario, claims)
    topo, catalog = scenario.topology, scenario.catalog
    true_values = {d.user: d.true_value for d in demands}
    phi = {d.user: occupancy(d, topo, catalog) for d in demands}

    baseline = spec.baseline
    if baseline == "auto":
        baseline = "exact" if _max_users_per_cloud(demands, topo) <= spec.exact_cap else "ce"

    reports = {m: run_method(m, demands, topo, catalog, seed, spec.ce, spec.exact_cap)
               for m in dict.fromkeys([*spec.methods, baseline])}
    base_welfare = reports[baseline].welfare

    rows = []
    for method in spec.methods:
        report = reports[method]
        revenue = 0.0
        if method == "greedy":
            revenue = price(demands, topo, catalog, spec.pricing_mode).revenue
        rows.append(ExperimentRow(
            sweep=spec.sweep,
            value=value,
            method=method,
            seed=seed,
            n_bidders=len(demands),
            welfare_bid=report.welfare,
            welfare_true=sum(true_values[n] for n in report.winners),
            normalized_welfare=report.welfare / base_welfare if base_welfare > 0 else 1.0,
            baseline=baseline,
            occupancy=sum(phi[n] for n in report.winners),
            revenue=revenue,
            runtime_s=report.runtime_s if timing else 0.0,
        ).model_dump())
    return rows


def _failure_rows(spec: ExperimentSpec, value: float, seed: int, exc: Exception) -> list[dict]:
    return [ExperimentRow(
        sweep=spec.sweep, value=value, method=method, seed=seed, n_bidders=0,
        welfare_bid=math.nan, welfare_true=math.nan, normalized_welfare=math.nan,
        baseline=spec.baseline, occupancy=math.nan, revenue=math.nan, runtime_s=0.0,
        status=f"failed: {type(exc).__name__}: {exc}",
    ).model_dump() for method in spec.methods]


def _run_cell_safe(args: tuple[ExperimentSpec, float, int, bool]) -> list[dict]:
    spec, value, seed, timing = args
    try:
        return run_cell(spec, value, seed, timing)
    except (ValueError, ArithmeticError) as exc:
        return _failure_rows(spec, value, seed, exc)


def run_experiment(spec: ExperimentSpec, workers: int = 1, timing: bool = False) -> pd.DataFrame:
    cells = [(spec, float(v), int(s), timing) for v in spec.values for s in spec.seeds]
    rows: list[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_rows in tqdm(pool.map(_run_cell_safe, cells), total=len(cells), desc="cells"):
                rows.extend(cell_rows)
    else:
        for cell in tqdm(cells, desc="cells"):
            rows.extend(_run_cell_safe(cell))

    failed = sum(1 for r in rows if r["status"] != "ok")
    if failed:
        tqdm.write(f"  {failed} row(s) marked failed")
    df = pd.DataFrame(rows, columns=list(ExperimentRow.model_fields))
    return df.sort_values(["value", "method", "seed"], kind="stable").reset_index(drop=True)


# ---------------------------------------------------------------------------
# Occupancy per offloading scheme
# ---------------------------------------------------------------------------

def occupancy_table(scenario: Scenario, methods: Sequence[str] = OFFLOAD_METHODS) -> pd.DataFrame:
    """
    Minimum feasible occupancy per user under each offloading scheme,
    normalized by the all-offload occupancy of the same user.
    """
    unknown = [m for m in methods if m not in PLANNERS]
    if unknown:
        raise ValueError(f"unknown offloading methods {unknown}, expected a subset of {OFFLOAD_METHODS}")
    outcomes = {m: compute_demands(scenario, PLANNERS[m]) for m in dict.fromkeys([*methods, "all_offload"])}

    rows = []
    for u in scenario.users:
        base = outcomes["all_offload"][u.id]
        for method in methods:
            out = outcomes[method][u.id]
            row = {"user": u.id, "template": u.template, "deadline_s": u.device.deadline_s,
                   "method": method, "status": _status(out), "q": None, "s": None,
                   "phi": math.nan, "normalized": math.nan}
            if isinstance(out, Demand):
                row.update(q=out.q, s=out.s, phi=out.phi)
                if isinstance(base, Demand):
                    row["normalized"] = out.phi / base.phi
            rows.append(row)
    return pd.DataFrame(rows)


def _status(outcome: Demand | NoOffloadNeeded | Infeasible) -> str:
    if isinstance(outcome, Demand):
        return "demand"
    if isinstance(outcome, NoOffloadNeeded):
        return "no_offload_needed"
    return "infeasible"


def occupancy_summary(table: pd.DataFrame) -> pd.DataFrame:
    """Mean phi and normalized occupancy per method; infeasible users excluded."""
    ok = table[table["status"] == "demand"]
    summary = ok.groupby("method", sort=True).agg(
        users=("user", "count"),
        mean_phi=("phi", "mean"),
        mean_normalized=("normalized", "mean"),
    )
    infeasible = table[table["status"] == "infeasible"].groupby("method").size()
    summary["infeasible"] = infeasible.reindex(summary.index, fill_value=0)
    return summary.reset_index()


def paired_occupancy(table: pd.DataFrame, method: str, reference: str) -> tuple[int, float, float]:
    """Mean phi of two methods over the users both give a demand (per scenario when tagged)."""
    keys = [c for c in ("scenario", "user") if c in table.columns]
    ok = table[table["status"] == "demand"]
    wide = ok.pivot_table(index=keys, columns="method", values="phi", aggfunc="first")
    if method not in wide or reference not in wide:
        return 0, math.nan, math.nan
    both = wide[[method, reference]].dropna()
    return len(both), float(both[method].mean()), float(both[reference].mean())


# ---------------------------------------------------------------------------
# Truthfulness probe
# ---------------------------------------------------------------------------

def default_probe_users(scenario: Scenario) -> list[int]:
    """First bidders valuing 8 and 16; otherwise the first two bidders."""
    bidders = [u for u in scenario.users if u.demand is not None]
    chosen = []
    for v in PROBE_VALUES:
        match = next((u.id for u in bidders if u.true_value == v and u.id not in chosen), None)
        if match is not None:
            chosen.append(match)
    if len(chosen) < len(PROBE_VALUES):
        chosen = [u.id for u in bidders[:len(PROBE_VALUES)]]
    return chosen


def probe_grid(true_value: float, points: int = PROBE_POINTS) -> list[float]:
    return [float(x) for x in np.linspace(0.0, 2.0 * true_value, points)]


def probe_table(
    scenario: Scenario,
    users: Sequence[int] | None = None,
    grid: Sequence[float] | None = None,
    mode: str = "definitional",
) -> pd.DataFrame:
    demands = bids(scenario)
    users = list(users) if users else default_probe_users(scenario)
    rows = []
    for n in tqdm(users, desc="probe"):
        v = scenario.user(n).true_value
        for row in truthfulness_probe(demands, scenario.topology, scenario.catalog, n,
                                      grid if grid is not None else probe_grid(v), mode):
            rows.append({**asdict(row), "truthful": math.isclose(row.claimed, v)})
    return pd.DataFrame(rows, columns=["user", "true_value", "claimed", "win", "payment", "utility", "truthful"])


# ---------------------------------------------------------------------------
# Runtime benchmark
# ---------------------------------------------------------------------------

def _median_runtime(fn: Callable[[], object], reps: int) -> float:
    samples = []
    for _ in range(reps):
        started = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - started)
    return float(np.median(samples))


def bench_table(
    sizes: Sequence[int],
    seeds: Sequence[int] = (0,),
    reps: int = BENCH_REPS,
    ce_max: int = BENCH_CE_MAX,
    ce: CrossEntropyParams | None = None,
) -> pd.DataFrame:
    """Median wall clock of admit and (up to ce_max users) CE per size and seed."""
    ce = ce or CrossEntropyParams()
    rows = []
    for n in tqdm(sizes, desc="bench"):
        n_stations = max(1, n // 25)
        for seed in seeds:
            demands, topo, catalog = random_auction(seed, n_users=n, n_stations=n_stations,
                                                    n_clouds=max(1, n_stations // 4))
            rows.append({"n_users": n, "seed": seed, "method": "greedy",
                         "median_s": _median_runtime(lambda: admit(demands, topo, catalog), reps)})
            if n <= ce_max:
                params = ce.model_copy(update={"seed": seed})
                rows.append({"n_users": n, "seed": seed, "method": "ce",
                             "median_s": _median_runtime(
                                 lambda: cross_entropy_admission(demands, topo, catalog, params), reps)})
    return pd.DataFrame(rows, columns=["n_users", "seed", "method", "median_s"])


def growth_fit(bench: pd.DataFrame, method: str = "greedy") -> float | None:
    """Slope of log(runtime) against log(N log N); close to 1 for N log N growth."""
    rows = bench[(bench["method"] == method) & (bench["n_users"] > 1) & (bench["median_s"] > 0)]
    per_size = rows.groupby("n_users")["median_s"].median()
    if len(per_size) < 2:
        return None
    n = per_size.index.to_numpy(dtype=float)
    slope, _ = np.polyfit(np.log(n * np.log(n)), np.log(per_size.to_numpy()), 1)
    return float(slope)
