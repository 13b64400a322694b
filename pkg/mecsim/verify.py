"""
Acceptance suites: seeded property sweeps comparing the mechanism against
its oracles. Each suite returns a SuiteResult; build_report turns a run into
the text report and detail table written by `run_mec.py verify`.

Entry point: run_suites(level) -> list[SuiteResult]
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from mecsim.harness import occupancy_table, paired_occupancy, probe_grid, run_experiment
from mecsim.market import (
    DemandProfile, Topology, admit, critical_payments, price, ratio_bound,
    truthfulness_probe,
)
from mecsim.models import ExperimentSpec, ScenarioConfig, TaskGraphModel, deadline_out
from mecsim.offload import (
    DeviceProfile, LinkConfig, VmCatalog, all_device, all_offload, evaluate_placement,
    optimal_demand, partition,
)
from mecsim.oracles import (
    brute_force_partition, exact_admission, exhaustive_demand, naive_admission,
    special_case_relaxed_greedy,
)
from mecsim.scenario import dumps, generate, random_auction
from mecsim.taskgraph import TaskGraph, chain, topo_sort
from mecsim.templates import layered_random

LEVELS: dict[str, dict[str, int]] = {
    "quick": {
        "topo": 50, "chains": 40, "dags": 50, "demand": 50, "ratio": 100, "uniform": 50,
        "truthful": 5, "probed": 2, "monotone": 50, "threshold": 20, "modes": 50,
        "crosscheck": 30, "occupancy": 1, "determinism": 1, "perf": 0, "trends": 0,
    },
    "full": {
        "topo": 500, "chains": 200, "dags": 500, "demand": 500, "ratio": 1000, "uniform": 500,
        "truthful": 50, "probed": 5, "monotone": 500, "threshold": 200, "modes": 500,
        "crosscheck": 300, "occupancy": 5, "determinism": 3, "perf": 1, "trends": 20,
    },
}

TOL = 1e-9
MAX_FAILURES_SHOWN = 5


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    hard: bool = True

    @property
    def passed(self) -> bool:
        return not self.hard or not self.failures


def instance_json(demands: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog) -> str:
    return json.dumps({
        "demands": [asdict(d) for d in demands],
        "stations": [asdict(s) for s in topo.stations],
        "clouds": [asdict(c) for c in topo.clouds],
        "associations": {str(n): list(kl) for n, kl in topo.associations.items()},
        "vm_hz": list(catalog.capabilities),
    }, sort_keys=True)


def graph_json(graph: TaskGraph, dev: DeviceProfile | None = None, link: LinkConfig | None = None,
               vm_hz: float | None = None) -> str:
    data = {"graph": TaskGraphModel.from_graph(graph).model_dump(mode="json")}
    if dev is not None:
        data["device"] = {k: deadline_out(v) if k == "deadline_s" else v for k, v in asdict(dev).items()}
    if link is not None:
        data["link"] = asdict(link)
    if vm_hz is not None:
        data["vm_hz"] = vm_hz
    return json.dumps(data, sort_keys=True)


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------

def random_device(rng: np.random.Generator, deadline_s: float = math.inf) -> DeviceProfile:
    distance = float(rng.uniform(50.0, 500.0))
    return DeviceProfile(
        cpu_hz=float(rng.choice([0.5e9, 0.8e9, 1.0e9])),
        tx_power_w=0.1,
        channel_gain=distance ** -4.0,
        noise_w=1e-13,
        deadline_s=deadline_s,
    )


def random_link(rng: np.random.Generator) -> LinkConfig:
    return LinkConfig(subchannels=int(rng.integers(1, 16)), bandwidth_hz=1e6, station_subchannels=15,
                      cloud_capacity_hz=float(rng.choice([50e9, 100e9, 200e9])))


def random_chain(rng: np.random.Generator, max_len: int = 10) -> TaskGraph:
    n = int(rng.integers(1, max_len + 1))
    return chain([float(c) for c in rng.uniform(0.0, 1e9, n)],
                 [float(b) for b in rng.uniform(0.0, 3e6, n - 1)])


def random_dag(rng: np.random.Generator) -> TaskGraph:
    params = {"layers": int(rng.integers(2, 5)), "width": int(rng.integers(1, 4)),
              "edge_prob": float(rng.uniform(0.1, 0.9)), "bits_range": (0.0, 3e6)}
    return layered_random(params, int(rng.integers(0, 2**31 - 1)))


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

def suite_topo(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("taskgraph: topological order and round trip")
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        graph = random_dag(rng)
        order = topo_sort(graph)
        pos = {n: k for k, n in enumerate(order)}
        result.checked += 1
        if sorted(order) != graph.ids or order[-1] != graph.output:
            result.failures.append(f"seed={seed + i}: order {order} is not a permutation ending at the output "
                                   f"input={graph_json(graph)}")
        elif any(pos[e.src] >= pos[e.dst] for e in graph.edges):
            result.failures.append(f"seed={seed + i}: edge order violated in {order} input={graph_json(graph)}")
        elif TaskGraphModel.from_graph(graph).to_graph() != graph:
            result.failures.append(f"seed={seed + i}: serialization round trip changed the graph "
                                   f"input={graph_json(graph)}")
    return result


def suite_partition_chains(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("offload: partition equals brute force on chains")
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        graph = random_chain(rng)
        dev, link = random_device(rng), random_link(rng)
        vm = float(rng.choice([5e9, 10e9, 20e9]))
        ours = partition(graph, dev, link, vm).total_delay
        best = brute_force_partition(graph, dev, link, vm).total_delay
        result.checked += 1
        if not math.isclose(ours, best, rel_tol=1e-12, abs_tol=1e-15):
            result.failures.append(f"seed={seed + i}: partition {ours!r} != brute force {best!r} "
                                   f"input={graph_json(graph, dev, link, vm)}")
    return result


def suite_partition_dags(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("offload: partition bounds on random DAGs")
    gaps = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        graph = random_dag(rng)
        dev, link = random_device(rng), random_link(rng)
        vm = float(rng.choice([5e9, 10e9, 20e9]))
        ours = partition(graph, dev, link, vm).total_delay
        best = brute_force_partition(graph, dev, link, vm).total_delay
        local = evaluate_placement(graph, all_device(graph), dev, link, vm).total_delay
        remote = evaluate_placement(graph, all_offload(graph), dev, link, vm).total_delay
        result.checked += 1
        gaps.append(ours / best - 1.0 if best > 0 else 0.0)
        if ours < best * (1 - 1e-12):
            result.failures.append(f"seed={seed + i}: partition {ours!r} below brute force {best!r} "
                                   f"input={graph_json(graph, dev, link, vm)}")
        if ours > min(local, remote) * (1 + 1e-12):
            result.failures.append(f"seed={seed + i}: partition {ours!r} worse than a uniform plan "
                                   f"input={graph_json(graph, dev, link, vm)}")
    if gaps:
        result.notes.append(f"gap to brute force: max {max(gaps):.3e}, "
                            f"exact on {sum(g <= 1e-12 for g in gaps)}/{len(gaps)}")
    return result


def suite_demand(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("offload: demand search equals exhaustive sweep")
    catalog = VmCatalog((5e9, 10e9, 20e9))
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        graph = random_chain(rng) if rng.random() < 0.5 else random_dag(rng)
        dev = random_device(rng, deadline_s=float(rng.choice([0.3, 0.5, 1.0, 2.0, 5.0])))
        link = random_link(rng).with_subchannels(0)
        ours = optimal_demand(graph, dev, link, catalog)
        oracle = exhaustive_demand(graph, dev, link, catalog)
        result.checked += 1
        if ours != oracle:
            result.failures.append(f"seed={seed + i}: optimal_demand {ours} != sweep {oracle} "
                                   f"input={graph_json(graph, dev, link)} vm_hz={list(catalog.capabilities)}")
    return result


def suite_ratio(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: greedy welfare >= ratio bound x optimum")
    worst = math.inf
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        n_clouds = int(rng.integers(1, 3))
        demands, topo, catalog = random_auction(
            seed + i, n_users=int(rng.integers(1, 17)), n_stations=int(rng.integers(n_clouds, 4)),
            n_clouds=n_clouds)
        greedy = admit(demands, topo, catalog)
        exact = exact_admission(demands, topo, catalog)
        rho = ratio_bound(topo, catalog)
        result.checked += 1
        if exact.welfare > 0:
            worst = min(worst, greedy.welfare_bid / exact.welfare)
        if greedy.welfare_bid < rho * exact.welfare - TOL:
            result.failures.append(f"seed={seed + i}: W_greedy={greedy.welfare_bid} < {rho:.6f} x "
                                   f"{exact.welfare} input={instance_json(demands, topo, catalog)}")
        _check_payments(result, seed + i, price(demands, topo, catalog), topo, catalog)
    if math.isfinite(worst):
        result.notes.append(f"worst observed W_greedy / W_exact = {worst:.4f}")
    return result


def suite_uniform(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: uniform case half ratio and relaxation sandwich")
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        demands, topo, catalog = random_auction(
            seed + i, n_users=int(rng.integers(1, 17)), n_stations=int(rng.integers(1, 4)), uniform=True)
        greedy = admit(demands, topo, catalog).welfare_bid
        exact = exact_admission(demands, topo, catalog).welfare
        relaxed = special_case_relaxed_greedy(demands, topo, catalog).welfare
        result.checked += 1
        if greedy < 0.5 * exact - TOL:
            result.failures.append(f"seed={seed + i}: W_greedy={greedy} < W_exact/2={exact / 2} "
                                   f"input={instance_json(demands, topo, catalog)}")
        if not exact <= relaxed + 1e-6 or not relaxed <= 2 * greedy + 1e-6:
            result.failures.append(f"seed={seed + i}: sandwich broken greedy={greedy} exact={exact} "
                                   f"relaxed={relaxed} input={instance_json(demands, topo, catalog)}")
    return result


def _check_payments(result: SuiteResult, seed: int, priced, topo: Topology, catalog: VmCatalog) -> None:
    demands = {d.user: d for d in priced.demands}
    where = f"input={instance_json(priced.demands, topo, catalog)}"
    for n, pay in priced.payments.items():
        if priced.x[n] and not -TOL <= pay <= demands[n].claimed + TOL:
            result.failures.append(f"seed={seed}: winner {n} pays {pay} outside [0, {demands[n].claimed}] {where}")
        if not priced.x[n] and pay != 0.0:
            result.failures.append(f"seed={seed}: loser {n} pays {pay} {where}")


def suite_truthful(count: int, probed: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: no gain from misreporting")
    for i in range(count):
        demands, topo, catalog = random_auction(seed + i, n_users=16, n_stations=3, n_clouds=1)
        _check_payments(result, seed + i, price(demands, topo, catalog), topo, catalog)
        for d in demands[:probed]:
            rows = truthfulness_probe(demands, topo, catalog, d.user, probe_grid(d.true_value))
            truthful = truthfulness_probe(demands, topo, catalog, d.user, [d.true_value])[0].utility
            result.checked += len(rows)
            for row in rows:
                if row.utility > truthful + TOL:
                    result.failures.append(f"seed={seed + i} user={d.user}: claiming {row.claimed} "
                                           f"gives {row.utility} > truthful {truthful} "
                                           f"input={instance_json(demands, topo, catalog)}")
    return result


def suite_monotone(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: winners stay winners under better bids")
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        demands, topo, catalog = random_auction(seed + i, n_users=16, n_stations=3, n_clouds=1)
        winners = admit(demands, topo, catalog).winners
        if not winners:
            continue
        n = winners[int(rng.integers(len(winners)))]
        old = next(d for d in demands if d.user == n)
        better = replace(old, claimed=old.claimed + float(rng.uniform(0.0, 10.0)),
                         q=int(rng.integers(1, old.q + 1)), s=int(rng.integers(1, old.s + 1)))
        moved = [better if d.user == n else d for d in demands]
        result.checked += 1
        if not admit(moved, topo, catalog).x[n]:
            result.failures.append(f"seed={seed + i}: user {n} lost after improving {old} -> {better} "
                                   f"input={instance_json(demands, topo, catalog)}")
    return result


def _wins(demands: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog, n: int, claim: float) -> bool:
    moved = [replace(d, claimed=claim) if d.user == n else d for d in demands]
    return bool(admit(moved, topo, catalog).x[n])


def suite_threshold(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: payment equals the winning threshold")
    for i in range(count):
        demands, topo, catalog = random_auction(seed + i, n_users=12, n_stations=2, n_clouds=1)
        priced = price(demands, topo, catalog)
        for n in priced.winners:
            claim = next(d.claimed for d in demands if d.user == n)
            if _wins(demands, topo, catalog, n, 0.0):
                threshold = 0.0
            else:
                lo, hi = 0.0, claim
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    lo, hi = (lo, mid) if _wins(demands, topo, catalog, n, mid) else (mid, hi)
                threshold = hi
            result.checked += 1
            pay = priced.payments[n]
            if abs(threshold - pay) > 1e-6 * max(1.0, pay):
                result.failures.append(f"seed={seed + i} user={n}: threshold {threshold} != payment {pay} "
                                       f"input={instance_json(demands, topo, catalog)}")
    return result


def suite_modes(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: pricing modes agree on one station")
    for i in range(count):
        demands, topo, catalog = random_auction(seed + i, n_users=12, n_stations=1, n_clouds=1)
        allocation = admit(demands, topo, catalog)
        a = critical_payments(demands, topo, catalog, allocation, "definitional").payments
        b = critical_payments(demands, topo, catalog, allocation, "literal").payments
        result.checked += 1
        if any(not math.isclose(a[n], b[n], rel_tol=1e-12, abs_tol=1e-12) for n in a):
            result.failures.append(f"seed={seed + i}: definitional {a} != literal {b} "
                                   f"input={instance_json(demands, topo, catalog)}")
    return result


def suite_crosscheck(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("oracles: branch-and-bound equals enumeration")
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        demands, topo, catalog = random_auction(seed + i, n_users=int(rng.integers(0, 13)),
                                                n_stations=int(rng.integers(1, 4)))
        exact = exact_admission(demands, topo, catalog).welfare
        naive = naive_admission(demands, topo, catalog).welfare
        result.checked += 1
        if not math.isclose(exact, naive, rel_tol=1e-12, abs_tol=1e-12):
            result.failures.append(f"seed={seed + i}: exact {exact} != enumeration {naive} "
                                   f"input={instance_json(demands, topo, catalog)}")
    return result


def small_config(seed: int, n_users: int = 30) -> ScenarioConfig:
    return ScenarioConfig(n_users=n_users, n_stations=4, n_clouds=1, area_m=1000.0, seed=seed)


def suite_occupancy(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("harness: minimum occupancy, ours <= all-offload and <= odessa in aggregate")
    tables = []
    for i in range(count):
        config = small_config(seed + i)
        table = occupancy_table(generate(config))
        tables.append(table.assign(scenario=i))
        wide = table.pivot(index="user", columns="method", values="phi")
        for user, row in wide.iterrows():
            result.checked += 1
            if not math.isnan(row["all_offload"]) and not row["ours"] <= row["all_offload"] + TOL:
                result.failures.append(f"seed={seed + i} user={user}: ours {row['ours']} > "
                                       f"all-offload {row['all_offload']} input={config.model_dump_json()}")
    if tables:
        users, ours, odessa = paired_occupancy(pd.concat(tables, ignore_index=True), "ours", "odessa")
        result.notes.append(f"mean phi over {users} paired users: ours {ours:.4f}, odessa {odessa:.4f}")
        if users and ours > odessa + TOL:
            result.failures.append(f"seeds={seed}..{seed + count - 1}: mean phi ours {ours} > odessa {odessa} "
                                   f"input={small_config(seed).model_dump_json()}")
    return result


def suite_determinism(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("scenario: identical seeds give identical files")
    for i in range(count):
        config = small_config(seed + i, n_users=50)
        result.checked += 1
        if dumps(generate(config)) != dumps(generate(config)):
            result.failures.append(f"seed={seed + i}: two generations differ input={config.model_dump_json()}")
    return result


def suite_perf(count: int, seed: int = 0) -> SuiteResult:
    result = SuiteResult("market: admit on 10,000 users under 1 s")
    for i in range(count):
        demands, topo, catalog = random_auction(seed + i, n_users=10_000, n_stations=400, n_clouds=100)
        started = time.perf_counter()
        admit(demands, topo, catalog)
        elapsed = time.perf_counter() - started
        result.checked += 1
        result.notes.append(f"seed={seed + i}: admit took {elapsed * 1000:.1f} ms")
        if elapsed >= 1.0:
            result.failures.append(f"seed={seed + i}: admit took {elapsed:.3f} s")
    return result


def suite_trends(count: int, seed: int = 0) -> SuiteResult:
    """Soft desk-scale trend checks; deviations are reported, never fatal."""
    result = SuiteResult("harness: welfare trends at N=100", hard=False)
    if count == 0:
        return result
    spec = ExperimentSpec(sweep="n_users", values=[100], methods=["greedy", "coarse", "random"],
                          seeds=list(range(seed, seed + count)))
    df = run_experiment(spec)
    wide = df.pivot_table(index="seed", columns="method", values="welfare_bid")
    norm = df[df["method"] == "greedy"]["normalized_welfare"].median()
    over_coarse = (wide["greedy"] / wide["coarse"] - 1.0).median()
    over_random = (wide["greedy"] / wide["random"] - 1.0).median()
    result.checked = len(wide)
    result.notes.append(f"median greedy / best oracle = {norm:.3f} (target >= 0.80)")
    result.notes.append(f"median gain over coarse = {over_coarse:.1%} (target >= 20%)")
    result.notes.append(f"median gain over random = {over_random:.1%} (target >= 50%)")
    if norm < 0.80:
        result.failures.append(f"greedy / best oracle median {norm:.3f} below 0.80")
    if over_coarse < 0.20:
        result.failures.append(f"gain over coarse {over_coarse:.1%} below 20%")
    if over_random < 0.50:
        result.failures.append(f"gain over random {over_random:.1%} below 50%")
    return result


SUITES: dict[str, Callable[[dict[str, int], int], SuiteResult]] = {
    "topo": lambda c, s: suite_topo(c["topo"], s),
    "chains": lambda c, s: suite_partition_chains(c["chains"], s),
    "dags": lambda c, s: suite_partition_dags(c["dags"], s),
    "demand": lambda c, s: suite_demand(c["demand"], s),
    "ratio": lambda c, s: suite_ratio(c["ratio"], s),
    "uniform": lambda c, s: suite_uniform(c["uniform"], s),
    "truthful": lambda c, s: suite_truthful(c["truthful"], c["probed"], s),
    "monotone": lambda c, s: suite_monotone(c["monotone"], s),
    "threshold": lambda c, s: suite_threshold(c["threshold"], s),
    "modes": lambda c, s: suite_modes(c["modes"], s),
    "crosscheck": lambda c, s: suite_crosscheck(c["crosscheck"], s),
    "occupancy": lambda c, s: suite_occupancy(c["occupancy"], s),
    "determinism": lambda c, s: suite_determinism(c["determinism"], s),
    "perf": lambda c, s: suite_perf(c["perf"], s),
    "trends": lambda c, s: suite_trends(c["trends"], s),
}


def run_suites(level: str = "quick", seed: int = 0, only: Sequence[str] | None = None) -> list[SuiteResult]:
    if level not in LEVELS:
        raise ValueError(f"unknown verify level {level!r}, expected one of {sorted(LEVELS)}")
    counts = LEVELS[level]
    names = list(only) if only else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}, expected a subset of {list(SUITES)}")
    results = []
    for name in tqdm(names, desc=f"verify {level}"):
        results.append(SUITES[name](counts, seed))
    return results


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def build_report(results: Sequence[SuiteResult], level: str, seed: int) -> tuple[list[str], pd.DataFrame]:
    lines = []
    detail_rows = []

    lines.append("=" * 70)
    lines.append(f"VERIFICATION REPORT: level={level} seed={seed}")
    lines.append(f"Suites run: {len(results)}")
    lines.append("=" * 70)

    for r in results:
        status = "PASS" if not r.failures else ("FAIL" if r.hard else "WARN")
        lines.append(f"\n{'-' * 60}")
        lines.append(f"{status}  {r.name}")
        lines.append(f"{'-' * 60}")
        lines.append(f"  Checked:  {r.checked}")
        lines.append(f"  Failures: {len(r.failures)}")
        for note in r.notes:
            lines.append(f"  {note}")
        for failure in r.failures[:MAX_FAILURES_SHOWN]:
            lines.append(f"    {failure}")
        if len(r.failures) > MAX_FAILURES_SHOWN:
            lines.append(f"    ... and {len(r.failures) - MAX_FAILURES_SHOWN} more")
        detail_rows.append({"suite": r.name, "status": status, "checked": r.checked,
                            "failures": len(r.failures), "hard": r.hard})

    failed = [r for r in results if not r.passed]
    lines.append("\n" + "=" * 70)
    lines.append("SUMMARY")
    lines.append("=" * 70)
    lines.append(f"Checks run:    {sum(r.checked for r in results)}")
    lines.append(f"Suites failed: {len(failed)}/{len(results)}")
    lines.append("Result:        " + ("PASS" if not failed else "FAIL"))

    return lines, pd.DataFrame(detail_rows, columns=["suite", "status", "checked", "failures", "hard"])
