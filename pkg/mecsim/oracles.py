"""
Reference solvers for admission control and partition: exact branch-and-bound,
plain enumeration, cross-entropy search, the fractional relaxation of the
uniform case, the comparison baselines and the brute-force partition oracle.

Entry points:
    exact_admission(demands, topo, catalog) -> OracleReport
    cross_entropy_admission(demands, topo, catalog, params) -> OracleReport
"""

import itertools
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pybnb
from scipy.optimize import linprog

from mecsim.market import (
    DemandProfile, Topology, admit, is_special_case, rank_users, scan_admission,
)
from mecsim.models import CrossEntropyParams
from mecsim.offload import (
    LOCATIONS, Demand, DeviceProfile, Infeasible, LinkConfig, Location, NoOffloadNeeded,
    PartitionPlan, Planner, UNREACHABLE, VmCatalog, ZeroRate, all_device, all_offload,
    evaluate_placement, exact_occupancy, exec_time, hop_time, partition, uplink_rate,
)
from mecsim.taskgraph import TaskGraph, topo_sort

EXACT_CAP = 22
NAIVE_CAP = 20


class InstanceTooLarge(ValueError):
    pass


class NotSpecialCase(ValueError):
    pass


@dataclass(frozen=True)
class OracleReport:
    method: str
    welfare: float
    winners: tuple[int, ...]
    runtime_s: float
    exact: bool
    fractional: dict[int, float] | None = None


def _by_cloud(demands: Sequence[DemandProfile], topo: Topology) -> dict[int, list[DemandProfile]]:
    groups: dict[int, list[DemandProfile]] = {}
    for d in sorted(demands, key=lambda d: d.user):
        groups.setdefault(topo.cloud_of(d.user), []).append(d)
    return groups


def _report(method: str, demands: Sequence[DemandProfile], winners, started: float, exact: bool,
            fractional: dict[int, float] | None = None) -> OracleReport:
    claims = {d.user: d.claimed for d in demands}
    chosen = tuple(sorted(winners))
    return OracleReport(
        method=method,
        welfare=sum(claims[n] for n in chosen),
        winners=chosen,
        runtime_s=time.perf_counter() - started,
        exact=exact,
        fractional=fractional,
    )


def _feasible(chosen: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog) -> bool:
    station_used: dict[int, int] = {}
    cloud_used: dict[int, float] = {}
    for d in chosen:
        k, l = topo.associations[d.user]
        station_used[k] = station_used.get(k, 0) + d.q
        cloud_used[l] = cloud_used.get(l, 0.0) + catalog.capability(d.s)
    return (all(used <= topo.subchannels(k) for k, used in station_used.items())
            and all(used <= topo.capacity(l) for l, used in cloud_used.items()))


# ---------------------------------------------------------------------------
# Exact admission: branch-and-bound per cloud
# ---------------------------------------------------------------------------

class CloudAdmission(pybnb.Problem):
    """
    Two-dimensional knapsack for the users of one cloud. Items are visited in
    decreasing claim / F order; each child picks the next admitted user.
    The bound is a fractional knapsack on the cloud budget over the remaining
    users that still fit their station on their own.
    """

    def __init__(self, users: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog):
        self._users = list(users)
        self._n = len(self._users)
        self._q = [d.q for d in self._users]
        self._f = [catalog.capability(d.s) for d in self._users]
        self._v = [d.claimed for d in self._users]
        self._k = [topo.station_of(d.user) for d in self._users]
        self._m = {k: topo.subchannels(k) for k in self._k}
        self._budget = topo.capacity(topo.cloud_of(self._users[0].user)) if self._users else 0.0
        self._sorted_order = sorted(range(self._n), key=lambda i: self._v[i] / self._f[i], reverse=True)
        self._station_used: tuple[tuple[int, int], ...] = ()
        self._cloud_used = 0.0
        self._value = 0.0
        self._level = 0
        self._choices: list[int] = []
        self.best_value = 0.0
        self.best_choices: list[int] = []

    def _fits_station(self, i: int, used: dict[int, int]) -> bool:
        return used.get(self._k[i], 0) + self._q[i] <= self._m[self._k[i]]

    def sense(self):
        return pybnb.maximize

    def objective(self):
        return self._value

    def bound(self):
        used = dict(self._station_used)
        room = self._budget - self._cloud_used
        bound = self._value
        for level in range(self._level, self._n):
            i = self._sorted_order[level]
            if not self._fits_station(i, used):
                continue
            if self._f[i] <= room:
                room -= self._f[i]
                bound += self._v[i]
            else:
                bound += self._v[i] * max(room, 0.0) / self._f[i]
                break
        return bound

    def save_state(self, node):
        node.state = (self._station_used, self._cloud_used, self._value, self._level, self._choices)

    def load_state(self, node):
        (self._station_used, self._cloud_used, self._value, self._level, self._choices) = node.state

    def branch(self):
        used = dict(self._station_used)
        for level in range(self._level, self._n):
            i = self._sorted_order[level]
            if not self._fits_station(i, used) or self._cloud_used + self._f[i] > self._budget:
                continue
            child_used = dict(used)
            child_used[self._k[i]] = child_used.get(self._k[i], 0) + self._q[i]
            child_value = self._value + self._v[i]
            child_choices = self._choices + [i]
            if child_value > self.best_value:
                self.best_value = child_value
                self.best_choices = child_choices
            child = pybnb.Node()
            child.objective = child_value
            child.state = (tuple(sorted(child_used.items())), self._cloud_used + self._f[i],
                           child_value, level + 1, child_choices)
            yield child

    def winners(self) -> list[int]:
        return [self._users[i].user for i in self.best_choices]


def exact_admission(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    cap: int = EXACT_CAP,
) -> OracleReport:
    started = time.perf_counter()
    groups = _by_cloud(demands, topo)
    for l, users in groups.items():
        if len(users) > cap:
            raise InstanceTooLarge(f"cloud {l} has {len(users)} users, exact oracle cap is {cap}")

    winners: list[int] = []
    for l in sorted(groups):
        problem = CloudAdmission(groups[l], topo, catalog)
        pybnb.solve(problem, comm=None, log=None, absolute_gap=0, relative_gap=0)
        winners.extend(problem.winners())
    return _report("exact", demands, winners, started, exact=True)


def naive_admission(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    cap: int = NAIVE_CAP,
) -> OracleReport:
    """Enumerate every subset of every cloud's users."""
    started = time.perf_counter()
    winners: list[int] = []
    for l, users in sorted(_by_cloud(demands, topo).items()):
        if len(users) > cap:
            raise InstanceTooLarge(f"cloud {l} has {len(users)} users, enumeration cap is {cap}")
        best_value, best = 0.0, ()
        for mask in itertools.product((0, 1), repeat=len(users)):
            chosen = [d for d, keep in zip(users, mask) if keep]
            value = sum(d.claimed for d in chosen)
            if value > best_value and _feasible(chosen, topo, catalog):
                best_value, best = value, tuple(d.user for d in chosen)
        winners.extend(best)
    return _report("naive", demands, winners, started, exact=True)


# ---------------------------------------------------------------------------
# Cross-entropy search
# ---------------------------------------------------------------------------

def cross_entropy_admission(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    params: CrossEntropyParams | None = None,
) -> OracleReport:
    """
    Samples inclusion vectors from independent Bernoulli probabilities, repairs
    each sample by keeping its longest feasible prefix in ranking order, and
    moves the probabilities toward the elite samples. The greedy allocation is
    injected into the first population; the best sample seen is returned.
    """
    params = params or CrossEntropyParams()
    started = time.perf_counter()
    if not demands:
        return _report("ce", demands, [], started, exact=False)

    order = rank_users(demands, topo, catalog)
    by_user = {d.user: d for d in demands}
    stations = sorted({topo.station_of(n) for n in order})
    clouds = sorted({topo.cloud_of(n) for n in order})
    st_idx = np.array([stations.index(topo.station_of(n)) for n in order])
    cl_idx = np.array([clouds.index(topo.cloud_of(n)) for n in order])
    q = np.array([by_user[n].q for n in order], dtype=float)
    f = np.array([catalog.capability(by_user[n].s) for n in order])
    value = np.array([by_user[n].claimed for n in order])
    st_cap = np.array([topo.subchannels(k) for k in stations], dtype=float)
    cl_cap = np.array([topo.capacity(l) for l in clouds])
    size = len(order)

    def repair(mask: np.ndarray) -> np.ndarray:
        members = np.flatnonzero(mask)
        if members.size == 0:
            return mask
        rows = np.arange(members.size)
        st_load = np.zeros((members.size, st_cap.size))
        st_load[rows, st_idx[members]] = q[members]
        cl_load = np.zeros((members.size, cl_cap.size))
        cl_load[rows, cl_idx[members]] = f[members]
        ok = ((np.cumsum(st_load, axis=0) <= st_cap).all(axis=1)
              & (np.cumsum(cl_load, axis=0) <= cl_cap).all(axis=1))
        bad = np.flatnonzero(~ok)
        keep = members if bad.size == 0 else members[:bad[0]]
        out = np.zeros(size, dtype=bool)
        out[keep] = True
        return out

    greedy = admit(demands, topo, catalog)
    greedy_mask = np.array([bool(greedy.x[n]) for n in order])

    rng = np.random.default_rng(params.seed)
    p = np.full(size, 0.5)
    n_elite = max(1, math.ceil(params.elite_fraction * params.population))
    best_mask, best_value = greedy_mask, float(value[greedy_mask].sum())

    for it in range(params.iterations):
        samples = rng.random((params.population, size)) < p
        repaired = np.array([repair(s) for s in samples])
        if it == 0:
            repaired[0] = greedy_mask
        scores = repaired.astype(float) @ value
        elite = np.argsort(-scores, kind="stable")[:n_elite]
        if scores[elite[0]] > best_value:
            best_value = float(scores[elite[0]])
            best_mask = repaired[elite[0]]
        p = params.smoothing * repaired[elite].mean(axis=0) + (1.0 - params.smoothing) * p

    winners = [order[i] for i in np.flatnonzero(best_mask)]
    return _report("ce", demands, winners, started, exact=False)


# ---------------------------------------------------------------------------
# Fractional relaxation (uniform M and q)
# ---------------------------------------------------------------------------

def special_case_relaxed_greedy(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
) -> OracleReport:
    """
    Optimum of the relaxation 0 <= x <= 1 with at most floor(M/q) users per station
    and the cloud budget, solved per cloud with HiGHS. `welfare` is the
    fractional value W_F; `winners` are the users taken in full.
    """
    if not is_special_case(demands, topo):
        raise NotSpecialCase("relaxation needs one M for all stations and one q for all bids")
    started = time.perf_counter()
    fractional: dict[int, float] = {}
    welfare = 0.0
    for l, users in sorted(_by_cloud(demands, topo).items()):
        stations = sorted({topo.station_of(d.user) for d in users})
        slots = topo.subchannels(stations[0]) // users[0].q
        budget = topo.capacity(l)
        a_ub = np.zeros((len(stations) + 1, len(users)))
        for j, d in enumerate(users):
            a_ub[stations.index(topo.station_of(d.user)), j] = 1.0
            a_ub[-1, j] = catalog.capability(d.s) / budget
        b_ub = np.append(np.full(len(stations), slots), 1.0)
        res = linprog(-np.array([d.claimed for d in users]), A_ub=a_ub, b_ub=b_ub,
                      bounds=[(0.0, 1.0)] * len(users), method="highs")
        if not res.success:
            raise RuntimeError(f"relaxation for cloud {l} failed: {res.message}")
        welfare += -res.fun
        for d, x in zip(users, res.x):
            fractional[d.user] = float(min(max(x, 0.0), 1.0))

    winners = tuple(sorted(n for n, x in fractional.items() if x >= 1.0 - 1e-9))
    return OracleReport(method="relaxed", welfare=welfare, winners=winners,
                        runtime_s=time.perf_counter() - started, exact=False, fractional=fractional)


# ---------------------------------------------------------------------------
# Admission baselines
# ---------------------------------------------------------------------------

def greedy_admission(demands: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog) -> OracleReport:
    started = time.perf_counter()
    result = admit(demands, topo, catalog)
    return _report("greedy", demands, result.winners, started, exact=False)


def baseline_coarse_greedy(demands: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog) -> OracleReport:
    """Same capacity scan, ranked by claim alone."""
    started = time.perf_counter()
    order = [d.user for d in sorted(demands, key=lambda d: (-d.claimed, d.user))]
    x, _, _ = scan_admission(order, demands, topo, catalog)
    return _report("coarse", demands, [n for n in order if x[n]], started, exact=False)


def baseline_random(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    seed: int = 0,
) -> OracleReport:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    users = sorted(d.user for d in demands)
    order = [users[i] for i in rng.permutation(len(users))]
    x, _, _ = scan_admission(order, demands, topo, catalog)
    return _report("random", demands, [n for n in order if x[n]], started, exact=False)


# ---------------------------------------------------------------------------
# Partition baselines and oracles
# ---------------------------------------------------------------------------

def baseline_all_offload(graph: TaskGraph, dev: DeviceProfile, link: LinkConfig, vm_hz: float) -> PartitionPlan:
    return evaluate_placement(graph, all_offload(graph), dev, link, vm_hz)


def baseline_odessa_greedy(graph: TaskGraph, dev: DeviceProfile, link: LinkConfig, vm_hz: float) -> PartitionPlan:
    """
    Odessa-style myopic pass: in topological order each component takes the
    location minimizing its own execution time plus the transfers from its
    already placed predecessors. Ties and the output go to the device.
    """
    rate = uplink_rate(link, dev)
    placement: dict[int, Location] = {}
    for i in topo_sort(graph):
        if i == graph.output:
            placement[i] = Location.DEVICE
            continue

        def cost(y: Location) -> float:
            if y is Location.CLOUD and link.subchannels == 0:
                return UNREACHABLE
            incoming = sum(hop_time(graph, p, i, placement[p], y, rate) for p in graph.predecessors(i))
            return exec_time(graph, i, y, dev, vm_hz) + incoming

        placement[i] = Location.DEVICE if cost(Location.DEVICE) <= cost(Location.CLOUD) else Location.CLOUD
    return evaluate_placement(graph, placement, dev, link, vm_hz)


def brute_force_partition(graph: TaskGraph, dev: DeviceProfile, link: LinkConfig, vm_hz: float) -> PartitionPlan:
    """Minimum over all 2^(|V|-1) placements with the output on the device."""
    others = [i for i in graph.ids if i != graph.output]
    best: PartitionPlan | None = None
    for combo in itertools.product(LOCATIONS, repeat=len(others)):
        placement = dict(zip(others, combo))
        placement[graph.output] = Location.DEVICE
        try:
            plan = evaluate_placement(graph, placement, dev, link, vm_hz)
        except ZeroRate:
            continue
        if best is None or plan.total_delay < best.total_delay:
            best = plan
    return best


def exhaustive_demand(
    graph: TaskGraph,
    dev: DeviceProfile,
    link: LinkConfig,
    catalog: VmCatalog,
    planner: Planner = partition,
) -> Demand | NoOffloadNeeded | Infeasible:
    """Full M x S sweep, keeping the feasible profile with the smallest (phi, q, s)."""
    local = evaluate_placement(graph, all_device(graph), dev, link.with_subchannels(0), catalog.capability(1))
    if all(z <= dev.deadline_s for z in local.residual_delay.values()):
        return NoOffloadNeeded(local_delay=local.total_delay)

    m, b = link.station_subchannels, link.cloud_capacity_hz
    feasible = []
    best_delay = UNREACHABLE
    for q in range(1, m + 1):
        for s in catalog.types:
            f = catalog.capability(s)
            if f > b:
                continue
            plan = planner(graph, dev, link.with_subchannels(q), f)
            best_delay = min(best_delay, plan.total_delay)
            if all(z <= dev.deadline_s for z in plan.residual_delay.values()):
                feasible.append((exact_occupancy(q, f, m, b), q, s, q / m + f / b))
    if not feasible:
        return Infeasible(best_delay=best_delay)
    _, q, s, phi = min(feasible, key=lambda p: p[:3])
    return Demand(q=q, s=s, phi=phi)
