"""
Per-user offloading: delay models, delay-aware task-graph partition and the
minimum-occupancy demand search.

Entry points:
    partition(graph, dev, link, vm_hz) -> PartitionPlan
    optimal_demand(graph, dev, link, catalog) -> Demand | NoOffloadNeeded | Infeasible
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Callable

from mecsim.taskgraph import TaskGraph, sources, successors, topo_sort

# Delay of a branch that cannot be executed (cloud placement without a link).
UNREACHABLE = math.inf


class ZeroRate(ArithmeticError):
    """Data has to cross the wireless link but the link has no subchannels."""


class CapacityExceeded(ValueError):
    pass


class PlacementError(ValueError):
    pass


class Location(str, Enum):
    DEVICE = "device"
    CLOUD = "cloud"


LOCATIONS = (Location.DEVICE, Location.CLOUD)


@dataclass(frozen=True)
class DeviceProfile:
    cpu_hz: float
    tx_power_w: float
    channel_gain: float
    noise_w: float
    deadline_s: float = math.inf  # inf = unbounded

    def __post_init__(self):
        for name in ("cpu_hz", "tx_power_w", "channel_gain", "noise_w", "deadline_s"):
            value = getattr(self, name)
            if not value > 0 or math.isnan(value):
                raise ValueError(f"{name} must be > 0, got {value}")
        for name in ("cpu_hz", "tx_power_w", "channel_gain", "noise_w"):
            if math.isinf(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class VmCatalog:
    # capabilities[s - 1] is F_s^c, VM types are 1-based
    capabilities: tuple[float, ...]

    def __post_init__(self):
        if not self.capabilities:
            raise ValueError("VM catalog needs at least one type")
        if any(f <= 0 for f in self.capabilities):
            raise ValueError("VM capabilities must be > 0")
        if any(a >= b for a, b in zip(self.capabilities, self.capabilities[1:])):
            raise ValueError("VM capabilities must be strictly increasing")

    @property
    def types(self) -> range:
        return range(1, len(self.capabilities) + 1)

    def capability(self, s: int) -> float:
        if s not in self.types:
            raise ValueError(f"unknown VM type {s} (catalog has {len(self.capabilities)})")
        return self.capabilities[s - 1]


@dataclass(frozen=True)
class LinkConfig:
    subchannels: int            # q
    bandwidth_hz: float         # w
    station_subchannels: int    # M_{k(n)}
    cloud_capacity_hz: float    # B_{l(n)}

    def __post_init__(self):
        if self.subchannels < 0:
            raise ValueError("subchannels must be >= 0")
        if self.station_subchannels < 1:
            raise ValueError("station must offer at least one subchannel")
        if self.bandwidth_hz <= 0 or self.cloud_capacity_hz <= 0:
            raise ValueError("bandwidth and cloud capacity must be > 0")
        if self.subchannels > self.station_subchannels:
            raise CapacityExceeded(
                f"q={self.subchannels} exceeds station capacity M={self.station_subchannels}")

    def with_subchannels(self, q: int) -> "LinkConfig":
        return replace(self, subchannels=q)


@dataclass(frozen=True)
class PartitionPlan:
    placement: dict[int, Location]
    residual_delay: dict[int, float]
    total_delay: float

    @property
    def offloaded(self) -> list[int]:
        return sorted(i for i, y in self.placement.items() if y is Location.CLOUD)

    def meets(self, deadline_s: float) -> bool:
        # Delay constraint on every component, not just the sources
        return all(z <= deadline_s for z in self.residual_delay.values())


@dataclass(frozen=True)
class Demand:
    q: int
    s: int
    phi: float


@dataclass(frozen=True)
class NoOffloadNeeded:
    local_delay: float


@dataclass(frozen=True)
class Infeasible:
    best_delay: float


Planner = Callable[[TaskGraph, DeviceProfile, LinkConfig, float], PartitionPlan]


# ---------------------------------------------------------------------------
# Computation / communication models
# ---------------------------------------------------------------------------

def local_exec_time(cycles: float, cpu_hz: float) -> float:
    return cycles / cpu_hz


def cloud_exec_time(cycles: float, vm_hz: float) -> float:
    return cycles / vm_hz


def uplink_rate(link: LinkConfig, dev: DeviceProfile) -> float:
    """Shannon rate over q orthogonal subchannels, in bits/second."""
    snr = dev.tx_power_w * dev.channel_gain / dev.noise_w
    return link.subchannels * link.bandwidth_hz * math.log2(1.0 + snr)


def transfer_time(bits: float, rate: float) -> float:
    if bits == 0:
        return 0.0
    if rate <= 0:
        raise ZeroRate(f"cannot transfer {bits} bits over a zero-rate link")
    return bits / rate


def exec_time(graph: TaskGraph, node: int, where: Location, dev: DeviceProfile, vm_hz: float) -> float:
    if where is Location.DEVICE:
        return local_exec_time(graph.cycles(node), dev.cpu_hz)
    return cloud_exec_time(graph.cycles(node), vm_hz)


def hop_time(graph: TaskGraph, src: int, dst: int, y_src: Location, y_dst: Location, rate: float) -> float:
    if y_src is y_dst:
        return 0.0
    try:
        return transfer_time(graph.bits(src, dst), rate)
    except ZeroRate:
        return UNREACHABLE


# ---------------------------------------------------------------------------
# Fixed placements
# ---------------------------------------------------------------------------

def all_device(graph: TaskGraph) -> dict[int, Location]:
    return {i: Location.DEVICE for i in graph.ids}


def all_offload(graph: TaskGraph) -> dict[int, Location]:
    """Every component on the cloud except the output, which returns to the device."""
    return {i: Location.DEVICE if i == graph.output else Location.CLOUD for i in graph.ids}


def evaluate_placement(
    graph: TaskGraph,
    placement: dict[int, Location],
    dev: DeviceProfile,
    link: LinkConfig,
    vm_hz: float,
) -> PartitionPlan:
    """Residual delays of a fixed placement, by backward recursion over the topo order."""
    if set(placement) != set(graph.ids):
        raise PlacementError("placement must cover every component exactly once")
    if placement[graph.output] is not Location.DEVICE:
        raise PlacementError("the output component must run on the device")

    rate = uplink_rate(link, dev)
    residual: dict[int, float] = {}
    for i in reversed(topo_sort(graph)):
        y = placement[i]
        t = exec_time(graph, i, y, dev, vm_hz)
        succ = successors(graph, i)
        if not succ:
            residual[i] = t
            continue
        worst = 0.0
        for j in succ:
            hop = 0.0 if placement[j] is y else transfer_time(graph.bits(i, j), rate)
            worst = max(worst, hop + residual[j])
        residual[i] = t + worst

    total = max(residual[s] for s in sources(graph))
    return PartitionPlan(placement=dict(placement), residual_delay=residual, total_delay=total)


def plan_delay(
    graph: TaskGraph,
    placement: dict[int, Location],
    dev: DeviceProfile,
    link: LinkConfig,
    vm_hz: float,
) -> float:
    return evaluate_placement(graph, placement, dev, link, vm_hz).total_delay


# ---------------------------------------------------------------------------
# Delay-aware partition
# ---------------------------------------------------------------------------

def partition(graph: TaskGraph, dev: DeviceProfile, link: LinkConfig, vm_hz: float) -> PartitionPlan:
    """
    Backward induction over the reverse topological order.

    Z[i][y] is the minimum delay from starting component i at location y until
    the output finishes on the device. The output is pinned to the device.
    A forward pass then fixes locations (sources by argmin Z, later components
    by the cheapest arrival from their already placed predecessors), ties going
    to the device. The returned plan is the placement's evaluated delay, or a
    uniform placement (all-device / all-offload) if that one is strictly faster.
    """
    order = topo_sort(graph)
    out = graph.output
    rate = uplink_rate(link, dev)
    can_offload = link.subchannels > 0

    z: dict[int, dict[Location, float]] = {
        out: {Location.DEVICE: local_exec_time(graph.cycles(out), dev.cpu_hz),
              Location.CLOUD: UNREACHABLE},
    }
    for i in reversed(order[:-1]):
        z[i] = {}
        for y in LOCATIONS:
            if y is Location.CLOUD and not can_offload:
                z[i][y] = UNREACHABLE
                continue
            worst = 0.0
            for j in successors(graph, i):
                best_j = min(hop_time(graph, i, j, y, yj, rate) + z[j][yj] for yj in LOCATIONS)
                worst = max(worst, best_j)
            z[i][y] = exec_time(graph, i, y, dev, vm_hz) + worst

    placement: dict[int, Location] = {}
    for i in order:
        if i == out:
            placement[i] = Location.DEVICE
            continue
        preds = graph.predecessors(i)

        def arrival(y: Location) -> float:
            if not preds:
                return z[i][y]
            return max(hop_time(graph, p, i, placement[p], y, rate) for p in preds) + z[i][y]

        placement[i] = Location.DEVICE if arrival(Location.DEVICE) <= arrival(Location.CLOUD) else Location.CLOUD

    best = evaluate_placement(graph, placement, dev, link, vm_hz)
    fallbacks = [all_device(graph)]
    if can_offload:
        fallbacks.append(all_offload(graph))
    for fixed in fallbacks:
        candidate = evaluate_placement(graph, fixed, dev, link, vm_hz)
        if candidate.total_delay < best.total_delay:
            best = candidate
    return best


# ---------------------------------------------------------------------------
# Resource occupancy and demand search
# ---------------------------------------------------------------------------

def resource_occupancy(q: int, s: int, station_subchannels: int, cloud_capacity_hz: float,
                       catalog: VmCatalog) -> float:
    f = catalog.capability(s)
    if q < 0:
        raise ValueError("q must be >= 0")
    if q > station_subchannels:
        raise CapacityExceeded(f"q={q} exceeds M={station_subchannels}")
    if f > cloud_capacity_hz:
        raise CapacityExceeded(f"VM type {s} ({f:g} Hz) exceeds cloud capacity {cloud_capacity_hz:g} Hz")
    return q / station_subchannels + f / cloud_capacity_hz


def exact_occupancy(q: int, f: float, station_subchannels: int, cloud_capacity_hz: float) -> Fraction:
    """Occupancy as an exact rational, for ordering profiles whose float phi ties."""
    return Fraction(q, station_subchannels) + Fraction(f) / Fraction(cloud_capacity_hz)


def candidate_profiles(link: LinkConfig, catalog: VmCatalog) -> list[tuple[float, int, int]]:
    """All (phi, q, s) with 1 <= q <= M and F_s <= B, ascending by exact phi, then q, then s."""
    profiles = []
    for q in range(1, link.station_subchannels + 1):
        for s in catalog.types:
            if catalog.capability(s) > link.cloud_capacity_hz:
                continue
            phi = resource_occupancy(q, s, link.station_subchannels, link.cloud_capacity_hz, catalog)
            exact = exact_occupancy(q, catalog.capability(s), link.station_subchannels, link.cloud_capacity_hz)
            profiles.append((exact, q, s, phi))
    return [(phi, q, s) for _, q, s, phi in sorted(profiles, key=lambda p: p[:3])]


def optimal_demand(
    graph: TaskGraph,
    dev: DeviceProfile,
    link: LinkConfig,
    catalog: VmCatalog,
    planner: Planner = partition,
) -> Demand | NoOffloadNeeded | Infeasible:
    """
    Minimum-occupancy (q, s) whose plan meets the deadline on every component.

    `link` is a template: its subchannel count is ignored and swept from 1 to M.
    """
    local = evaluate_placement(graph, all_device(graph), dev, link.with_subchannels(0),
                               catalog.capability(1))
    if local.meets(dev.deadline_s):
        return NoOffloadNeeded(local_delay=local.total_delay)

    best_delay = UNREACHABLE
    for phi, q, s in candidate_profiles(link, catalog):
        plan = planner(graph, dev, link.with_subchannels(q), catalog.capability(s))
        if plan.meets(dev.deadline_s):
            return Demand(q=q, s=s, phi=phi)
        best_delay = min(best_delay, plan.total_delay)
    return Infeasible(best_delay=best_delay)
