"""
Operator side of the JCC (joint communication/computation) market: greedy
admission control over user bids and critical-value payments.

Entry points:
    admit(demands, topo, catalog) -> AllocationResult
    critical_payments(demands, topo, catalog, result, mode) -> AllocationResult
"""

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from mecsim.offload import VmCatalog, resource_occupancy

PRICING_MODES = ("definitional", "literal")


class TopologyError(ValueError):
    pass


class InvalidDemand(ValueError):
    pass


class DuplicateUser(ValueError):
    pass


class ModeMismatch(ValueError):
    """The allocation passed to pricing was not produced by admit on these inputs."""


@dataclass(frozen=True)
class Station:
    id: int
    subchannels: int     # M_k
    bandwidth_hz: float  # w


@dataclass(frozen=True)
class Cloud:
    id: int
    capacity_hz: float   # B_l


@dataclass(frozen=True)
class Topology:
    stations: tuple[Station, ...]
    clouds: tuple[Cloud, ...]
    station_cloud: dict[int, int]
    associations: dict[int, tuple[int, int]]  # user -> (k(n), l(n))
    _stations: dict[int, Station] = field(init=False, repr=False, compare=False)
    _clouds: dict[int, Cloud] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_stations", {s.id: s for s in self.stations})
        object.__setattr__(self, "_clouds", {c.id: c for c in self.clouds})
        station_ids = [s.id for s in self.stations]
        cloud_ids = [c.id for c in self.clouds]
        if len(set(station_ids)) != len(station_ids) or len(set(cloud_ids)) != len(cloud_ids):
            raise TopologyError("station and cloud ids must be unique")
        for s in self.stations:
            if s.subchannels < 1:
                raise TopologyError(f"station {s.id} needs M_k >= 1")
            if s.bandwidth_hz <= 0:
                raise TopologyError(f"station {s.id} needs bandwidth > 0")
        for c in self.clouds:
            if c.capacity_hz <= 0:
                raise TopologyError(f"cloud {c.id} needs capacity > 0")
        if set(self.station_cloud) != set(station_ids):
            raise TopologyError("every station must map to exactly one cloud")
        for k, l in self.station_cloud.items():
            if l not in cloud_ids:
                raise TopologyError(f"station {k} maps to unknown cloud {l}")
        for n, (k, l) in self.associations.items():
            if k not in self.station_cloud:
                raise TopologyError(f"user {n} is associated with unknown station {k}")
            if self.station_cloud[k] != l:
                raise TopologyError(f"user {n}: cloud {l} is not the cloud of station {k}")

    def subchannels(self, k: int) -> int:
        return self._stations[k].subchannels

    def bandwidth(self, k: int) -> float:
        return self._stations[k].bandwidth_hz

    def capacity(self, l: int) -> float:
        return self._clouds[l].capacity_hz

    def station_of(self, user: int) -> int:
        return self.associations[user][0]

    def cloud_of(self, user: int) -> int:
        return self.associations[user][1]


@dataclass(frozen=True)
class DemandProfile:
    user: int
    q: int
    s: int
    claimed: float        # lambda_n, the reported valuation
    true_value: float     # v_n, private; admit and pricing never read it


@dataclass(frozen=True)
class AllocationResult:
    x: dict[int, int]
    welfare_bid: float
    station_used: dict[int, int]
    cloud_used: dict[int, float]
    rank_order: tuple[int, ...]
    payments: dict[int, float] = field(default_factory=dict)
    pricing_mode: str | None = None
    # Inputs the allocation was computed from, checked by pricing
    demands: tuple[DemandProfile, ...] = field(default=(), repr=False, compare=False)
    topology: Topology | None = field(default=None, repr=False, compare=False)

    @property
    def winners(self) -> list[int]:
        return sorted(n for n, won in self.x.items() if won)

    @property
    def revenue(self) -> float:
        return sum(self.payments.values())


@dataclass(frozen=True)
class ProbeRow:
    user: int
    true_value: float
    claimed: float
    win: bool
    payment: float
    utility: float


# ---------------------------------------------------------------------------
# Occupancy and ranking
# ---------------------------------------------------------------------------

class _Book:
    """Per-user lookups shared by admit, pricing and the baselines."""

    def __init__(self, demands: Sequence[DemandProfile], topo: Topology, catalog: VmCatalog):
        self.by_user: dict[int, DemandProfile] = {}
        for d in demands:
            if d.user in self.by_user:
                raise DuplicateUser(f"user {d.user} submitted more than one demand")
            _check_demand(d, topo, catalog)
            self.by_user[d.user] = d
        self.topo = topo
        self.station = {d.user: topo.station_of(d.user) for d in demands}
        self.cloud = {d.user: topo.cloud_of(d.user) for d in demands}
        self.f = {d.user: catalog.capability(d.s) for d in demands}
        self.phi = {d.user: occupancy(d, topo, catalog) for d in demands}

    def fits(self, user: int, station_used: dict[int, int], cloud_used: dict[int, float]) -> bool:
        d = self.by_user[user]
        k, l = self.station[user], self.cloud[user]
        return (station_used.get(k, 0) + d.q <= self.topo.subchannels(k)
                and cloud_used.get(l, 0.0) + self.f[user] <= self.topo.capacity(l))


def _check_demand(d: DemandProfile, topo: Topology, catalog: VmCatalog) -> None:
    if d.user not in topo.associations:
        raise InvalidDemand(f"user {d.user} has no station association")
    k, l = topo.associations[d.user]
    if d.q < 1 or d.q > topo.subchannels(k):
        raise InvalidDemand(f"user {d.user}: q*={d.q} outside 1..{topo.subchannels(k)}")
    if d.s not in catalog.types:
        raise InvalidDemand(f"user {d.user}: unknown VM type {d.s}")
    if catalog.capability(d.s) > topo.capacity(l):
        raise InvalidDemand(f"user {d.user}: VM type {d.s} exceeds cloud {l} capacity")
    if not math.isfinite(d.claimed) or d.claimed < 0:
        raise InvalidDemand(f"user {d.user}: claimed valuation must be finite and >= 0")


def occupancy(d: DemandProfile, topo: Topology, catalog: VmCatalog) -> float:
    k, l = topo.associations[d.user]
    return resource_occupancy(d.q, d.s, topo.subchannels(k), topo.capacity(l), catalog)


def ranking_metric(d: DemandProfile, topo: Topology, catalog: VmCatalog) -> float:
    """Claimed valuation per unit resource occupancy."""
    return d.claimed / occupancy(d, topo, catalog)


def rank_users(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """
    Users by decreasing gamma. Ties: higher claim, then smaller id; with an
    rng, equal-gamma users are ordered by a random key instead.
    """
    gamma = {d.user: ranking_metric(d, topo, catalog) for d in demands}
    if rng is None:
        return [d.user for d in sorted(demands, key=lambda d: (-gamma[d.user], -d.claimed, d.user))]
    ordered = sorted(demands, key=lambda d: d.user)
    tiebreak = dict(zip((d.user for d in ordered), rng.random(len(ordered))))
    return sorted(gamma, key=lambda n: (-gamma[n], tiebreak[n]))


# ---------------------------------------------------------------------------
# Admission control
# ---------------------------------------------------------------------------

def scan_admission(
    order: Iterable[int],
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
) -> tuple[dict[int, int], dict[int, int], dict[int, float]]:
    """
    Accept users in the given order whenever both their station and cloud still
    have room. Returns (x, station_used, cloud_used).
    """
    return _scan(order, _Book(demands, topo, catalog))


def _scan(order: Iterable[int], book: _Book) -> tuple[dict[int, int], dict[int, int], dict[int, float]]:
    station_used: dict[int, int] = {}
    cloud_used: dict[int, float] = {}
    x = {n: 0 for n in book.by_user}
    for n in order:
        if book.fits(n, station_used, cloud_used):
            x[n] = 1
            k, l = book.station[n], book.cloud[n]
            station_used[k] = station_used.get(k, 0) + book.by_user[n].q
            cloud_used[l] = cloud_used.get(l, 0.0) + book.f[n]
    return x, station_used, cloud_used


def admit(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    rng: np.random.Generator | None = None,
) -> AllocationResult:
    book = _Book(demands, topo, catalog)
    order = rank_users(demands, topo, catalog, rng)
    x, station_used, cloud_used = _scan(order, book)
    welfare = sum(book.by_user[n].claimed for n in order if x[n])
    return AllocationResult(
        x=x,
        welfare_bid=welfare,
        station_used=station_used,
        cloud_used=cloud_used,
        rank_order=tuple(order),
        demands=tuple(demands),
        topology=topo,
    )


def true_welfare(result: AllocationResult) -> float:
    """Sum of private valuations over winners (harness-side quantity)."""
    values = {d.user: d.true_value for d in result.demands}
    return sum(values[n] for n in result.winners)


def ratio_bound(topo: Topology, catalog: VmCatalog) -> float:
    """(A_max + B_max) / (2 A_max B_max) with A_max = max M_k and B_max = max B_l / F_s."""
    if not topo.stations or not topo.clouds:
        raise TopologyError("ratio bound needs at least one station and one cloud")
    a_max = max(s.subchannels for s in topo.stations)
    b_max = max(c.capacity_hz for c in topo.clouds) / min(catalog.capabilities)
    return (a_max + b_max) / (2 * a_max * b_max)


def is_special_case(demands: Sequence[DemandProfile], topo: Topology) -> bool:
    """All stations share one M and all bids ask for the same q."""
    return (len({s.subchannels for s in topo.stations}) <= 1
            and len({d.q for d in demands}) <= 1)


# ---------------------------------------------------------------------------
# Critical-value pricing
# ---------------------------------------------------------------------------

def _critical_value(book: _Book, n: int, i: int) -> float:
    theta = book.by_user[i].claimed * book.phi[n] / book.phi[i]
    # gamma_n >= gamma_i up to rounding; payments never exceed the claim
    return min(theta, book.by_user[n].claimed)


def _definitional_payments(result: AllocationResult, book: _Book) -> dict[int, float]:
    payments = {}
    order = result.rank_order
    for pos, n in enumerate(order):
        if not result.x[n]:
            continue
        without_n = order[:pos] + order[pos + 1:]
        x_cf, _, _ = _scan(without_n, book)
        critical = next((i for i in order[pos + 1:] if not result.x[i] and x_cf[i]), None)
        payments[n] = 0.0 if critical is None else _critical_value(book, n, critical)
    return payments


def _literal_payments(result: AllocationResult, book: _Book) -> dict[int, float]:
    """The printed pricing loop: only users at the same station are scanned."""
    payments = {}
    order = result.rank_order
    topo = book.topo
    for pos, n in enumerate(order):
        if not result.x[n]:
            continue
        k, l = book.station[n], book.cloud[n]
        m_k, b_l = topo.subchannels(k), topo.capacity(l)
        beta1 = sum(book.by_user[j].q for j in order[:pos] if result.x[j] and book.station[j] == k)
        beta2 = sum(book.f[j] for j in order[:pos] if result.x[j] and book.cloud[j] == l)
        payments[n] = 0.0
        for i in order[pos + 1:]:
            if book.station[i] != k:
                continue
            if beta1 + book.by_user[i].q <= m_k and beta2 + book.f[i] <= b_l:
                beta1 += book.by_user[i].q
                beta2 += book.f[i]
                if beta1 + book.by_user[n].q > m_k or beta2 + book.f[n] > b_l:
                    payments[n] = _critical_value(book, n, i)
                    break
    return payments


def critical_payments(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    result: AllocationResult,
    mode: str = "definitional",
) -> AllocationResult:
    """
    Winners pay the claim of their critical user scaled by the occupancy ratio;
    losers and winners without a critical user pay 0.

    definitional: the critical user is the first user ranked after n that loses
    in the original scan but wins when n is removed from the ranking.
    literal: the station-restricted scan with running totals beta1/beta2.
    """
    if mode not in PRICING_MODES:
        raise ValueError(f"unknown pricing mode {mode!r}, expected one of {PRICING_MODES}")
    if tuple(demands) != result.demands or result.topology != topo:
        raise ModeMismatch("allocation was not produced by admit on these demands and topology")

    book = _Book(demands, topo, catalog)
    if set(result.rank_order) != set(book.by_user):
        raise ModeMismatch("rank order does not cover the demand set")
    x_check, _, _ = _scan(result.rank_order, book)
    if x_check != result.x:
        raise ModeMismatch("winner set does not match a scan of the rank order")

    if mode == "definitional":
        paid = _definitional_payments(result, book)
    else:
        paid = _literal_payments(result, book)
    payments = {n: paid.get(n, 0.0) for n in sorted(book.by_user)}
    return replace(result, payments=payments, pricing_mode=mode)


def price(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    mode: str = "definitional",
    rng: np.random.Generator | None = None,
) -> AllocationResult:
    """admit followed by critical_payments."""
    result = admit(demands, topo, catalog, rng)
    return critical_payments(demands, topo, catalog, result, mode)


def truthfulness_probe(
    demands: Sequence[DemandProfile],
    topo: Topology,
    catalog: VmCatalog,
    user: int,
    grid: Iterable[float],
    mode: str = "definitional",
) -> list[ProbeRow]:
    """Replay the auction with `user`'s claim replaced by each grid value."""
    base = {d.user: d for d in demands}
    if user not in base:
        raise InvalidDemand(f"user {user} has no demand to probe")
    v = base[user].true_value
    rows = []
    for claim in grid:
        probed = [replace(d, claimed=float(claim)) if d.user == user else d for d in demands]
        result = price(probed, topo, catalog, mode)
        win = bool(result.x[user])
        pay = result.payments[user]
        rows.append(ProbeRow(
            user=user,
            true_value=v,
            claimed=float(claim),
            win=win,
            payment=pay,
            utility=(v - pay) if win else 0.0,
        ))
    return rows
