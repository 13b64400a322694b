"""
Seeded scenario generator: users scattered uniformly over a square area,
stations and clouds on regular grids, closest-station association and
d^-alpha channel gains.

Entry points:
    generate(config) -> Scenario
    save(scenario, path) / load(path) -> Scenario
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np
from pydantic import ValidationError

from mecsim.market import Cloud, DemandProfile, Station, Topology, TopologyError
from mecsim.models import (
    SCENARIO_VERSION, CloudModel, DemandModel, ScenarioConfig, ScenarioFile, StationModel,
    TaskGraphModel, TopologyModel, UserModel, deadline_in, deadline_out,
)
from mecsim.offload import (
    Demand, DeviceProfile, Infeasible, LinkConfig, NoOffloadNeeded, Planner, VmCatalog,
    optimal_demand, partition, resource_occupancy,
)
from mecsim.taskgraph import GraphValidationError, TaskGraph
from mecsim.templates import TEMPLATE_NAMES, UnknownTemplate, graph_template


class ScenarioError(ValueError):
    pass


class ZeroUsers(ScenarioError):
    pass


class ZeroStations(ScenarioError):
    pass


class ParseError(ScenarioError):
    pass


class InvariantViolation(ScenarioError):
    pass


@dataclass(frozen=True)
class UserSpec:
    id: int
    position: tuple[float, float]
    station: int
    cloud: int
    distance_m: float
    device: DeviceProfile
    template: str
    graph: TaskGraph
    true_value: float
    demand: Demand | None = None

    @property
    def channel_gain(self) -> float:
        return self.device.channel_gain


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    topology: Topology
    catalog: VmCatalog
    station_positions: dict[int, tuple[float, float]]
    cloud_positions: dict[int, tuple[float, float]]
    users: tuple[UserSpec, ...]
    seed: int

    def user(self, n: int) -> UserSpec:
        for u in self.users:
            if u.id == n:
                return u
        raise KeyError(n)

    def link_template(self, n: int) -> LinkConfig:
        """(M, w, B) seen by user n; the subchannel count is left at 0."""
        k, l = self.topology.associations[n]
        return LinkConfig(
            subchannels=0,
            bandwidth_hz=self.topology.bandwidth(k),
            station_subchannels=self.topology.subchannels(k),
            cloud_capacity_hz=self.topology.capacity(l),
        )


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def grid_positions(n: int, area_m: float) -> list[tuple[float, float]]:
    """Cell centers of a ceil(sqrt(n))-column grid over the square, row-major."""
    if n == 0:
        return []
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    w, h = area_m / cols, area_m / rows
    return [((i % cols + 0.5) * w, (i // cols + 0.5) * h) for i in range(n)]


def nearest(point: tuple[float, float], sites: list[tuple[float, float]]) -> tuple[int, float]:
    """Index of the closest site (ties -> smaller index) and its distance."""
    d = np.hypot(*(np.asarray(sites) - np.asarray(point)).T)
    idx = int(np.argmin(d))
    return idx, float(d[idx])


def channel_gain(distance_m: float, alpha: float, min_distance_m: float) -> float:
    return max(distance_m, min_distance_m) ** -alpha


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def generate(config: ScenarioConfig) -> Scenario:
    """
    Draw order on one np.random.default_rng(config.seed) stream: cloud
    capacities, user positions, then per user CPU, deadline, valuation,
    template and graph seed.
    """
    if config.n_users < 1:
        raise ZeroUsers("scenario needs at least one user")
    if config.n_stations < 1:
        raise ZeroStations("scenario needs at least one base station")
    unknown = sorted(set(config.templates) - set(TEMPLATE_NAMES))
    if unknown:
        raise UnknownTemplate(f"unknown task-graph templates {unknown}")

    rng = np.random.default_rng(config.seed)
    catalog = VmCatalog(tuple(sorted(config.vm_hz)))

    station_xy = grid_positions(config.n_stations, config.area_m)
    cloud_xy = grid_positions(config.n_clouds, config.area_m)
    stations = tuple(Station(id=k, subchannels=config.subchannels, bandwidth_hz=config.bandwidth_hz)
                     for k in range(config.n_stations))
    capacities = rng.choice(np.asarray(config.cloud_capacity_hz), size=config.n_clouds)
    clouds = tuple(Cloud(id=l, capacity_hz=float(c)) for l, c in enumerate(capacities))
    station_cloud = {k: nearest(xy, cloud_xy)[0] for k, xy in enumerate(station_xy)}

    positions = rng.uniform(0.0, config.area_m, size=(config.n_users, 2))
    names = list(config.templates)
    weights = np.asarray([config.templates[t] for t in names], dtype=float)
    weights /= weights.sum()

    users = []
    associations = {}
    for n in range(config.n_users):
        xy = (float(positions[n, 0]), float(positions[n, 1]))
        k, d = nearest(xy, station_xy)
        cpu = float(rng.choice(np.asarray(config.cpu_hz)))
        deadline = float(rng.choice(np.asarray(config.deadlines_s)))
        value = float(rng.choice(np.asarray(config.valuations)))
        template = names[int(rng.choice(len(names), p=weights))]
        graph_seed = int(rng.integers(0, 2**31 - 1))

        device = DeviceProfile(
            cpu_hz=cpu,
            tx_power_w=config.tx_power_w,
            channel_gain=channel_gain(d, config.path_loss_exp, config.min_distance_m),
            noise_w=config.noise_w,
            deadline_s=deadline,
        )
        graph = graph_template(template, config.template_params.get(template), graph_seed)
        associations[n] = (k, station_cloud[k])
        users.append(UserSpec(id=n, position=xy, station=k, cloud=station_cloud[k], distance_m=d,
                              device=device, template=template, graph=graph, true_value=value))

    topo = Topology(stations=stations, clouds=clouds, station_cloud=station_cloud,
                    associations=associations)
    return Scenario(
        config=config,
        topology=topo,
        catalog=catalog,
        station_positions=dict(enumerate(station_xy)),
        cloud_positions=dict(enumerate(cloud_xy)),
        users=tuple(users),
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# Demands and auction inputs
# ---------------------------------------------------------------------------

def compute_demands(
    scenario: Scenario,
    planner: Planner = partition,
) -> dict[int, Demand | NoOffloadNeeded | Infeasible]:
    return {
        u.id: optimal_demand(u.graph, u.device, scenario.link_template(u.id), scenario.catalog, planner)
        for u in scenario.users
    }


def attach_demands(scenario: Scenario, outcomes: Mapping[int, Demand | NoOffloadNeeded | Infeasible]) -> Scenario:
    """Store Demand outcomes on their users; other outcomes clear the bid."""
    users = tuple(
        replace(u, demand=outcomes[u.id] if isinstance(outcomes.get(u.id), Demand) else None)
        for u in scenario.users
    )
    return replace(scenario, users=users)


def bids(scenario: Scenario, claims: Mapping[int, float] | None = None) -> list[DemandProfile]:
    """Demand profiles of users that carry a demand; truthful unless `claims` overrides."""
    claims = claims or {}
    return [
        DemandProfile(user=u.id, q=u.demand.q, s=u.demand.s,
                      claimed=float(claims.get(u.id, u.true_value)), true_value=u.true_value)
        for u in scenario.users if u.demand is not None
    ]


def random_auction(
    seed: int,
    n_users: int = 12,
    n_stations: int = 2,
    n_clouds: int = 1,
    subchannels: int = 15,
    vm_hz: tuple[float, ...] = (5e9, 10e9, 20e9),
    cloud_capacity_hz: tuple[float, ...] = (50e9, 100e9, 200e9),
    valuations: tuple[float, ...] = tuple(float(v) for v in range(1, 21)),
    uniform: bool = False,
) -> tuple[list[DemandProfile], Topology, VmCatalog]:
    """
    Bare auction instance for property suites. Stations are dealt round-robin
    to clouds and users uniformly to stations. With `uniform=True` every bid
    asks for the same q, so all stations and bids share one (M, q).
    """
    rng = np.random.default_rng(seed)
    catalog = VmCatalog(tuple(sorted(vm_hz)))
    stations = tuple(Station(id=k, subchannels=subchannels, bandwidth_hz=1e6) for k in range(n_stations))
    clouds = tuple(Cloud(id=l, capacity_hz=float(rng.choice(np.asarray(cloud_capacity_hz))))
                   for l in range(n_clouds))
    station_cloud = {k: k % n_clouds for k in range(n_stations)}
    shared_q = int(rng.integers(1, subchannels + 1))

    demands = []
    associations = {}
    for n in range(n_users):
        k = int(rng.integers(n_stations))
        l = station_cloud[k]
        q = shared_q if uniform else int(rng.integers(1, subchannels + 1))
        fitting = [s for s in catalog.types if catalog.capability(s) <= clouds[l].capacity_hz]
        s = int(rng.choice(fitting))
        value = float(rng.choice(np.asarray(valuations)))
        associations[n] = (k, l)
        demands.append(DemandProfile(user=n, q=q, s=s, claimed=value, true_value=value))
    topo = Topology(stations=stations, clouds=clouds, station_cloud=station_cloud, associations=associations)
    return demands, topo, catalog


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def to_file(scenario: Scenario) -> ScenarioFile:
    topo = scenario.topology
    return ScenarioFile(
        version=SCENARIO_VERSION,
        seed=scenario.seed,
        config=scenario.config,
        vm_hz=list(scenario.catalog.capabilities),
        topology=TopologyModel(
            stations=[StationModel(id=s.id, subchannels=s.subchannels, bandwidth_hz=s.bandwidth_hz,
                                   x=scenario.station_positions[s.id][0], y=scenario.station_positions[s.id][1])
                      for s in topo.stations],
            clouds=[CloudModel(id=c.id, capacity_hz=c.capacity_hz,
                               x=scenario.cloud_positions[c.id][0], y=scenario.cloud_positions[c.id][1])
                    for c in topo.clouds],
            station_cloud=topo.station_cloud,
        ),
        users=[
            UserModel(
                id=u.id, x=u.position[0], y=u.position[1], station=u.station, cloud=u.cloud,
                distance_m=u.distance_m, channel_gain=u.device.channel_gain, cpu_hz=u.device.cpu_hz,
                tx_power_w=u.device.tx_power_w, noise_w=u.device.noise_w,
                deadline_s=deadline_out(u.device.deadline_s), true_value=u.true_value,
                template=u.template, graph=TaskGraphModel.from_graph(u.graph),
                demand=DemandModel.from_demand(u.demand) if u.demand is not None else None,
            )
            for u in scenario.users
        ],
    )


def dumps(scenario: Scenario) -> str:
    return to_file(scenario).model_dump_json(indent=2)


def save(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(scenario), encoding="utf-8")


def _check_demand(u: UserModel, topo: Topology, catalog: VmCatalog) -> Demand:
    d = u.demand
    m_k, b_l = topo.subchannels(u.station), topo.capacity(u.cloud)
    if not 1 <= d.q <= m_k:
        raise InvariantViolation(f"user {u.id}: q*={d.q} outside 1..M_k={m_k}")
    if d.s not in catalog.types:
        raise InvariantViolation(f"user {u.id}: unknown VM type {d.s}")
    if catalog.capability(d.s) > b_l:
        raise InvariantViolation(f"user {u.id}: VM type {d.s} exceeds cloud {u.cloud} capacity")
    phi = resource_occupancy(d.q, d.s, m_k, b_l, catalog)
    if not math.isclose(phi, d.phi, rel_tol=1e-9):
        raise InvariantViolation(f"user {u.id}: phi={d.phi} does not match q*, s* ({phi})")
    return Demand(q=d.q, s=d.s, phi=phi)


def from_file(data: ScenarioFile) -> Scenario:
    if data.version != SCENARIO_VERSION:
        raise ParseError(f"scenario version {data.version}, expected {SCENARIO_VERSION}")
    try:
        catalog = VmCatalog(tuple(data.vm_hz))
        stations = tuple(Station(id=s.id, subchannels=s.subchannels, bandwidth_hz=s.bandwidth_hz)
                         for s in data.topology.stations)
        clouds = tuple(Cloud(id=c.id, capacity_hz=c.capacity_hz) for c in data.topology.clouds)
        topo = Topology(stations=stations, clouds=clouds, station_cloud=dict(data.topology.station_cloud),
                        associations={u.id: (u.station, u.cloud) for u in data.users})
    except (TopologyError, ValueError) as exc:
        raise InvariantViolation(str(exc)) from exc

    station_xy = {s.id: (s.x, s.y) for s in data.topology.stations}
    cloud_xy = {c.id: (c.x, c.y) for c in data.topology.clouds}
    station_ids = sorted(station_xy)
    cfg = data.config

    users = []
    for u in data.users:
        k_idx, d = nearest((u.x, u.y), [station_xy[k] for k in station_ids])
        if station_ids[k_idx] != u.station:
            raise InvariantViolation(f"user {u.id} is not associated with its closest station")
        if not math.isclose(d, u.distance_m, rel_tol=1e-9, abs_tol=1e-9):
            raise InvariantViolation(f"user {u.id}: distance {u.distance_m} does not match position")
        gain = channel_gain(d, cfg.path_loss_exp, cfg.min_distance_m)
        if not math.isclose(gain, u.channel_gain, rel_tol=1e-9):
            raise InvariantViolation(f"user {u.id}: channel gain does not follow d^-alpha")
        try:
            device = DeviceProfile(cpu_hz=u.cpu_hz, tx_power_w=u.tx_power_w, channel_gain=u.channel_gain,
                                   noise_w=u.noise_w, deadline_s=deadline_in(u.deadline_s))
            graph = u.graph.to_graph()
        except (GraphValidationError, ValueError) as exc:
            raise InvariantViolation(f"user {u.id}: {exc}") from exc
        demand = _check_demand(u, topo, catalog) if u.demand is not None else None
        users.append(UserSpec(id=u.id, position=(u.x, u.y), station=u.station, cloud=u.cloud,
                              distance_m=u.distance_m, device=device, template=u.template, graph=graph,
                              true_value=u.true_value, demand=demand))

    return Scenario(config=cfg, topology=topo, catalog=catalog, station_positions=station_xy,
                    cloud_positions=cloud_xy, users=tuple(users), seed=data.seed)


def loads(text: str) -> Scenario:
    try:
        data = ScenarioFile.model_validate_json(text)
    except ValidationError as exc:
        raise ParseError(f"malformed scenario file: {exc.error_count()} validation error(s)") from exc
    return from_file(data)


def load(path: str | Path) -> Scenario:
    return loads(Path(path).read_text(encoding="utf-8"))
