"""Pydantic models for scenario files, CLI outputs and experiment specs."""

import math
from typing import Literal

from pydantic import BaseModel, Field, field_validator

from mecsim.offload import Demand, Location, PartitionPlan
from mecsim.taskgraph import TaskGraph, to_dict, validate
from mecsim.templates import AREA_M, MIN_DISTANCE_M, N_CLOUDS, N_STATIONS, N_USERS

SCENARIO_VERSION = 1

ADMISSION_METHODS = ("greedy", "exact", "ce", "coarse", "random")
OFFLOAD_METHODS = ("ours", "all_offload", "odessa")
SWEEP_VARIABLES = ("n_users", "n_clouds", "claimed_value")


def deadline_out(deadline_s: float) -> float | None:
    return None if math.isinf(deadline_s) else deadline_s


def deadline_in(deadline_s: float | None) -> float:
    return math.inf if deadline_s is None else deadline_s


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class ScenarioConfig(BaseModel):
    n_users: int = Field(default=N_USERS, ge=0, le=100_000)
    n_stations: int = Field(default=N_STATIONS, ge=0, le=10_000)
    n_clouds: int = Field(default=N_CLOUDS, ge=1, le=1_000)
    area_m: float = Field(default=AREA_M, gt=0)
    subchannels: int = Field(default=15, ge=1)              # M_k
    bandwidth_hz: float = Field(default=1e6, gt=0)          # w
    tx_power_w: float = Field(default=0.1, gt=0)            # 100 mW
    noise_w: float = Field(default=1e-13, gt=0)             # -100 dBm
    path_loss_exp: float = Field(default=4.0, gt=0)         # alpha
    min_distance_m: float = Field(default=MIN_DISTANCE_M, gt=0)
    deadlines_s: list[float] = Field(default=[0.3, 0.5, 1.0, 2.0, 5.0], min_length=1)
    cpu_hz: list[float] = Field(default=[0.5e9, 0.8e9, 1.0e9], min_length=1)
    vm_hz: list[float] = Field(default=[5e9, 10e9, 20e9], min_length=1)
    cloud_capacity_hz: list[float] = Field(default=[50e9, 100e9, 200e9], min_length=1)
    valuations: list[float] = Field(default=[float(v) for v in range(1, 21)], min_length=1)
    templates: dict[str, float] = Field(default={"face_like": 0.5, "qr_like": 0.5}, min_length=1)
    template_params: dict[str, dict] = Field(default_factory=dict)
    seed: int = Field(default=0, ge=0)

    @field_validator("deadlines_s", "cpu_hz", "vm_hz", "cloud_capacity_hz")
    @classmethod
    def _positive(cls, values: list[float]) -> list[float]:
        if any(not v > 0 for v in values):
            raise ValueError("all values must be > 0")
        return values

    @field_validator("valuations")
    @classmethod
    def _non_negative(cls, values: list[float]) -> list[float]:
        if any(not (v >= 0 and math.isfinite(v)) for v in values):
            raise ValueError("valuations must be finite and >= 0")
        return values

    @field_validator("templates")
    @classmethod
    def _weights(cls, weights: dict[str, float]) -> dict[str, float]:
        if any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
            raise ValueError("template weights must be >= 0 with a positive total")
        return weights


class CrossEntropyParams(BaseModel):
    population: int = Field(default=200, ge=2, le=100_000)
    elite_fraction: float = Field(default=0.1, gt=0, le=1)
    smoothing: float = Field(default=0.7, ge=0, le=1)
    iterations: int = Field(default=50, ge=1, le=10_000)
    seed: int = Field(default=0, ge=0)


class ExperimentSpec(BaseModel):
    sweep: str = "n_users"
    values: list[float] = Field(..., min_length=1)
    methods: list[str] = Field(default=["greedy", "ce", "coarse", "random"], min_length=1)
    seeds: list[int] = Field(default=[0], min_length=1)
    baseline: str = "auto"          # "auto" = exact when feasible, else ce
    pricing_mode: Literal["definitional", "literal"] = "definitional"
    exact_cap: int = Field(default=22, ge=1, le=40)
    config: ScenarioConfig = Field(default_factory=ScenarioConfig)
    ce: CrossEntropyParams = Field(default_factory=CrossEntropyParams)

    @field_validator("sweep")
    @classmethod
    def _known_sweep(cls, sweep: str) -> str:
        if sweep not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep {sweep!r}, expected one of {SWEEP_VARIABLES}")
        return sweep

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: list[str]) -> list[str]:
        unknown = [m for m in methods if m not in ADMISSION_METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}, expected a subset of {ADMISSION_METHODS}")
        return methods

    @field_validator("baseline")
    @classmethod
    def _known_baseline(cls, baseline: str) -> str:
        if baseline != "auto" and baseline not in ADMISSION_METHODS:
            raise ValueError(f"unknown baseline {baseline!r}")
        return baseline


# ---------------------------------------------------------------------------
# Task graphs and per-user results
# ---------------------------------------------------------------------------

class ComponentModel(BaseModel):
    id: int
    cycles: float
    label: str | None = None


class EdgeModel(BaseModel):
    src: int
    dst: int
    bits: float


class TaskGraphModel(BaseModel):
    components: list[ComponentModel]
    edges: list[EdgeModel]
    output: int

    @classmethod
    def from_graph(cls, graph: TaskGraph) -> "TaskGraphModel":
        return cls.model_validate(to_dict(graph))

    def to_graph(self) -> TaskGraph:
        return validate(self.model_dump(exclude_none=True))


class PartitionPlanModel(BaseModel):
    placement: dict[int, Location]
    residual_delay: dict[int, float]
    total_delay: float

    @classmethod
    def from_plan(cls, plan: PartitionPlan) -> "PartitionPlanModel":
        return cls(placement=plan.placement, residual_delay=plan.residual_delay,
                   total_delay=plan.total_delay)


class DemandModel(BaseModel):
    q: int
    s: int
    phi: float

    @classmethod
    def from_demand(cls, demand: Demand) -> "DemandModel":
        return cls(q=demand.q, s=demand.s, phi=demand.phi)


class DemandOutcome(BaseModel):
    user: int
    status: Literal["demand", "no_offload_needed", "infeasible"]
    demand: DemandModel | None = None
    delay_s: float | None = None   # local delay or best achievable delay


# ---------------------------------------------------------------------------
# Scenario file
# ---------------------------------------------------------------------------

class StationModel(BaseModel):
    id: int
    subchannels: int
    bandwidth_hz: float
    x: float
    y: float


class CloudModel(BaseModel):
    id: int
    capacity_hz: float
    x: float
    y: float


class TopologyModel(BaseModel):
    stations: list[StationModel]
    clouds: list[CloudModel]
    station_cloud: dict[int, int]


class UserModel(BaseModel):
    id: int
    x: float
    y: float
    station: int
    cloud: int
    distance_m: float
    channel_gain: float
    cpu_hz: float
    tx_power_w: float
    noise_w: float
    deadline_s: float | None       # null = unbounded
    true_value: float
    template: str
    graph: TaskGraphModel
    demand: DemandModel | None = None


class ScenarioFile(BaseModel):
    version: int
    seed: int
    config: ScenarioConfig
    vm_hz: list[float]
    topology: TopologyModel
    users: list[UserModel]


# ---------------------------------------------------------------------------
# Market and oracle outputs
# ---------------------------------------------------------------------------

class AllocationModel(BaseModel):
    winners: list[int]
    payments: dict[int, float]
    welfare_bid: float
    welfare_true: float
    rank_order: list[int]
    pricing_mode: str | None = None
    revenue: float = 0.0


class OracleReportModel(BaseModel):
    method: str
    welfare: float
    winners: list[int]
    runtime_s: float
    exact: bool
    fractional: dict[int, float] | None = None


class ExperimentRow(BaseModel):
    sweep: str
    value: float
    method: str
    seed: int
    n_bidders: int
    welfare_bid: float
    welfare_true: float
    normalized_welfare: float
    baseline: str
    occupancy: float
    revenue: float
    runtime_s: float
    status: str = "ok"
