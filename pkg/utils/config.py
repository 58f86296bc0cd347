"""Experiment configuration schema.

A sweep is one TOML file: scalar sections ``[port]``, ``[sketch]``,
``[cluster]`` and ``[workload]``, the sweep axes ``loads`` and ``seeds``, and
one ``[[schedulers]]`` table per compared scheduler. Example::

    name = "websearch-las"
    loads = [0.5, 0.7, 0.9]
    seeds = [1, 2, 3]

    [port]
    k = 8
    line_rate = 10e9

    [workload]
    cdf = "websearch"
    n_flows = 2000

    [[schedulers]]
    name = "QC-LAS"

    [[schedulers]]
    name = "STATIC-LAS"
    static_preset = "worst"

Every cell of the cross product becomes one ``ExperimentConfig``, which is the
complete description of a single simulation run.
"""
import os
import tomllib
from itertools import product
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

MTU = 1500
DEFAULT_LINE_RATE = 10e9

OUTPUT_DIR_ENV = "QCLUSTER_OUTPUT_DIR"
JOBS_ENV = "QCLUSTER_JOBS"

SchedulerName = Literal[
    "QC-SRPT", "QC-LAS", "QC-FQ", "QC-DDL",
    "FIFO", "STATIC-LAS", "IDEAL-FQ", "IDEAL-SRPT",
]
SizeStrategyName = Literal["same-cluster-size", "proportional-cluster-size"]
ThresholdRuleName = Literal["adaptive", "arithmetic-mean", "geometric-mean", "harmonic-mean"]


class ConfigError(ValueError):
    """Raised when a configuration file or override cannot be used."""


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SketchConfig(_Frozen):
    depth: int = Field(3, ge=1)
    width: int = Field(2300, ge=1)
    delta_t_message: float = Field(5e-3, gt=0)
    delta_t_flowlet: float = Field(5e-4, gt=0)
    seed: int = 0


class ClusterConfig(_Frozen):
    k: int = Field(8, ge=2)
    # None: the policy's own strategy
    size_strategy: SizeStrategyName | None = None
    threshold_rule: ThresholdRuleName = "adaptive"
    alpha: float = Field(1.0, gt=0)
    alpha_step: float = Field(0.05, gt=0)
    alpha_min: float = Field(0.125, gt=0)
    alpha_max: float = Field(8.0, gt=0)
    imbalance_tolerance: float = Field(1.25, ge=1.0)
    # None: decayed assignments for same-cluster-size, occupancy otherwise
    size_measure: Literal["occupancy", "decayed-assignments"] | None = None
    control_interval: float = Field(100e-6, gt=0)
    weight_decay: float = Field(0.5, gt=0, le=1)
    dataplane_mode: bool = False
    control_plane_period: float = Field(1e-3, ge=0)
    init_preset: Literal["ladder", "low", "middle", "high", "split"] = "ladder"
    initial_weight: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _alpha_in_bounds(self) -> "ClusterConfig":
        if not self.alpha_min <= self.alpha <= self.alpha_max:
            raise ValueError(
                f"alpha={self.alpha} must lie in [{self.alpha_min}, {self.alpha_max}]"
            )
        return self


class PortConfig(_Frozen):
    k: int = Field(8, ge=2)
    line_rate: float = Field(DEFAULT_LINE_RATE, gt=0)
    buffer: int = Field(1_000_000, gt=0)
    ecn_threshold: int | None = Field(None, gt=0)
    mtu: int = Field(MTU, gt=0)
    access_rate: float | None = Field(None, gt=0)
    source_ports: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _buffer_holds_a_packet(self) -> "PortConfig":
        if self.buffer <= self.mtu:
            raise ValueError(f"buffer ({self.buffer}B) must exceed the MTU ({self.mtu}B)")
        return self

    @property
    def source_rate(self) -> float:
        return self.access_rate or self.line_rate


class WorkloadConfig(_Frozen):
    cdf: str = "websearch"
    n_flows: int = Field(1000, ge=1)
    log_interpolation: bool = False
    deadlines: bool = False
    deadline_size_limit: int = Field(100_000, gt=0)
    slack_mean: float = Field(2.0, gt=0)
    schedule: str | None = None


class SchedulerConfig(_Frozen):
    name: SchedulerName
    label: str | None = None
    # None: the policy's default
    pda: bool | None = None
    pda_source: Literal["sketch", "exact"] = "sketch"
    weight_source: Literal["sketch", "exact"] = "sketch"
    size_strategy: SizeStrategyName | None = None
    threshold_rule: ThresholdRuleName | None = None
    dataplane_mode: bool | None = None
    control_plane_period: float | None = Field(None, ge=0)
    init_preset: Literal["ladder", "low", "middle", "high", "split"] | None = None
    static_thresholds: list[int] | None = None
    static_preset: Literal["worst", "opt"] | None = None
    deadline_order: Literal["clustered", "edf"] = "clustered"
    deadline_queues: int | None = Field(None, ge=1)

    @property
    def display_name(self) -> str:
        return self.label or self.name

    @model_validator(mode="after")
    def _static_needs_thresholds(self) -> "SchedulerConfig":
        if self.name == "STATIC-LAS" and self.static_thresholds is None and self.static_preset is None:
            raise ValueError("STATIC-LAS needs static_thresholds or static_preset")
        if self.static_thresholds is not None and sorted(self.static_thresholds) != self.static_thresholds:
            raise ValueError("static_thresholds must be nondecreasing")
        return self


def _inherit_queue_count(data: Any) -> Any:
    """Default ``cluster.k`` to ``port.k`` so the queue count is written once."""
    if isinstance(data, dict):
        port = data.get("port") or {}
        port_k = port.k if isinstance(port, PortConfig) else port.get("k", PortConfig().k)
        cluster = data.get("cluster") or {}
        if isinstance(cluster, dict) and "k" not in cluster:
            data = {**data, "cluster": {**cluster, "k": port_k}}
    return data


def _check_queue_counts(port: PortConfig, cluster: ClusterConfig, schedulers: list[SchedulerConfig]) -> None:
    if cluster.k != port.k:
        raise ValueError(f"cluster.k={cluster.k} differs from port.k={port.k}")
    for s in schedulers:
        thresholds = s.static_thresholds
        if thresholds is not None and len(thresholds) != port.k - 1:
            raise ValueError(
                f"{s.display_name}: static_thresholds needs port.k - 1 = {port.k - 1} entries, got {len(thresholds)}"
            )


class ExperimentConfig(_Frozen):
    """Full description of one simulation run."""

    name: str = "experiment"
    scheduler: SchedulerConfig
    load: float = Field(gt=0, lt=1)
    seed: int = 0
    port: PortConfig = PortConfig()
    sketch: SketchConfig = SketchConfig()
    cluster: ClusterConfig = ClusterConfig()
    workload: WorkloadConfig = WorkloadConfig()
    horizon: float | None = Field(None, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _inherit_k(cls, data: Any) -> Any:
        return _inherit_queue_count(data)

    @model_validator(mode="after")
    def _queue_counts_agree(self) -> "ExperimentConfig":
        _check_queue_counts(self.port, self.cluster, [self.scheduler])
        return self

    @property
    def cell_id(self) -> str:
        return f"{self.scheduler.display_name}/load-{self.load:.2f}/seed-{self.seed}"


class SweepConfig(_Frozen):
    """A cross product of schedulers, loads and seeds sharing one port and workload."""

    name: str = "sweep"
    schedulers: list[SchedulerConfig] = Field(min_length=1)
    loads: list[float] = Field(min_length=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    port: PortConfig = PortConfig()
    sketch: SketchConfig = SketchConfig()
    cluster: ClusterConfig = ClusterConfig()
    workload: WorkloadConfig = WorkloadConfig()
    horizon: float | None = Field(None, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _inherit_k(cls, data: Any) -> Any:
        return _inherit_queue_count(data)

    @model_validator(mode="after")
    def _labels_unique(self) -> "SweepConfig":
        labels = [s.display_name for s in self.schedulers]
        if len(set(labels)) != len(labels):
            raise ValueError(f"scheduler labels must be unique, got {labels}")
        _check_queue_counts(self.port, self.cluster, self.schedulers)
        return self

    def cells(self) -> list[ExperimentConfig]:
        shared = {
            "name": self.name,
            "port": self.port,
            "sketch": self.sketch,
            "cluster": self.cluster,
            "workload": self.workload,
            "horizon": self.horizon,
        }
        return [
            ExperimentConfig(scheduler=scheduler, load=load, seed=seed, **shared)
            for scheduler, load, seed in product(self.schedulers, self.loads, self.seeds)
        ]


def load_sweep(path: str | Path) -> SweepConfig:
    """
    Read and validate a sweep configuration file.

    Args:
        path (str | Path): TOML file following the schema in this module.

    Returns:
        SweepConfig: The validated sweep.

    Raises:
        ConfigError: If the file is missing, is not TOML, or fails validation.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
        return SweepConfig.model_validate(raw)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid configuration:\n{e}") from e


def output_dir(default: str | Path) -> Path:
    return Path(os.getenv(OUTPUT_DIR_ENV) or default)


def parallelism(default: int = 1) -> int:
    value = os.getenv(JOBS_ENV)
    if not value:
        return default
    try:
        jobs = int(value)
    except ValueError as e:
        raise ConfigError(f"{JOBS_ENV} must be an integer, got {value!r}") from e
    if jobs < 1:
        raise ConfigError(f"{JOBS_ENV} must be >= 1, got {jobs}")
    return jobs
