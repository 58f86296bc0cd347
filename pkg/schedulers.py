"""Builds the scheduler a configuration names."""
from typing import Callable

from loguru import logger

from scheduling.base import PortScheduler
from scheduling.baseline import (
    FifoScheduler,
    IdealFqScheduler,
    IdealSrptScheduler,
    StaticLasScheduler,
    search_static_thresholds,
    worst_thresholds,
)
from scheduling.policy import PolicySpec, get_policy
from scheduling.qcluster import QClusterScheduler
from utils.config import ClusterConfig, ExperimentConfig
from workload.flows import Flow


def resolve_cluster(config: ExperimentConfig, policy: PolicySpec) -> ClusterConfig:
    """Shared cluster settings with the scheduler's own overrides and the policy's default strategy."""
    s = config.scheduler
    overrides = {
        "threshold_rule": s.threshold_rule,
        "dataplane_mode": s.dataplane_mode,
        "control_plane_period": s.control_plane_period,
        "init_preset": s.init_preset,
    }
    merged = config.cluster.model_dump() | {k: v for k, v in overrides.items() if v is not None}
    merged["size_strategy"] = s.size_strategy or config.cluster.size_strategy or policy.size_strategy.value
    return ClusterConfig.model_validate(merged)


def qcluster(config: ExperimentConfig, flows: list[Flow]) -> PortScheduler:
    s = config.scheduler
    policy = get_policy(s.name)
    return QClusterScheduler(
        policy,
        resolve_cluster(config, policy),
        config.sketch,
        mtu=config.port.mtu,
        line_rate=config.port.line_rate,
        pda=policy.pda_default if s.pda is None else s.pda,
        pda_source=s.pda_source,
        weight_source=s.weight_source,
        deadline_order=s.deadline_order,
        deadline_queues=s.deadline_queues,
        name=s.display_name,
    )


def static_las(config: ExperimentConfig, flows: list[Flow]) -> PortScheduler:
    s = config.scheduler
    port = config.port
    if s.static_thresholds is not None:
        thresholds = s.static_thresholds
    elif s.static_preset == "worst":
        thresholds = worst_thresholds((f.size for f in flows), port.k, port.mtu)
    else:
        thresholds, mean_fct = search_static_thresholds(flows, port, config.horizon)
        logger.info("{}: tuned thresholds {} (mean FCT {:.6e}s)", s.display_name, thresholds, mean_fct)
    return StaticLasScheduler(thresholds, name=s.display_name)


def fifo(config: ExperimentConfig, flows: list[Flow]) -> PortScheduler:
    return FifoScheduler()


def ideal_fq(config: ExperimentConfig, flows: list[Flow]) -> PortScheduler:
    return IdealFqScheduler(config.port.line_rate)


def ideal_srpt(config: ExperimentConfig, flows: list[Flow]) -> PortScheduler:
    return IdealSrptScheduler()


BUILDERS: dict[str, Callable[[ExperimentConfig, list[Flow]], PortScheduler]] = {
    "QC-SRPT": qcluster,
    "QC-LAS": qcluster,
    "QC-FQ": qcluster,
    "QC-DDL": qcluster,
    "FIFO": fifo,
    "STATIC-LAS": static_las,
    "IDEAL-FQ": ideal_fq,
    "IDEAL-SRPT": ideal_srpt,
}


def build_scheduler(config: ExperimentConfig, flows: list[Flow]) -> PortScheduler:
    """
    Scheduler for one run.

    Args:
        config (ExperimentConfig): The run; ``config.scheduler.name`` picks the builder.
        flows (list[Flow]): The run's schedule; static presets derive their thresholds from it.

    Returns:
        PortScheduler: A fresh scheduler, named after the scheduler's display name.
    """
    scheduler = BUILDERS[config.scheduler.name](config, flows)
    scheduler.name = config.scheduler.display_name
    return scheduler
