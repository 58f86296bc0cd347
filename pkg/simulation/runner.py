"""One configured run: schedule, scheduler, simulation."""
from loguru import logger

from schedulers import build_scheduler
from simulation.packet import TraceLog
from simulation.port import simulate
from utils.config import ExperimentConfig
from workload.cdf import load_cdf
from workload.flows import Flow, generate_flows, import_schedule


def load_flows(config: ExperimentConfig) -> list[Flow]:
    """The run's flows: the replayed schedule if one is configured, a generated one otherwise."""
    w = config.workload
    if w.schedule:
        return import_schedule(w.schedule)
    return generate_flows(
        load_cdf(w.cdf),
        load=config.load,
        line_rate=config.port.line_rate,
        n_flows=w.n_flows,
        seed=config.seed,
        log_interpolation=w.log_interpolation,
        source_ports=config.port.source_ports,
        deadlines=w.deadlines,
        slack_mean=w.slack_mean,
        deadline_size_limit=w.deadline_size_limit,
    )


def run(config: ExperimentConfig, flows: list[Flow] | None = None) -> TraceLog:
    """
    Simulate one cell.

    Args:
        config (ExperimentConfig): The run.
        flows (list[Flow], optional): Use these flows instead of loading them.

    Returns:
        TraceLog: Packet and flow records plus port and scheduler counters.
    """
    log = logger.bind(cell=config.cell_id)
    if flows is None:
        flows = load_flows(config)
    scheduler = build_scheduler(config, flows)
    log.info("simulating {} flows at load {:.2f}", len(flows), config.load)
    trace = simulate(flows, config.port, scheduler, config.horizon)
    completed = sum(f.completed for f in trace.flows.values())
    log.info("done: {}/{} flows completed, {} drops", completed, len(flows), trace.stats["dropped"])
    return trace
