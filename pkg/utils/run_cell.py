from pathlib import Path
from typing import Any

import pandas as pd
from loguru import logger

from metrics.flow_metrics import summarize
from simulation.runner import run
from utils.config import ExperimentConfig
from utils.log import configure_logging
from utils.trace_io import (
    FLOWS_CSV,
    METRICS_CSV,
    PACKETS_CSV,
    THRESHOLDS_CSV,
    read_flows,
    read_manifest,
    read_packets,
    read_thresholds,
    write_frame,
    write_manifest,
    write_trace,
)
from workload.cdf import SizeBuckets


def cell_metrics(cell_dir: Path) -> dict[str, Any]:
    """Metrics row of a finished cell, recomputed from its files."""
    manifest = read_manifest(cell_dir)
    config = ExperimentConfig.model_validate(manifest["config"])
    row = {
        "scheduler": config.scheduler.display_name,
        "load": config.load,
        "seed": config.seed,
    }
    row |= summarize(
        read_packets(cell_dir / PACKETS_CSV),
        read_flows(cell_dir / FLOWS_CSV),
        read_thresholds(cell_dir / THRESHOLDS_CSV),
        manifest["stats"],
        SizeBuckets.for_workload(config.workload.cdf),
    )
    return row


def run_cell(config_data: dict[str, Any], root: str, log_level: str | None = None) -> dict[str, Any]:
    """
    Run one cell and persist it under ``root/<cell id>``.

    Takes plain data so it can cross a process boundary.

    Args:
        config_data (dict): ``ExperimentConfig.model_dump(mode="json")``.
        root (str): Results directory of the sweep.
        log_level (str, optional): Level for this worker's log sink.

    Returns:
        dict: ``{"status": "success", "cell", "cell_dir", "metrics"}`` or
        ``{"status": "error", "cell", "error_message"}``.
    """
    configure_logging(log_level)
    cell = config_data.get("scheduler", {}).get("label") or config_data.get("scheduler", {}).get("name", "?")
    try:
        config = ExperimentConfig.model_validate(config_data)
        cell = config.cell_id
        cell_dir = Path(root) / cell
        trace = run(config)
        write_trace(trace, cell_dir)
        write_manifest(cell_dir, config, trace)
        row = cell_metrics(cell_dir)
        write_frame(pd.DataFrame([row]), cell_dir / METRICS_CSV)
        return {"status": "success", "cell": cell, "cell_dir": str(cell_dir), "metrics": row}
    except Exception as e:
        logger.bind(cell=cell).exception("cell failed")
        return {
            "status": "error",
            "cell": cell,
            "error_message": f"Failed to run cell {cell}: {str(e)}",
        }
