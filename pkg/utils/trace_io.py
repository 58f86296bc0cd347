"""On-disk layout of a cell: trace CSVs, threshold history, manifest, metrics."""
import json
import tomllib
from pathlib import Path
from typing import Any

import pandas as pd

from simulation.packet import DROP, TraceLog
from utils.config import ExperimentConfig

PACKETS_CSV = "trace_packets.csv"
FLOWS_CSV = "trace_flows.csv"
THRESHOLDS_CSV = "thresholds.csv"
METRICS_CSV = "metrics.csv"
MANIFEST_JSON = "manifest.json"

PYPROJECT = Path(__file__).resolve().parents[1] / "pyproject.toml"


def package_version() -> str:
    try:
        with PYPROJECT.open("rb") as fh:
            return tomllib.load(fh)["project"]["version"]
    except (FileNotFoundError, KeyError):
        return "unknown"


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_trace(trace: TraceLog, cell_dir: Path) -> None:
    write_frame(trace.packet_frame(), cell_dir / PACKETS_CSV)
    write_frame(trace.flow_frame(), cell_dir / FLOWS_CSV)
    if trace.threshold_columns:
        write_frame(trace.threshold_frame(), cell_dir / THRESHOLDS_CSV)


def write_manifest(cell_dir: Path, config: ExperimentConfig, trace: TraceLog) -> Path:
    """Resolved configuration, package version, run counters and the trace digest."""
    manifest = {
        "cell": config.cell_id,
        "version": package_version(),
        "config": config.model_dump(mode="json"),
        "stats": trace.stats,
        "trace_sha256": trace.digest(),
    }
    path = cell_dir / MANIFEST_JSON
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(cell_dir: Path) -> dict[str, Any]:
    return json.loads((cell_dir / MANIFEST_JSON).read_text())


def read_packets(path: Path) -> pd.DataFrame:
    """Packet rows with ``departure`` as float (NaN when dropped or still queued) and a ``dropped`` flag."""
    frame = pd.read_csv(path, dtype={"departure": str})
    dropped = frame["departure"] == DROP
    frame["departure"] = pd.to_numeric(frame["departure"].where(~dropped))
    frame["dropped"] = dropped
    return frame


def read_flows(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def read_thresholds(path: Path) -> pd.DataFrame | None:
    return pd.read_csv(path) if path.is_file() else None
