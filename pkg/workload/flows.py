"""Flow schedules: Poisson arrivals, sizes and deadlines; CSV export and import."""
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from workload.cdf import SizeCdf, sample_flows

SCHEDULE_COLUMNS = ["flow_id", "size", "start", "deadline", "source_port"]


class ScheduleFormatError(ValueError):
    """Raised when a schedule CSV cannot be read back."""


@dataclass(frozen=True, slots=True)
class Flow:
    flow_id: int
    size: int
    start: float
    deadline: float | None = None
    source_port: int = 0


def arrival_rate(load: float, mean_size: float, line_rate: float) -> float:
    """Flows per second that offer ``load`` of ``line_rate`` (bits/s) with ``mean_size`` byte flows."""
    if not 0 < load < 1:
        raise ValueError(f"load must be in (0, 1), got {load}")
    return load * line_rate / (8.0 * mean_size)


def arrivals(load: float, mean_size: float, line_rate: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Start times of ``n`` flows with exponential inter-arrival gaps, first gap included."""
    rate = arrival_rate(load, mean_size, line_rate)
    return np.cumsum(rng.exponential(1.0 / rate, n))


def unloaded_fct(size: int, line_rate: float) -> float:
    return size * 8.0 / line_rate


def assign_deadlines(
    flows: list[Flow],
    rng: np.random.Generator,
    line_rate: float,
    slack_mean: float = 2.0,
    size_limit: int = 100_000,
) -> list[Flow]:
    """
    Give flows smaller than ``size_limit`` a deadline; larger flows get none.

    Args:
        flows (list[Flow]): Flows in any order.
        rng (np.random.Generator): Random source.
        line_rate (float): Bits per second used for the unloaded FCT.
        slack_mean (float): Mean of the exponential slack, in unloaded FCTs.
        size_limit (int): Flows of this size or more stay deadline-free.

    Returns:
        list[Flow]: New flow objects; deadline = start + unloaded FCT * (1 + Exp(slack_mean)).
    """
    slack = rng.exponential(slack_mean, len(flows))
    return [
        replace(f, deadline=f.start + unloaded_fct(f.size, line_rate) * (1.0 + s))
        if f.size < size_limit
        else replace(f, deadline=None)
        for f, s in zip(flows, slack)
    ]


def generate_flows(
    cdf: SizeCdf,
    load: float,
    line_rate: float,
    n_flows: int,
    seed: int,
    log_interpolation: bool = False,
    source_ports: int = 0,
    deadlines: bool = False,
    slack_mean: float = 2.0,
    deadline_size_limit: int = 100_000,
) -> list[Flow]:
    """A reproducible schedule: the same arguments always give the same flows."""
    size_seq, arrival_seq, deadline_seq = np.random.SeedSequence(seed).spawn(3)
    sizes = sample_flows(cdf, np.random.default_rng(size_seq), n_flows, log_interpolation)
    starts = arrivals(load, cdf.mean(log_interpolation), line_rate, np.random.default_rng(arrival_seq), n_flows)
    flows = [
        Flow(flow_id=i, size=int(size), start=float(start), source_port=i % source_ports if source_ports else 0)
        for i, (size, start) in enumerate(zip(sizes, starts))
    ]
    if deadlines:
        flows = assign_deadlines(
            flows, np.random.default_rng(deadline_seq), line_rate, slack_mean, deadline_size_limit
        )
    return flows


def export_schedule(flows: list[Flow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(f.flow_id, f.size, f.start, f.deadline, f.source_port) for f in flows], columns=SCHEDULE_COLUMNS
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def import_schedule(path: str | Path) -> list[Flow]:
    """
    Read a schedule written by ``export_schedule``.

    Raises:
        ScheduleFormatError: With the offending line number when a row is malformed.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as e:
        raise ScheduleFormatError(f"schedule not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ScheduleFormatError(f"{path}: {e}") from e
    missing = [c for c in SCHEDULE_COLUMNS if c not in frame.columns]
    if missing:
        raise ScheduleFormatError(f"{path}:1: missing columns {missing}")
    flows = []
    for offset, row in enumerate(frame.itertuples(index=False)):
        # header is line 1
        lineno = offset + 2
        try:
            flow = Flow(
                flow_id=int(row.flow_id),
                size=int(row.size),
                start=float(row.start),
                deadline=float(row.deadline) if row.deadline != "" else None,
                source_port=int(row.source_port),
            )
        except ValueError as e:
            raise ScheduleFormatError(f"{path}:{lineno}: {e}") from e
        if flow.size <= 0 or flow.start < 0:
            raise ScheduleFormatError(f"{path}:{lineno}: size must be positive and start nonnegative")
        flows.append(flow)
    if len({f.flow_id for f in flows}) != len(flows):
        raise ScheduleFormatError(f"{path}: duplicate flow_id")
    return flows
