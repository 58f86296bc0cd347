"""Evaluation metrics computed from persisted traces.

Every function reads the frames written by ``utils.trace_io`` (flow rows,
packet rows with ``departure`` as float and a ``dropped`` flag, threshold
history rows) so a metric can always be recomputed from disk.
"""
import math
import re
from typing import Any, Sequence

import numpy as np
import pandas as pd

from workload.cdf import SizeBuckets

BUCKETS = ("small", "middle", "large")
_ASSIGNED = re.compile(r"assigned_\d+")


def nearest_rank(values: Sequence[float] | np.ndarray, percentile: float = 99.0) -> float:
    """Nearest-rank percentile: the value of rank ``floor(p * n / 100) + 1``, clamped to ``n``."""
    ordered = np.sort(np.asarray(values, dtype=float))
    if not ordered.size:
        raise ValueError("percentile of an empty sample")
    rank = min(math.floor(percentile * ordered.size / 100) + 1, ordered.size)
    return float(ordered[rank - 1])


def fct_stats(flows: pd.DataFrame, buckets: SizeBuckets) -> dict[str, dict[str, float]]:
    """
    Mean and p99 FCT of completed flows, overall and per size bucket.

    Args:
        flows (pd.DataFrame): Flow rows; incomplete flows have a missing ``fct``.
        buckets (SizeBuckets): Size classes of the workload.

    Returns:
        dict: ``{"all" | "small" | "middle" | "large": {"count", "mean", "p99"}}``.
        Buckets without a completed flow are absent.
    """
    done = flows.dropna(subset=["fct"])
    labels = done["size"].map(buckets.label)
    groups = [("all", done)] + [(name, done[labels == name]) for name in BUCKETS]
    return {
        name: {
            "count": len(group),
            "mean": float(group["fct"].mean()),
            "p99": nearest_rank(group["fct"].to_numpy()),
        }
        for name, group in groups
        if not group.empty
    }


def jain_index(throughputs: Sequence[float] | np.ndarray) -> float:
    """(sum x)^2 / (n * sum x^2); raises ValueError when undefined."""
    x = np.asarray(throughputs, dtype=float)
    if not x.size:
        raise ValueError("Jain's index needs at least one value")
    if (x < 0).any():
        raise ValueError("throughputs must be nonnegative")
    total = x.sum()
    if total == 0:
        raise ValueError("Jain's index is undefined when every throughput is zero")
    return float(total**2 / (x.size * np.square(x).sum()))


def throughput_groups(flows: pd.DataFrame) -> pd.Series:
    """Mean throughput (bits/s) of completed flows grouped by ``floor(log10(size))``."""
    done = flows.dropna(subset=["fct"])
    done = done[done["fct"] > 0]
    throughput = done["size"] * 8.0 / done["fct"]
    magnitude = np.floor(np.log10(done["size"].astype(float))).astype(int)
    return throughput.groupby(magnitude).mean()


def app_throughput(flows: pd.DataFrame) -> float | None:
    """Fraction of deadline flows that met their deadline; None without deadline flows."""
    with_deadline = flows[flows["deadline"].notna()]
    if with_deadline.empty:
        return None
    return float(with_deadline["met"].fillna(0).astype(float).sum() / len(with_deadline))


def disorder_count(packets: pd.DataFrame) -> tuple[pd.Series, int]:
    """
    Out-of-order deliveries per flow.

    A delivered packet is out of order when its flow already delivered a higher
    sequence number. Gaps left by drops do not count.

    Returns:
        tuple[pd.Series, int]: Count per flow (flows that delivered anything) and the total.
    """
    delivered = packets[packets["departure"].notna()].sort_values("departure", kind="stable")
    prior_max = delivered.groupby("flow_id")["seq"].cummax().groupby(delivered["flow_id"]).shift(1)
    late = delivered["seq"] < prior_max
    per_flow = late.groupby(delivered["flow_id"]).sum().astype(int)
    return per_flow, int(per_flow.sum())


def assignment_rsd(thresholds: pd.DataFrame | None) -> float | None:
    """Relative standard deviation of per-queue assignments over the final third of the history."""
    if thresholds is None or len(thresholds) < 3:
        return None
    columns = [c for c in thresholds.columns if _ASSIGNED.fullmatch(c)]
    if not columns:
        return None
    start = max(2 * len(thresholds) // 3 - 1, 0)
    counts = thresholds[columns].iloc[-1].astype(float) - thresholds[columns].iloc[start].astype(float)
    mean = counts.mean()
    if mean <= 0:
        return None
    return float(counts.std(ddof=0) / mean)


def summarize(
    packets: pd.DataFrame,
    flows: pd.DataFrame,
    thresholds: pd.DataFrame | None,
    stats: dict[str, Any],
    buckets: SizeBuckets,
) -> dict[str, Any]:
    """One flat metrics row for a cell; absent metrics are None."""
    row: dict[str, Any] = {
        "n_flows": len(flows),
        "completed": int(flows["fct"].notna().sum()),
    }
    fct = fct_stats(flows, buckets)
    for name in ("all", *BUCKETS):
        prefix = "" if name == "all" else f"{name}_"
        row[f"{prefix}fct_mean"] = fct[name]["mean"] if name in fct else None
        row[f"{prefix}fct_p99"] = fct[name]["p99"] if name in fct else None
    groups = throughput_groups(flows)
    try:
        row["jain"] = jain_index(groups.to_numpy())
    except ValueError:
        row["jain"] = None
    row["app_throughput"] = app_throughput(flows)
    row["disorder"] = disorder_count(packets)[1]
    row["drops"] = int(packets["dropped"].sum())
    row["ecn_marked"] = int(packets["ecn_marked"].sum())
    row["unsound_flowlets"] = stats.get("unsound_flowlets")
    row["assignment_rsd"] = assignment_rsd(thresholds)
    return row


FCT_COLUMNS = [f"{prefix}fct_{stat}" for prefix in ("", "small_", "middle_", "large_") for stat in ("mean", "p99")]


def comparison_table(summary: pd.DataFrame) -> pd.DataFrame:
    """Seed-averaged FCT columns per scheduler and load, one row per (scheduler, load)."""
    columns = [c for c in FCT_COLUMNS + ["jain", "app_throughput", "disorder"] if c in summary.columns]
    numeric = summary[["scheduler", "load", *columns]].copy()
    numeric[columns] = numeric[columns].apply(pd.to_numeric, errors="coerce")
    return numeric.groupby(["scheduler", "load"], sort=True)[columns].mean().reset_index()


def summary_table(summary: pd.DataFrame) -> str:
    """Human-readable table of the headline metrics."""
    columns = [
        c
        for c in ("scheduler", "load", "seed", "fct_mean", "small_fct_mean", "small_fct_p99", "large_fct_mean", "jain", "app_throughput", "disorder", "drops")
        if c in summary.columns
    ]
    return summary[columns].to_string(index=False, float_format=lambda v: f"{v:.4g}", na_rep="-")
