"""QCluster switch-scheduling simulator.

Usage:
  console.py run <config> [--output=<dir>] [--jobs=<n>] [--filter=<pattern>] [--log-level=<level>]
  console.py replay <schedule> <config> [--load=<load>] [--output=<dir>] [--jobs=<n>] [--log-level=<level>]
  console.py export-schedule <config> [--load=<load>] [--seed=<seed>] [--output=<file>] [--log-level=<level>]
  console.py pias-opt <config> [--load=<load>] [--seed=<seed>] [--log-level=<level>]
  console.py (-h | --help)
  console.py --version

Commands:
  run              Simulate every (scheduler, load, seed) cell of a sweep file.
  replay           Feed one exported flow schedule to every scheduler of a sweep
                   file and write per-flow paired FCTs.
  export-schedule  Write the flow schedule a cell would generate as CSV.
  pias-opt         Search static LAS thresholds for the lowest mean FCT.

Options:
  -h --help             Show this message.
  --version             Show the version.
  --output=<path>       Results directory (run, replay) or schedule file
                        (export-schedule). Defaults to $QCLUSTER_OUTPUT_DIR or
                        results/<sweep name>.
  --jobs=<n>            Cells simulated in parallel (default: $QCLUSTER_JOBS or 1).
  --filter=<pattern>    Only run cells whose id matches this glob, e.g. "QC-*/load-0.90/*".
  --load=<load>         Load of the cell to use (default: first load of the sweep).
  --seed=<seed>         Seed of the cell to use (default: first seed of the sweep).
  --log-level=<level>   TRACE, DEBUG, INFO, WARNING or ERROR (default: $QCLUSTER_LOG_LEVEL or INFO).
"""
import sys
from concurrent.futures import ProcessPoolExecutor
from fnmatch import fnmatch
from pathlib import Path
from typing import Any

import docopt
import pandas as pd
from loguru import logger

from metrics.flow_metrics import comparison_table, summary_table
from scheduling.baseline import search_static_thresholds
from simulation.runner import load_flows
from utils.config import ConfigError, ExperimentConfig, SweepConfig, load_sweep, output_dir, parallelism
from utils.log import configure_logging
from utils.run_cell import run_cell
from utils.trace_io import FLOWS_CSV, package_version, read_flows, write_frame
from workload.flows import ScheduleFormatError, export_schedule, import_schedule


def execute(cells: list[ExperimentConfig], root: Path, jobs: int, log_level: str | None) -> list[dict[str, Any]]:
    payloads = [c.model_dump(mode="json") for c in cells]
    logger.info("running {} cells with {} worker(s) into {}", len(cells), jobs, root)
    if jobs == 1:
        return [run_cell(p, str(root), log_level) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, payloads, [str(root)] * len(payloads), [log_level] * len(payloads)))


def report(results: list[dict[str, Any]], root: Path) -> int:
    """Write summary.csv and comparison.csv from the successful cells; 0 iff every cell succeeded."""
    failed = [r for r in results if r["status"] != "success"]
    rows = [r["metrics"] for r in results if r["status"] == "success"]
    if rows:
        summary = pd.DataFrame(rows)
        write_frame(summary, root / "summary.csv")
        write_frame(comparison_table(summary), root / "comparison.csv")
        print(summary_table(summary))
    for r in failed:
        logger.error("{}: {}", r["cell"], r["error_message"])
    logger.info("{} of {} cells succeeded", len(results) - len(failed), len(results))
    return 0 if not failed else 1


def pick_cell(sweep: SweepConfig, load: str | None, seed: str | None) -> list[ExperimentConfig]:
    """Cells of every scheduler at one load and seed."""
    load_value = float(load) if load is not None else sweep.loads[0]
    seed_value = int(seed) if seed is not None else sweep.seeds[0]
    base = sweep.model_copy(update={"loads": [load_value], "seeds": [seed_value]})
    return base.cells()


def paired_fct(results: list[dict[str, Any]]) -> pd.DataFrame:
    """Per-flow FCT under every scheduler, with deltas against the first one."""
    paired: pd.DataFrame | None = None
    labels = []
    for r in results:
        label = r["metrics"]["scheduler"]
        labels.append(label)
        flows = read_flows(Path(r["cell_dir"]) / FLOWS_CSV)[["flow_id", "size", "fct"]]
        flows = flows.rename(columns={"fct": f"fct_{label}"})
        paired = flows if paired is None else paired.merge(flows.drop(columns="size"), on="flow_id")
    base = labels[0]
    for label in labels[1:]:
        paired[f"fct_delta_{label}"] = paired[f"fct_{label}"] - paired[f"fct_{base}"]
    return paired


def cmd_run(args: dict[str, Any], log_level: str | None) -> int:
    sweep = load_sweep(args["<config>"])
    cells = sweep.cells()
    if args["--filter"]:
        cells = [c for c in cells if fnmatch(c.cell_id, args["--filter"])]
        if not cells:
            raise ConfigError(f"no cell matches {args['--filter']!r}")
    root = Path(args["--output"]) if args["--output"] else output_dir(Path("results") / sweep.name)
    jobs = int(args["--jobs"]) if args["--jobs"] else parallelism()
    return report(execute(cells, root, jobs, log_level), root)


def cmd_replay(args: dict[str, Any], log_level: str | None) -> int:
    schedule = Path(args["<schedule>"])
    flows = import_schedule(schedule)
    sweep = load_sweep(args["<config>"])
    cells = [
        c.model_copy(update={"workload": c.workload.model_copy(update={"schedule": str(schedule)})})
        for c in pick_cell(sweep, args["--load"], None)
    ]
    logger.info("replaying {} flows from {}", len(flows), schedule)
    root = Path(args["--output"]) if args["--output"] else output_dir(Path("results") / f"{sweep.name}-replay")
    jobs = int(args["--jobs"]) if args["--jobs"] else parallelism()
    results = execute(cells, root, jobs, log_level)
    status = report(results, root)
    succeeded = [r for r in results if r["status"] == "success"]
    if succeeded:
        write_frame(paired_fct(succeeded), root / "paired.csv")
    return status


def cmd_export_schedule(args: dict[str, Any]) -> int:
    sweep = load_sweep(args["<config>"])
    cell = pick_cell(sweep, args["--load"], args["--seed"])[0]
    flows = load_flows(cell)
    default = output_dir(Path("results") / sweep.name) / f"schedule-load-{cell.load:.2f}-seed-{cell.seed}.csv"
    path = export_schedule(flows, Path(args["--output"]) if args["--output"] else default)
    print(path)
    return 0


def cmd_pias_opt(args: dict[str, Any]) -> int:
    sweep = load_sweep(args["<config>"])
    cell = pick_cell(sweep, args["--load"], args["--seed"])[0]
    thresholds, mean_fct = search_static_thresholds(load_flows(cell), cell.port, cell.horizon)
    logger.info("best mean FCT {:.6e}s", mean_fct)
    print(f"static_thresholds = [{', '.join(map(str, thresholds))}]")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = docopt.docopt(__doc__, argv=argv, version=package_version())
    log_level = args["--log-level"]
    configure_logging(log_level)
    try:
        if args["run"]:
            return cmd_run(args, log_level)
        if args["replay"]:
            return cmd_replay(args, log_level)
        if args["export-schedule"]:
            return cmd_export_schedule(args)
        return cmd_pias_opt(args)
    except (ConfigError, ScheduleFormatError, ValueError) as e:
        logger.error("{}", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
