from pathlib import Path

import pytest

from conftest import experiment
from schedulers import build_scheduler, resolve_cluster
from scheduling.policy import get_policy
from utils.config import (
    JOBS_ENV,
    OUTPUT_DIR_ENV,
    ConfigError,
    ExperimentConfig,
    PortConfig,
    SchedulerConfig,
    load_sweep,
    output_dir,
    parallelism,
)

EXPERIMENTS = Path(__file__).resolve().parents[1] / "experiments"

SWEEP = """
name = "small"
loads = [0.5, 0.7, 0.9]
seeds = [1, 2]

[port]
k = 4

[workload]
cdf = "w4"
n_flows = 100

[[schedulers]]
name = "QC-LAS"

[[schedulers]]
name = "QC-LAS"
label = "QC-LAS-dataplane"
dataplane_mode = true

[[schedulers]]
name = "FIFO"
"""


def _write(tmp_path, text, name="sweep.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_sweep_expands_to_cells(tmp_path):
    sweep = load_sweep(_write(tmp_path, SWEEP))
    cells = sweep.cells()
    assert len(cells) == 18
    assert len({c.cell_id for c in cells}) == 18
    assert cells[0].cell_id == "QC-LAS/load-0.50/seed-1"
    assert all(c.cluster.k == 4 and c.port.k == 4 for c in cells)
    assert {c.workload.cdf for c in cells} == {"w4"}


@pytest.mark.parametrize(
    "text, message",
    [
        (SWEEP + "\n[cluster]\nk = 6\n", "differs from port.k"),
        (SWEEP.replace('name = "FIFO"', 'name = "WFQ"'), "invalid configuration"),
        (SWEEP.replace('label = "QC-LAS-dataplane"\n', ""), "labels must be unique"),
        (SWEEP + "\n[[schedulers]]\nname = \"STATIC-LAS\"\n", "static_thresholds or static_preset"),
        (SWEEP + "\n[[schedulers]]\nname = \"STATIC-LAS\"\nstatic_thresholds = [9000, 3000, 20000]\n", "nondecreasing"),
        (SWEEP + "\n[[schedulers]]\nname = \"STATIC-LAS\"\nstatic_thresholds = [3000]\n", "port.k - 1"),
        (SWEEP + "\n[cluster]\nalpha = 20.0\n", "must lie in"),
        (SWEEP + "\n[sketch]\nwidht = 100\n", "invalid configuration"),
        (SWEEP.replace("k = 4", "k = 4\nbuffer = 1000"), "must exceed the MTU"),
        ("loads = [0.5\n", "invalid TOML"),
    ],
)
def test_invalid_sweeps(tmp_path, text, message):
    with pytest.raises(ConfigError, match=message):
        load_sweep(_write(tmp_path, text))


def test_missing_sweep(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_sweep(tmp_path / "absent.toml")


@pytest.mark.parametrize("path", sorted(EXPERIMENTS.glob("*.toml")), ids=lambda p: p.stem)
def test_bundled_experiments_validate(path):
    sweep = load_sweep(path)
    assert sweep.name == path.stem
    assert sweep.cells()


def test_load_bounds():
    with pytest.raises(ValueError):
        ExperimentConfig(scheduler=SchedulerConfig(name="FIFO"), load=1.0)


def test_size_strategy_resolution():
    las = experiment("QC-LAS", k=4)
    assert resolve_cluster(las, get_policy("QC-LAS")).size_strategy == "proportional-cluster-size"
    assert resolve_cluster(experiment("QC-FQ", k=4), get_policy("QC-FQ")).size_strategy == "same-cluster-size"
    override = experiment("QC-LAS", k=4, size_strategy="same-cluster-size", threshold_rule="harmonic-mean")
    resolved = resolve_cluster(override, get_policy("QC-LAS"))
    assert resolved.size_strategy == "same-cluster-size"
    assert resolved.threshold_rule == "harmonic-mean"
    shared = las.model_copy(update={"cluster": las.cluster.model_copy(update={"size_strategy": "same-cluster-size"})})
    assert resolve_cluster(shared, get_policy("QC-LAS")).size_strategy == "same-cluster-size"


def test_disorder_avoidance_defaults_per_policy():
    assert build_scheduler(experiment("QC-LAS", k=4), []).pda
    assert build_scheduler(experiment("QC-DDL", k=8), []).pda
    assert not build_scheduler(experiment("QC-FQ", k=4), []).pda
    assert build_scheduler(experiment("QC-FQ", k=4, pda=True), []).pda
    assert not build_scheduler(experiment("QC-SRPT", k=4, pda=False), []).pda


def test_built_scheduler_carries_display_name():
    cfg = experiment("STATIC-LAS", k=3, label="mlfq", static_thresholds=[3000, 30000])
    scheduler = build_scheduler(cfg, [])
    assert scheduler.name == "mlfq"
    assert scheduler.thresholds == [3000, 30000]


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    monkeypatch.delenv(JOBS_ENV, raising=False)
    assert output_dir("results/x") == Path("results/x")
    assert parallelism() == 1
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    monkeypatch.setenv(JOBS_ENV, "3")
    assert output_dir("results/x") == tmp_path
    assert parallelism() == 3
    for bad in ("many", "0"):
        monkeypatch.setenv(JOBS_ENV, bad)
        with pytest.raises(ConfigError):
            parallelism()


def test_port_source_rate_defaults_to_line_rate():
    assert PortConfig().source_rate == PortConfig().line_rate
    assert PortConfig(access_rate=40e9).source_rate == 40e9
