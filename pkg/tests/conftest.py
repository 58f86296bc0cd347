from pathlib import Path

import pytest

from simulation.packet import Packet
from utils.config import ClusterConfig, ExperimentConfig, PortConfig, SchedulerConfig, SketchConfig, WorkloadConfig
from workload.cdf import SizeCdf
from workload.flows import generate_flows

# heavy-tailed but small enough for many quick runs
TEST_CDF = SizeCdf("test-heavy", (1000, 5000, 20000, 100000, 300000), (0.3, 0.6, 0.8, 0.95, 1.0))


def make_packet(flow_id=1, seq=0, size=1500, arrival=0.0, flow_size=None, deadline=None) -> Packet:
    return Packet(flow_id=flow_id, seq=seq, size=size, arrival=arrival, flow_size=flow_size, deadline=deadline)


def cluster_cfg(**overrides) -> ClusterConfig:
    values = {"k": 4, "size_strategy": "same-cluster-size"} | overrides
    return ClusterConfig(**values)


def experiment(name: str, load: float = 0.8, seed: int = 1, k: int = 8, **scheduler) -> ExperimentConfig:
    return ExperimentConfig(
        scheduler=SchedulerConfig(name=name, **scheduler),
        load=load,
        seed=seed,
        port=PortConfig(k=k),
        sketch=SketchConfig(),
        workload=WorkloadConfig(cdf="test-heavy", n_flows=200),
    )


def sample_schedule(load=0.8, seed=1, n_flows=200, **kwargs):
    return generate_flows(TEST_CDF, load=load, line_rate=10e9, n_flows=n_flows, seed=seed, **kwargs)


@pytest.fixture
def cdf_file(tmp_path: Path) -> Path:
    path = tmp_path / "test-heavy.cdf"
    path.write_text(
        "# test workload\n" + "".join(f"{s:g}\t{p}\n" for s, p in zip(TEST_CDF.sizes, TEST_CDF.probs))
    )
    return path
