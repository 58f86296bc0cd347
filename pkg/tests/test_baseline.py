import math
from bisect import bisect_right
from itertools import permutations

import numpy as np
import pytest

from conftest import make_packet, sample_schedule
from scheduling.baseline import (
    FifoScheduler,
    IdealFqScheduler,
    IdealSrptScheduler,
    StaticLasScheduler,
    bytes_sent_samples,
    geometric_ladder,
    search_static_thresholds,
    worst_thresholds,
)
from scheduling.policy import MissingFlowSizeError
from simulation.port import flow_packets, simulate
from utils.config import PortConfig
from workload.flows import Flow

LINE_RATE = 10e9
MTU_TIME = 1500 * 8 / LINE_RATE


def test_fifo_keeps_arrival_order():
    scheduler = FifoScheduler()
    for i in range(5):
        scheduler.enqueue(make_packet(flow_id=i % 2, seq=i), 0.0)
    assert [scheduler.dequeue(0.0).seq for _ in range(5)] == list(range(5))
    assert scheduler.dequeue(0.0) is None


def test_static_las_demotes_on_bytes_sent():
    scheduler = StaticLasScheduler([3000, 6000])
    packets = [make_packet(seq=i) for i in range(5)]
    for p in packets:
        scheduler.enqueue(p, 0.0)
    assert [p.enqueued_queue for p in packets] == [0, 0, 1, 1, 2]
    assert scheduler.stats() == {"static_thresholds": "3000;6000"}
    with pytest.raises(ValueError):
        StaticLasScheduler([6000, 3000])


def test_bytes_sent_samples():
    assert bytes_sent_samples([3000, 100], 1500).tolist() == [0, 1500, 0]
    assert bytes_sent_samples([], 1500).size == 0


def test_worst_thresholds_put_most_packets_in_first_queue():
    sizes = [150_000] * 100
    thresholds = worst_thresholds(sizes, 3, 1500)
    queues = np.array([bisect_right(thresholds, s) for s in bytes_sent_samples(sizes, 1500)])
    assert (queues == 0).mean() == pytest.approx(0.6, abs=0.011)
    assert (queues == 2).mean() == pytest.approx(0.3, abs=0.011)
    with pytest.raises(ValueError):
        worst_thresholds([], 3, 1500)


def test_geometric_ladder():
    assert geometric_ladder(1500, 4, 4) == [1500, 6000, 24000]


def test_ideal_srpt_serves_shortest_remaining_flow():
    scheduler = IdealSrptScheduler()
    long = [make_packet(flow_id=1, seq=i, flow_size=4500) for i in range(3)]
    short = make_packet(flow_id=2, flow_size=1500)
    for p in (*long, short):
        scheduler.enqueue(p, 0.0)
    assert scheduler.dequeue(0.0) is short
    assert [scheduler.dequeue(0.0) for _ in range(3)] == long
    assert len(scheduler) == 0
    with pytest.raises(MissingFlowSizeError):
        scheduler.enqueue(make_packet(flow_id=3), 0.0)


def test_ideal_fq_alternates_between_backlogged_flows():
    scheduler = IdealFqScheduler(LINE_RATE)
    for flow in (1, 2):
        for i in range(3):
            scheduler.enqueue(make_packet(flow_id=flow, seq=i), 0.0)
    order = [scheduler.dequeue(0.0) for _ in range(6)]
    assert [(p.flow_id, p.seq) for p in order] == [(1, 0), (2, 0), (1, 1), (2, 1), (1, 2), (2, 2)]


def _fluid_fair_finish(flows: list[Flow], access_rate: float) -> dict[int, float]:
    """Completion times under bit-by-bit fair sharing of the line, packets arriving whole."""
    rate = LINE_RATE / 8
    arrivals = sorted(
        (p.arrival, p.flow_id, p.size) for f in flows for p in flow_packets(f, 1500, access_rate)
    )
    backlog = {f.flow_id: 0.0 for f in flows}
    finish: dict[int, float] = {}
    t = 0.0

    def drain_until(limit: float) -> float:
        now = t
        while True:
            active = [f for f, b in backlog.items() if b > 1e-9]
            if not active:
                return limit
            n = len(active)
            smallest = min(backlog[f] for f in active)
            done = now + smallest * n / rate
            if done > limit:
                for f in active:
                    backlog[f] -= (limit - now) * rate / n
                return limit
            for f in active:
                backlog[f] -= smallest
                if backlog[f] <= 1e-9:
                    finish[f] = done
            now = done

    for arrival, flow, size in arrivals:
        t = drain_until(arrival)
        backlog[flow] += size
    drain_until(math.inf)
    return finish


def test_ideal_fq_tracks_fluid_fair_sharing():
    access = 40e9
    flows = [Flow(0, 30_000, 0.0), Flow(1, 6_000, 2e-6), Flow(2, 15_000, 5e-6)]
    cfg = PortConfig(k=2, access_rate=access, buffer=10_000_000)
    trace = simulate(flows, cfg, IdealFqScheduler(LINE_RATE))
    fluid = _fluid_fair_finish(flows, access)
    for f in flows:
        assert trace.flows[f.flow_id].end <= fluid[f.flow_id] + MTU_TIME + 1e-12


def test_ideal_fq_equal_flows_finish_together():
    flows = [Flow(0, 15_000, 0.0), Flow(1, 15_000, 0.0)]
    cfg = PortConfig(k=2, access_rate=40e9, buffer=10_000_000)
    trace = simulate(flows, cfg, IdealFqScheduler(LINE_RATE))
    assert abs(trace.flows[0].end - trace.flows[1].end) <= MTU_TIME + 1e-12


def test_ideal_srpt_is_within_one_packet_of_best_order():
    flows = [Flow(0, 15_000, 0.0), Flow(1, 3_000, 0.0), Flow(2, 7_500, 0.0)]
    cfg = PortConfig(k=2, access_rate=1e15, buffer=10_000_000)
    trace = simulate(flows, cfg, IdealSrptScheduler())
    mean_fct = np.mean([trace.flows[f.flow_id].fct for f in flows])
    best = math.inf
    for order in permutations(flows):
        elapsed, total = 0.0, 0.0
        for f in order:
            elapsed += f.size * 8 / LINE_RATE
            total += elapsed
        best = min(best, total / len(flows))
    assert mean_fct <= best + MTU_TIME + 1e-9


def test_static_threshold_search_returns_best_candidate():
    flows = sample_schedule(n_flows=60)
    cfg = PortConfig(k=3)
    thresholds, mean_fct = search_static_thresholds(flows, cfg, bases=(1_500, 12_000), ratios=(2, 8))
    candidates = {tuple(geometric_ladder(b, r, 3)) for b in (1_500, 12_000) for r in (2, 8)}
    assert tuple(thresholds) in candidates
    for candidate in candidates:
        trace = simulate(flows, cfg, StaticLasScheduler(list(candidate)))
        assert mean_fct <= np.mean([f.fct for f in trace.flows.values() if f.completed]) + 1e-15
