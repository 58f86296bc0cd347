"""Reference schedulers: FIFO, static-threshold LAS, ideal fair queueing, ideal SRPT."""
import heapq
import itertools
from bisect import bisect_right
from collections import deque
from typing import Any, Hashable, Iterable, Sequence

import numpy as np
from loguru import logger

from scheduling.base import MultiQueueScheduler, PortScheduler
from scheduling.policy import MissingFlowSizeError, StrictPriority
from simulation.packet import Packet
from simulation.port import simulate
from utils.config import PortConfig
from workload.flows import Flow

WORST_FIRST_QUEUE_SHARE = 0.6
WORST_LAST_QUEUE_SHARE = 0.3


class FifoScheduler(MultiQueueScheduler):
    name = "FIFO"

    def __init__(self) -> None:
        super().__init__(1, StrictPriority())

    def enqueue(self, packet: Packet, now: float) -> None:
        self.push(packet, 0)


class StaticLasScheduler(MultiQueueScheduler):
    """
    Multi-level feedback queues with fixed byte thresholds.

    A packet goes to queue ``i`` when its flow had sent ``thres_{i-1} <= sent < thres_i``
    bytes before it; queues are drained by strict priority.
    """

    def __init__(self, thresholds: Sequence[int], name: str = "STATIC-LAS") -> None:
        if list(thresholds) != sorted(thresholds):
            raise ValueError(f"thresholds must be nondecreasing, got {list(thresholds)}")
        super().__init__(len(thresholds) + 1, StrictPriority())
        self.name = name
        self.thresholds = list(thresholds)
        self.sent: dict[Hashable, int] = {}

    def enqueue(self, packet: Packet, now: float) -> None:
        sent = self.sent.get(packet.flow_id, 0)
        self.push(packet, bisect_right(self.thresholds, sent))
        self.sent[packet.flow_id] = sent + packet.size

    def stats(self) -> dict[str, Any]:
        return {"static_thresholds": ";".join(map(str, self.thresholds))}


def bytes_sent_samples(flow_sizes: Iterable[int], mtu: int) -> np.ndarray:
    """Bytes each packet's flow had sent before it, for every packet of every flow."""
    samples = [np.arange(0, size, mtu, dtype=np.int64) for size in flow_sizes]
    return np.concatenate(samples) if samples else np.zeros(0, dtype=np.int64)


def worst_thresholds(flow_sizes: Iterable[int], k: int, mtu: int) -> list[int]:
    """Mis-set thresholds: 60% of packets in the first queue, 30% in the last."""
    samples = bytes_sent_samples(flow_sizes, mtu)
    if not samples.size:
        raise ValueError("need at least one flow to place thresholds")
    shares = np.linspace(WORST_FIRST_QUEUE_SHARE, 1.0 - WORST_LAST_QUEUE_SHARE, k - 1)
    # sent == threshold already belongs to the next queue, hence the +1
    return [int(v) + 1 for v in np.quantile(samples, shares, method="inverted_cdf")]


def geometric_ladder(base: float, ratio: float, k: int) -> list[int]:
    return [int(base * ratio**i) for i in range(k - 1)]


def search_static_thresholds(
    flows: list[Flow],
    port_cfg: PortConfig,
    horizon: float | None = None,
    bases: Sequence[float] = (1_500, 3_000, 6_000, 12_000, 24_000, 48_000),
    ratios: Sequence[float] = (2, 4, 8, 16),
) -> tuple[list[int], float]:
    """
    Grid search over geometric threshold ladders for the lowest mean FCT on ``flows``.

    Args:
        flows (list[Flow]): The schedule to tune on.
        port_cfg (PortConfig): Port the thresholds are for; ``k`` queues.
        horizon (float, optional): Simulation horizon.
        bases (Sequence[float]): First threshold candidates in bytes.
        ratios (Sequence[float]): Ratio between consecutive thresholds.

    Returns:
        tuple[list[int], float]: Best thresholds and the mean FCT they achieved.
    """
    best: tuple[list[int], float] | None = None
    for base, ratio in itertools.product(bases, ratios):
        thresholds = geometric_ladder(base, ratio, port_cfg.k)
        trace = simulate(flows, port_cfg, StaticLasScheduler(thresholds), horizon)
        fcts = [f.fct for f in trace.flows.values() if f.completed]
        if not fcts:
            continue
        mean_fct = float(np.mean(fcts))
        logger.debug("static thresholds base={} ratio={}: mean FCT {:.6e}s", base, ratio, mean_fct)
        if best is None or mean_fct < best[1]:
            best = (thresholds, mean_fct)
    if best is None:
        raise ValueError("no candidate completed any flow; raise the horizon")
    return best


class IdealFqScheduler(PortScheduler):
    """
    Packetised bit-by-bit round robin (weighted fair queueing with equal weights).

    Every packet is stamped with the virtual time at which it would finish
    under fluid fair sharing; packets leave in stamp order. Virtual time is in
    bytes per active flow and advances at ``rate / active_flows``, where a flow
    stays active in the fluid system until its last finish stamp is reached.
    """

    name = "IDEAL-FQ"

    def __init__(self, line_rate: float) -> None:
        self.rate = line_rate / 8.0
        self.virtual = 0.0
        self.updated = 0.0
        self.finish: dict[Hashable, float] = {}
        self.active: set[Hashable] = set()
        self._fluid: list[tuple[float, Hashable]] = []
        self._packets: list[tuple[float, int, Packet]] = []
        self._order = itertools.count()

    def _advance(self, now: float) -> None:
        while self.active:
            self._drop_stale()
            f_min = self._fluid[0][0]
            n = len(self.active)
            reach = self.updated + (f_min - self.virtual) * n / self.rate
            if reach > now:
                self.virtual += (now - self.updated) * self.rate / n
                break
            self.virtual = f_min
            self.updated = reach
            while self._fluid and self._fluid[0][0] <= f_min:
                _, flow = heapq.heappop(self._fluid)
                if flow in self.active and self.finish[flow] <= f_min:
                    self.active.discard(flow)
                self._drop_stale()
        self.updated = now

    def _drop_stale(self) -> None:
        while self._fluid and (
            self._fluid[0][1] not in self.active or self._fluid[0][0] != self.finish[self._fluid[0][1]]
        ):
            heapq.heappop(self._fluid)

    def enqueue(self, packet: Packet, now: float) -> None:
        self._advance(now)
        start = max(self.virtual, self.finish.get(packet.flow_id, 0.0))
        stamp = start + packet.size
        self.finish[packet.flow_id] = stamp
        self.active.add(packet.flow_id)
        heapq.heappush(self._fluid, (stamp, packet.flow_id))
        packet.enqueued_queue = 0
        heapq.heappush(self._packets, (stamp, next(self._order), packet))

    def dequeue(self, now: float) -> Packet | None:
        if not self._packets:
            return None
        return heapq.heappop(self._packets)[2]

    def __len__(self) -> int:
        return len(self._packets)


class IdealSrptScheduler(PortScheduler):
    """Preemptive SRPT at packet granularity: always a packet of the flow with the fewest bytes left."""

    name = "IDEAL-SRPT"

    def __init__(self) -> None:
        self.flows: dict[Hashable, deque[Packet]] = {}
        self.remaining: dict[Hashable, int] = {}
        self._heap: list[tuple[int, Hashable]] = []
        self._count = 0

    def enqueue(self, packet: Packet, now: float) -> None:
        if packet.flow_size is None:
            raise MissingFlowSizeError(f"flow {packet.flow_id} has no declared size")
        fid = packet.flow_id
        packet.enqueued_queue = 0
        self.remaining.setdefault(fid, packet.flow_size)
        backlog = self.flows.setdefault(fid, deque())
        if not backlog:
            heapq.heappush(self._heap, (self.remaining[fid], fid))
        backlog.append(packet)
        self._count += 1

    def dequeue(self, now: float) -> Packet | None:
        if not self._heap:
            return None
        _, fid = heapq.heappop(self._heap)
        backlog = self.flows[fid]
        packet = backlog.popleft()
        self._count -= 1
        self.remaining[fid] -= packet.size
        if backlog:
            heapq.heappush(self._heap, (self.remaining[fid], fid))
        return packet

    def __len__(self) -> int:
        return self._count
