"""Discrete-event simulation of one egress port.

Flows are open-loop sources: a flow pushes its packets back to back at the
access rate starting at its start time. The port admits a packet if the
shared buffer has room (tail drop otherwise), marks ECN above the marking
threshold, hands it to the scheduler and transmits one packet at a time at
the line rate, never idling while the scheduler holds packets.
"""
import heapq
import itertools
from enum import IntEnum
from typing import Any, Iterator

from loguru import logger

from scheduling.base import PortScheduler
from simulation.packet import FlowRecord, Packet, TraceLog
from utils.config import PortConfig
from workload.flows import Flow


class EventKind(IntEnum):
    ARRIVAL = 0
    DEPARTURE = 1
    CONTROL = 2


class EventQueue:
    """Time-ordered events; equal times pop in insertion order."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, EventKind, Any]] = []
        self._count = itertools.count()

    def push(self, time: float, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self._heap, (time, next(self._count), kind, payload))

    def pop(self) -> tuple[float, EventKind, Any]:
        time, _, kind, payload = heapq.heappop(self._heap)
        return time, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


def packet_sizes(size: int, mtu: int) -> list[int]:
    full, rest = divmod(size, mtu)
    return [mtu] * full + ([rest] if rest else [])


def flow_packets(flow: Flow, mtu: int, access_rate: float) -> Iterator[Packet]:
    """The flow's packets at their natural times on a dedicated access link."""
    offset = 0
    for seq, size in enumerate(packet_sizes(flow.size, mtu)):
        yield Packet(
            flow_id=flow.flow_id,
            seq=seq,
            size=size,
            arrival=flow.start + offset * 8.0 / access_rate,
            flow_size=flow.size,
            deadline=flow.deadline,
        )
        offset += size


def shared_link(flows: list[Flow], mtu: int, access_rate: float) -> Iterator[Packet]:
    """Flows sharing one access link: natural-time order, serialised at ``access_rate``."""
    free = 0.0
    natural = heapq.merge(*(flow_packets(f, mtu, access_rate) for f in flows), key=lambda p: p.arrival)
    for packet in natural:
        packet.arrival = max(packet.arrival, free)
        free = packet.arrival + packet.size * 8.0 / access_rate
        yield packet


def arrival_stream(flows: list[Flow], cfg: PortConfig) -> Iterator[Packet]:
    rate = cfg.source_rate
    if cfg.source_ports:
        streams = [
            shared_link([f for f in flows if f.source_port % cfg.source_ports == port], cfg.mtu, rate)
            for port in range(cfg.source_ports)
        ]
    else:
        streams = [flow_packets(f, cfg.mtu, rate) for f in flows]
    return heapq.merge(*streams, key=lambda p: p.arrival)


class Port:
    """
    Egress port state: buffer occupancy, link busy flag and the event loop.

    Args:
        cfg (PortConfig): Line rate, shared buffer, ECN threshold and MTU.
        scheduler (PortScheduler): Queue choice and service order.
    """

    def __init__(self, cfg: PortConfig, scheduler: PortScheduler) -> None:
        self.cfg = cfg
        self.scheduler = scheduler
        self.events = EventQueue()
        self.trace = TraceLog()
        self.occupancy = 0
        self.busy = False
        self.injected = self.delivered = self.dropped = self.marked = 0
        self.max_delay = 0.0

    def arrive(self, packet: Packet, now: float) -> None:
        self.injected += 1
        self.trace.packets.append(packet)
        if self.occupancy + packet.size > self.cfg.buffer:
            packet.dropped = True
            self.dropped += 1
            self.trace.flows[packet.flow_id].dropped += 1
            return
        if self.cfg.ecn_threshold is not None and self.occupancy + packet.size > self.cfg.ecn_threshold:
            packet.ecn_marked = True
            self.marked += 1
        self.occupancy += packet.size
        self.scheduler.enqueue(packet, now)
        if not self.busy:
            self.transmit_next(now)

    def transmit_next(self, now: float) -> None:
        packet = self.scheduler.dequeue(now)
        if packet is None:
            self.busy = False
            return
        self.busy = True
        self.events.push(now + packet.size * 8.0 / self.cfg.line_rate, EventKind.DEPARTURE, packet)

    def depart(self, packet: Packet, now: float) -> None:
        packet.departure = now
        self.occupancy -= packet.size
        self.delivered += 1
        self.max_delay = max(self.max_delay, now - packet.arrival)
        self.trace.flows[packet.flow_id].deliver(packet)
        self.transmit_next(now)

    def run(self, flows: list[Flow], horizon: float | None = None) -> TraceLog:
        for f in flows:
            self.trace.flows[f.flow_id] = FlowRecord(
                flow_id=f.flow_id,
                size=f.size,
                start=f.start,
                packets=len(packet_sizes(f.size, self.cfg.mtu)),
                deadline=f.deadline,
            )
        stream = arrival_stream(flows, self.cfg)
        first = next(stream, None)
        if first is not None:
            self.events.push(first.arrival, EventKind.ARRIVAL, first)
        interval = self.scheduler.control_interval
        if interval is not None and first is not None:
            self.events.push(first.arrival + interval, EventKind.CONTROL)

        while self.events:
            now, kind, payload = self.events.pop()
            if horizon is not None and now > horizon:
                break
            if kind == EventKind.ARRIVAL:
                self.arrive(payload, now)
                upcoming = next(stream, None)
                if upcoming is not None:
                    self.events.push(upcoming.arrival, EventKind.ARRIVAL, upcoming)
            elif kind == EventKind.DEPARTURE:
                self.depart(payload, now)
            else:
                self.scheduler.control_tick(now)
                # keep ticking only while arrivals or departures are pending
                if self.events:
                    self.events.push(now + interval, EventKind.CONTROL)

        in_flight = self.injected - self.delivered - self.dropped
        self.trace.stats = {
            "injected": self.injected,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "in_flight": in_flight,
            "ecn_marked": self.marked,
            "max_queueing_delay": self.max_delay,
            **self.scheduler.stats(),
        }
        self.trace.threshold_columns, self.trace.threshold_rows = self.scheduler.threshold_history()
        if self.dropped:
            logger.info("{}: {} of {} packets dropped", self.scheduler.name, self.dropped, self.injected)
        return self.trace


def simulate(
    flows: list[Flow], cfg: PortConfig, scheduler: PortScheduler, horizon: float | None = None
) -> TraceLog:
    """Run ``flows`` through one port until every packet has left or ``horizon`` passes."""
    return Port(cfg, scheduler).run(flows, horizon)
