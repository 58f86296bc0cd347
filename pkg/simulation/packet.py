"""Packets, per-flow ground truth and the trace a run produces."""
import hashlib
from dataclasses import dataclass, field
from typing import Any

import pandas as pd

DROP = "DROP"

PACKET_COLUMNS = ["flow_id", "seq", "size", "arrival", "queue", "departure", "ecn_marked"]
FLOW_COLUMNS = ["flow_id", "size", "start", "fct", "deadline", "met", "disorder_count"]


@dataclass(slots=True)
class Packet:
    flow_id: int
    seq: int
    size: int
    arrival: float
    flow_size: int | None = None
    deadline: float | None = None
    enqueued_queue: int = -1
    departure: float | None = None
    dropped: bool = False
    ecn_marked: bool = False


@dataclass(slots=True)
class FlowRecord:
    """Ground truth for one flow, kept by the simulator for metrics and oracles."""

    flow_id: int
    size: int
    start: float
    packets: int
    deadline: float | None = None
    delivered: int = 0
    dropped: int = 0
    end: float | None = None
    max_seq: int = -1
    disorder: int = 0

    def deliver(self, packet: Packet) -> None:
        self.delivered += 1
        if packet.seq < self.max_seq:
            self.disorder += 1
        else:
            self.max_seq = packet.seq
        if self.delivered == self.packets:
            self.end = packet.departure

    @property
    def completed(self) -> bool:
        return self.end is not None

    @property
    def fct(self) -> float | None:
        return None if self.end is None else self.end - self.start

    @property
    def met(self) -> bool | None:
        if self.deadline is None:
            return None
        return self.end is not None and self.end <= self.deadline


@dataclass
class TraceLog:
    """Everything a run emits: packet rows in event order, flow rows, scheduler counters."""

    packets: list[Packet] = field(default_factory=list)
    flows: dict[int, FlowRecord] = field(default_factory=dict)
    stats: dict[str, Any] = field(default_factory=dict)
    threshold_columns: list[str] = field(default_factory=list)
    threshold_rows: list[tuple[float, ...]] = field(default_factory=list)

    def packet_frame(self) -> pd.DataFrame:
        rows = [
            (
                p.flow_id,
                p.seq,
                p.size,
                p.arrival,
                p.enqueued_queue,
                DROP if p.dropped else p.departure,
                int(p.ecn_marked),
            )
            for p in self.packets
        ]
        return pd.DataFrame(rows, columns=PACKET_COLUMNS)

    def flow_frame(self) -> pd.DataFrame:
        rows = [
            (f.flow_id, f.size, f.start, f.fct, f.deadline, None if f.met is None else int(f.met), f.disorder)
            for f in sorted(self.flows.values(), key=lambda f: f.flow_id)
        ]
        return pd.DataFrame(rows, columns=FLOW_COLUMNS)

    def threshold_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.threshold_rows, columns=self.threshold_columns)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.packet_frame().to_csv(index=False, lineterminator="\n").encode())
        h.update(self.flow_frame().to_csv(index=False, lineterminator="\n").encode())
        return h.hexdigest()
