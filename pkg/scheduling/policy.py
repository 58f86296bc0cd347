"""Scheduling problems expressed as QCluster policies.

Each policy fixes four things: what a packet's weight is, whether some
packets form a special class, which cluster-size strategy the thresholds
follow and how the queues are drained.

| policy  | weight                      | special class | size strategy | PDA        | dequeue               |
|---------|-----------------------------|---------------|---------------|------------|-----------------------|
| QC-SRPT | bytes remaining             | none          | proportional  | priority   | strict priority       |
| QC-LAS  | bytes sent                  | none          | proportional  | priority   | strict priority       |
| QC-FQ   | packets sent                | none          | same          | fair, off  | weighted round robin  |
| QC-DDL  | time to deadline, else SRPT | deadline *    | proportional  | priority   | deadline first        |

Fair PDA pins a flowlet to the queue of its first packet. A source that
never pauses makes the whole flow one flowlet, and every flow starts at
weight 0, so QC-FQ runs without PDA unless a run turns it on.

* until the deadline passes; late flows fall back to the SRPT queues.
"""
import math
from collections import deque
from dataclasses import dataclass
from enum import StrEnum
from typing import Callable, Literal

from scheduling.engine import WEIGHT_FLOOR, SizeStrategy
from scheduling.sketch import PolicyKind
from simulation.packet import Packet


class MissingFlowSizeError(ValueError):
    """A remaining-size weight was asked for a packet whose flow size is unknown."""


class DequeueKind(StrEnum):
    STRICT = "strict-priority"
    WRR = "weighted-round-robin"
    HYBRID = "hybrid-deadline-first"


WeightFn = Callable[[Packet, int, float], float]


@dataclass(frozen=True)
class PolicySpec:
    name: str
    weight_fn: WeightFn
    special_fn: Callable[[Packet, float], str | None]
    size_strategy: SizeStrategy
    pda_kind: PolicyKind
    dequeue: DequeueKind
    # what the sketch counts
    unit: Literal["bytes", "packets"] = "bytes"
    # whether disorder avoidance is on unless the run says otherwise
    pda_default: bool = True


def bytes_sent(packet: Packet, sent: int, now: float) -> float:
    return float(sent)


def packets_sent(packet: Packet, sent: int, now: float) -> float:
    return float(sent)


def bytes_remaining(packet: Packet, sent: int, now: float) -> float:
    if packet.flow_size is None:
        raise MissingFlowSizeError(f"flow {packet.flow_id} has no declared size")
    return float(max(packet.flow_size - sent, 0))


def time_to_deadline(packet: Packet, sent: int, now: float) -> float:
    """Microseconds left before the deadline; SRPT bytes once it has passed or without one."""
    if packet.deadline is None or now > packet.deadline:
        return bytes_remaining(packet, sent, now)
    return (packet.deadline - now) * 1e6


def no_class(packet: Packet, now: float) -> str | None:
    return None


def deadline_class(packet: Packet, now: float) -> str | None:
    """Deadline flows until their deadline passes."""
    if packet.deadline is None or now > packet.deadline:
        return None
    return "deadline"


POLICIES: dict[str, PolicySpec] = {
    p.name: p
    for p in (
        PolicySpec("QC-SRPT", bytes_remaining, no_class, SizeStrategy.PROPORTIONAL, PolicyKind.PRIORITY, DequeueKind.STRICT),
        PolicySpec("QC-LAS", bytes_sent, no_class, SizeStrategy.PROPORTIONAL, PolicyKind.PRIORITY, DequeueKind.STRICT),
        PolicySpec(
            "QC-FQ", packets_sent, no_class, SizeStrategy.SAME, PolicyKind.FAIR, DequeueKind.WRR,
            unit="packets", pda_default=False,
        ),
        PolicySpec("QC-DDL", time_to_deadline, deadline_class, SizeStrategy.PROPORTIONAL, PolicyKind.PRIORITY, DequeueKind.HYBRID),
    )
}


def get_policy(name: str) -> PolicySpec:
    try:
        return POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; known: {', '.join(POLICIES)}") from None


def weight(policy: PolicySpec, packet: Packet, sent: int, now: float) -> float:
    """
    Weight of ``packet`` under ``policy``.

    Args:
        policy (PolicySpec): The policy.
        packet (Packet): The arriving packet.
        sent (int): What the flow has sent so far in the current message, in
            the policy's unit, not counting this packet. Zero for a new message.
        now (float): Arrival time.

    Returns:
        float: The packet weight.

    Raises:
        MissingFlowSizeError: For remaining-size weights on a flow of unknown size.
    """
    return policy.weight_fn(packet, sent, now)


def sketch_increment(policy: PolicySpec, size: int, mtu: int) -> int:
    """Amount one packet adds to its flow's sketch counters."""
    if policy.unit == "packets":
        # byte-normalised packet equivalents
        return max(1, round(size / mtu))
    return size


def deadline_queue_count(k: int, override: int | None = None) -> int:
    count = override if override is not None else math.ceil(k / 4)
    if not 1 <= count < k:
        raise ValueError(f"deadline class needs between 1 and {k - 1} queues, got {count}")
    return count


class StrictPriority:
    """Always the lowest-index nonempty queue."""

    def next_queue(self, queues: list[deque[Packet]], weights: list[float]) -> int | None:
        return next((i for i, q in enumerate(queues) if q), None)


class DeficitRoundRobin:
    """
    Deficit round robin whose byte quantum is inversely proportional to the queue weight.

    The heaviest queue gets one MTU per round; queue ``i`` gets
    ``mtu * max_m / m_i``. Quanta are read from ``weights`` whenever a queue's
    turn starts, so they follow the centroids as they move.
    """

    def __init__(self, k: int, mtu: int) -> None:
        self.mtu = mtu
        self.deficit = [0.0] * k
        self.current = 0
        self._in_turn = False

    def quanta(self, weights: list[float]) -> list[float]:
        floored = [max(w, WEIGHT_FLOOR) for w in weights]
        heaviest = max(floored)
        return [self.mtu * heaviest / w for w in floored]

    def next_queue(self, queues: list[deque[Packet]], weights: list[float]) -> int | None:
        if not any(queues):
            return None
        k = len(queues)
        while True:
            q = queues[self.current]
            if q:
                if not self._in_turn:
                    self.deficit[self.current] += self.quanta(weights)[self.current]
                    self._in_turn = True
                if q[0].size <= self.deficit[self.current]:
                    self.deficit[self.current] -= q[0].size
                    if len(q) == 1:
                        self.deficit[self.current] = 0.0
                    return self.current
            else:
                self.deficit[self.current] = 0.0
            self.current = (self.current + 1) % k
            self._in_turn = False


class HybridDeadlineFirst:
    """
    Deadline queues before everything else, then strict priority.

    The first ``deadline_queues`` queues hold the deadline class. With
    ``order="clustered"`` they are drained by strict priority (the clustering
    already sorted them by time to deadline); with ``order="edf"`` the one
    whose head packet has the earliest deadline goes first.
    """

    def __init__(self, deadline_queues: int, order: Literal["clustered", "edf"] = "clustered") -> None:
        self.deadline_queues = deadline_queues
        self.order = order

    def next_queue(self, queues: list[deque[Packet]], weights: list[float]) -> int | None:
        if self.order == "edf":
            heads = [
                (q[0].deadline if q[0].deadline is not None else math.inf, i)
                for i, q in enumerate(queues[: self.deadline_queues])
                if q
            ]
            if heads:
                return min(heads)[1]
        return next((i for i, q in enumerate(queues) if q), None)
