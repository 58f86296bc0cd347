"""Packet Disorder Avoidance.

Within a flowlet a packet may not overtake the packets of its flow that are
still queued: for priority-ordered policies it may not go to a higher-priority
queue than its predecessor, for fair policies it must follow its predecessor
into the same queue. A new flowlet may go anywhere.
"""
from typing import Hashable

from scheduling.sketch import UNSET, PolicyKind, SketchQueryResult


def constrain(choice: int, query: SketchQueryResult, policy_kind: PolicyKind) -> int:
    """Queue the packet may actually use, given the clustering choice and the flow's history."""
    if query.is_new_flowlet or query.prev_queue == UNSET:
        return choice
    if policy_kind == PolicyKind.PRIORITY:
        return max(choice, query.prev_queue)
    return query.prev_queue


class ExactFlowletTracker:
    """Ground-truth flowlet state for oracle runs and for auditing the sketch.

    A flowlet starts when none of the flow's packets is inside the port; a
    flow leaves the tracker with its last queued packet.
    """

    def __init__(self) -> None:
        self.in_port: dict[Hashable, int] = {}
        self.last_queue: dict[Hashable, int] = {}

    def query(self, flow_id: Hashable, weight_estimate: int, last_seen: float, is_new_message: bool) -> SketchQueryResult:
        new_flowlet = flow_id not in self.in_port
        return SketchQueryResult(
            weight_estimate=weight_estimate,
            last_seen=last_seen,
            is_new_message=is_new_message,
            is_new_flowlet=new_flowlet,
            prev_queue=UNSET if new_flowlet else self.last_queue.get(flow_id, UNSET),
        )

    def has_packets(self, flow_id: Hashable) -> bool:
        return flow_id in self.in_port

    def enqueued(self, flow_id: Hashable, queue: int) -> None:
        self.in_port[flow_id] = self.in_port.get(flow_id, 0) + 1
        self.last_queue[flow_id] = queue

    def departed(self, flow_id: Hashable) -> None:
        self.in_port[flow_id] -= 1
        if self.in_port[flow_id] == 0:
            del self.in_port[flow_id]
            del self.last_queue[flow_id]
