"""What the egress port needs from a scheduler."""
from collections import deque
from typing import Any, Protocol

from simulation.packet import Packet


class DequeueDiscipline(Protocol):
    def next_queue(self, queues: list[deque[Packet]], weights: list[float]) -> int | None: ...


class PortScheduler:
    """
    Owns the packets buffered at one egress port and decides their order.

    The port does admission (tail drop, ECN) and timing; the scheduler is only
    asked where an admitted packet goes and which packet leaves next.
    """

    name = "scheduler"
    # seconds between control ticks, None when the scheduler has no control loop
    control_interval: float | None = None

    def enqueue(self, packet: Packet, now: float) -> None:
        raise NotImplementedError

    def dequeue(self, now: float) -> Packet | None:
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError

    def control_tick(self, now: float) -> None:
        pass

    def stats(self) -> dict[str, Any]:
        return {}

    def threshold_history(self) -> tuple[list[str], list[tuple[float, ...]]]:
        return [], []


class MultiQueueScheduler(PortScheduler):
    """``k`` FIFO queues drained by a dequeue discipline; subclasses pick the queue."""

    def __init__(self, k: int, discipline: DequeueDiscipline) -> None:
        self.queues: list[deque[Packet]] = [deque() for _ in range(k)]
        self.discipline = discipline
        self._count = 0

    @property
    def k(self) -> int:
        return len(self.queues)

    def queue_weights(self) -> list[float]:
        return [1.0] * self.k

    def push(self, packet: Packet, queue: int) -> None:
        packet.enqueued_queue = queue
        self.queues[queue].append(packet)
        self._count += 1

    def dequeue(self, now: float) -> Packet | None:
        if not self._count:
            return None
        queue = self.discipline.next_queue(self.queues, self.queue_weights())
        assert queue is not None and self.queues[queue], "discipline picked an empty queue"
        packet = self.queues[queue].popleft()
        self._count -= 1
        self.departed(packet, queue)
        return packet

    def departed(self, packet: Packet, queue: int) -> None:
        pass

    def __len__(self) -> int:
        return self._count
