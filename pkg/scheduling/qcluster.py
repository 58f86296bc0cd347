"""One egress port scheduled by QCluster.

Per packet: read the flow's sketch state, compute the policy weight, let the
clustering engine pick a queue, apply disorder avoidance, then write the
chosen queue and the packet's contribution back into the sketch.
"""
from dataclasses import dataclass
from typing import Any, Hashable, Literal

from scheduling.base import MultiQueueScheduler
from scheduling.engine import QueueClusterEngine
from scheduling.pda import ExactFlowletTracker, constrain
from scheduling.policy import (
    DeficitRoundRobin,
    DequeueKind,
    HybridDeadlineFirst,
    PolicySpec,
    StrictPriority,
    deadline_queue_count,
    sketch_increment,
    weight,
)
from scheduling.sketch import ScmSketch, SketchQueryResult
from simulation.packet import Packet
from utils.config import ClusterConfig, SketchConfig


@dataclass
class QueueClass:
    """A contiguous block of queues clustered by one engine (or a single queue without one)."""

    offset: int
    size: int
    engine: QueueClusterEngine | None
    prefix: str = ""

    def owns(self, queue: int) -> bool:
        return self.offset <= queue < self.offset + self.size


@dataclass(slots=True)
class _MessageCount:
    sent: int
    last: float


class QClusterScheduler(MultiQueueScheduler):
    """
    QCluster on one port.

    Args:
        policy (PolicySpec): Weight definition, PDA kind and dequeue discipline.
        cluster (ClusterConfig): Engine settings with ``size_strategy`` resolved.
        sketch_cfg (SketchConfig): Sketch geometry and aging intervals.
        mtu (int): Bytes per full packet.
        line_rate (float): Port rate in bits/s.
        pda (bool): Apply packet disorder avoidance.
        pda_source (str): ``sketch`` reads the previous queue from the sketch,
            ``exact`` from ground-truth per-flow state.
        weight_source (str): ``sketch`` or ``exact`` per-message sent counts.
        deadline_order (str): Intra-class order of the deadline queues.
        deadline_queues (int, optional): Size of the deadline class.
    """

    def __init__(
        self,
        policy: PolicySpec,
        cluster: ClusterConfig,
        sketch_cfg: SketchConfig,
        mtu: int,
        line_rate: float,
        pda: bool = True,
        pda_source: Literal["sketch", "exact"] = "sketch",
        weight_source: Literal["sketch", "exact"] = "sketch",
        deadline_order: Literal["clustered", "edf"] = "clustered",
        deadline_queues: int | None = None,
        name: str | None = None,
    ) -> None:
        assert cluster.size_strategy is not None, "size strategy must be resolved before building the scheduler"
        k = cluster.k
        if policy.dequeue == DequeueKind.HYBRID:
            dq = deadline_queue_count(k, deadline_queues)
            discipline = HybridDeadlineFirst(dq, deadline_order)
            self.classes = [
                self._make_class(0, dq, cluster, _deadline_base(mtu, line_rate), "deadline."),
                self._make_class(dq, k - dq, cluster, float(mtu), "srpt."),
            ]
        else:
            discipline = DeficitRoundRobin(k, mtu) if policy.dequeue == DequeueKind.WRR else StrictPriority()
            base = 1.0 if policy.unit == "packets" else float(mtu)
            self.classes = [self._make_class(0, k, cluster, base)]
        super().__init__(k, discipline)
        self.name = name or policy.name
        self.policy = policy
        self.cluster = cluster
        self.mtu = mtu
        self.control_interval = cluster.control_interval
        self.sketch = ScmSketch(
            depth=sketch_cfg.depth,
            width=sketch_cfg.width,
            delta_t_message=sketch_cfg.delta_t_message,
            delta_t_flowlet=sketch_cfg.delta_t_flowlet,
            seed_base=sketch_cfg.seed,
        )
        self.pda = pda
        self.pda_source = pda_source
        self.weight_source = weight_source
        self.tracker = ExactFlowletTracker()
        self._exact: dict[Hashable, _MessageCount] = {}
        self._pruned = 0.0
        self.unsound_flowlets = 0
        self.pda_redirects = 0

    @staticmethod
    def _make_class(offset: int, size: int, cluster: ClusterConfig, base: float, prefix: str = "") -> QueueClass:
        engine = QueueClusterEngine(cluster.model_copy(update={"k": size}), base) if size > 1 else None
        return QueueClass(offset, size, engine, prefix)

    def _class_of(self, packet: Packet, now: float) -> QueueClass:
        if self.policy.special_fn(packet, now) == "deadline":
            return self.classes[0]
        return self.classes[-1]

    def _owner(self, queue: int) -> QueueClass:
        return next(c for c in self.classes if c.owns(queue))

    def _sent(self, flow_id: Hashable, query: SketchQueryResult, now: float) -> int:
        if self.weight_source == "exact":
            count = self._exact.get(flow_id)
            if count is None or count.last < now - self.sketch.delta_t_message:
                return 0
            return count.sent
        return 0 if query.is_new_message else query.weight_estimate

    def _count_exact(self, flow_id: Hashable, amount: int, now: float) -> None:
        count = self._exact.get(flow_id)
        if count is None or count.last < now - self.sketch.delta_t_message:
            self._exact[flow_id] = _MessageCount(amount, now)
        else:
            count.sent += amount
            count.last = now

    def _prune_exact(self, now: float) -> None:
        """Forget flows whose message has ended; runs once per message gap."""
        gap = self.sketch.delta_t_message
        if now - self._pruned < gap:
            return
        self._pruned = now
        for fid in [f for f, c in self._exact.items() if c.last < now - gap]:
            del self._exact[fid]

    def enqueue(self, packet: Packet, now: float) -> None:
        fid = packet.flow_id
        kind = self.policy.pda_kind
        query = self.sketch.query(fid, now, kind)
        w = weight(self.policy, packet, self._sent(fid, query, now), now)

        cls = self._class_of(packet, now)
        choice = cls.offset + (cls.engine.choose(w, now) if cls.engine else 0)
        if query.is_new_flowlet and self.tracker.has_packets(fid):
            self.unsound_flowlets += 1

        queue = choice
        if self.pda:
            if self.pda_source == "exact":
                query = self.tracker.query(fid, query.weight_estimate, query.last_seen, query.is_new_message)
            queue = constrain(choice, query, kind)
            if queue != choice:
                self.pda_redirects += 1

        amount = sketch_increment(self.policy, packet.size, self.mtu)
        self.sketch.record(fid, amount, queue, now, kind)
        if self.weight_source == "exact":
            self._count_exact(fid, amount, now)

        if cls.engine is not None and cls.owns(queue):
            cls.engine.assign(w, queue - cls.offset)
        owner = self._owner(queue)
        if owner.engine is not None:
            owner.engine.enqueued(queue - owner.offset, packet.size)
        self.tracker.enqueued(fid, queue)
        self.push(packet, queue)

    def departed(self, packet: Packet, queue: int) -> None:
        owner = self._owner(queue)
        if owner.engine is not None:
            owner.engine.dequeued(queue - owner.offset, packet.size)
        self.tracker.departed(packet.flow_id)

    def queue_weights(self) -> list[float]:
        weights: list[float] = []
        for c in self.classes:
            weights.extend(c.engine.weights if c.engine else [1.0])
        return weights

    def thresholds(self) -> list[tuple[float, ...]]:
        return [c.engine.thresholds() if c.engine else () for c in self.classes]

    def control_tick(self, now: float) -> None:
        for c in self.classes:
            if c.engine is not None:
                c.engine.control_tick(now)
        self._prune_exact(now)

    def threshold_history(self) -> tuple[list[str], list[tuple[float, ...]]]:
        engines = [c for c in self.classes if c.engine is not None]
        if not engines:
            return [], []
        columns = ["epoch"]
        for c in engines:
            columns += [c.prefix + name for name in c.engine.history_columns()[1:]]
        rows = [
            (ticks[0][0], *(v for row in ticks for v in row[1:]))
            for ticks in zip(*(c.engine.history for c in engines))
        ]
        return columns, rows

    def stats(self) -> dict[str, Any]:
        return {
            "unsound_flowlets": self.unsound_flowlets,
            "pda_redirects": self.pda_redirects,
            "final_alpha": ";".join(
                ",".join(f"{a:g}" for a in c.engine.alphas) for c in self.classes if c.engine
            ),
        }


def _deadline_base(mtu: int, line_rate: float) -> float:
    """One MTU's serialisation time in microseconds, the unit of deadline weights."""
    return mtu * 8.0 / line_rate * 1e6
