"""Queue clustering: queue weights (centroids), thresholds and queue choice.

Each of the ``k`` queues is a cluster whose centroid is the mean weight of the
packets assigned to it. Adjacent centroids ``m_i <= m_{i+1}`` are split by a
threshold; a packet goes to the queue whose threshold interval holds its
weight. The threshold leans towards one centroid or the other to steer the
cluster sizes (same-cluster-size for fairness, proportional-cluster-size for
FCT).

In dataplane mode the per-packet path only adds, compares and range-matches
against a threshold table frozen at the last control-plane sync; all division
happens in ``control_plane_sync``.
"""
import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import StrEnum
from typing import Sequence

from loguru import logger

from utils.config import ClusterConfig


class SizeStrategy(StrEnum):
    SAME = "same-cluster-size"
    PROPORTIONAL = "proportional-cluster-size"


class ThresholdRule(StrEnum):
    ADAPTIVE = "adaptive"
    ARITHMETIC = "arithmetic-mean"
    GEOMETRIC = "geometric-mean"
    HARMONIC = "harmonic-mean"


# smallest centroid used when dividing by a queue weight
WEIGHT_FLOOR = 1.0


@dataclass(slots=True)
class QueueState:
    initial_weight: float
    weight_sum: float = 0.0
    packet_count: float = 0.0
    occupancy_packets: int = 0
    occupancy_bytes: int = 0
    assigned: float = 0.0
    assigned_total: int = 0


@dataclass(frozen=True, slots=True)
class ThresholdTable:
    thresholds: tuple[float, ...]
    epoch: float
    alphas: tuple[float, ...]


def queue_weight(q: QueueState) -> float:
    """Mean weight of the packets assigned to ``q``; the initial centroid while empty."""
    if q.packet_count > 0:
        return q.weight_sum / q.packet_count
    return q.initial_weight


def compute_threshold(
    m_i: float, m_ip1: float, p_i: float, p_ip1: float, rule: ThresholdRule, alpha: float
) -> float:
    """
    Boundary between two adjacent clusters.

    Args:
        m_i (float): Weight of the higher-priority queue of the pair.
        m_ip1 (float): Weight of the next queue, ``m_i <= m_ip1``.
        p_i (float): Cluster-size measure of queue i (already divided by
            ``m_i`` for proportional-cluster-size).
        p_ip1 (float): Cluster-size measure of queue i+1.
        rule (ThresholdRule): Adaptive threshold or one of the three means.
        alpha (float): Exponent of the adaptive rule.

    Returns:
        float: The threshold; weights strictly below it belong to queue i.
    """
    if rule == ThresholdRule.ADAPTIVE:
        total = p_i + p_ip1
        beta = 0.5 if total <= 0 else (p_i / total) ** alpha
        return m_i * beta + m_ip1 * (1.0 - beta)
    if rule == ThresholdRule.ARITHMETIC:
        return (m_i + m_ip1) / 2.0
    if rule == ThresholdRule.GEOMETRIC:
        return math.sqrt(max(m_i, 0.0) * max(m_ip1, 0.0))
    if rule == ThresholdRule.HARMONIC:
        total = m_i + m_ip1
        return 0.0 if total <= 0 else 2.0 * m_i * m_ip1 / total
    raise ValueError(f"unknown threshold rule {rule!r}")


def size_measure(cfg: ClusterConfig) -> str:
    """
    What p_i counts: the configured measure, else decayed assignments for
    same-cluster-size and queue occupancy for proportional-cluster-size.
    """
    if cfg.size_measure is not None:
        return cfg.size_measure
    return "decayed-assignments" if cfg.size_strategy == SizeStrategy.SAME else "occupancy"


def size_measures(states: list[QueueState], cfg: ClusterConfig) -> list[float]:
    """Per-queue cluster-size measure p_i, normalised by m_i for proportional-cluster-size."""
    if size_measure(cfg) == "occupancy":
        sizes = [float(q.occupancy_packets) for q in states]
    else:
        sizes = [q.assigned for q in states]
    if cfg.size_strategy == SizeStrategy.PROPORTIONAL:
        sizes = [p / max(queue_weight(q), WEIGHT_FLOOR) for p, q in zip(sizes, states)]
    return sizes


def per_pair(alpha: float | Sequence[float], k: int) -> tuple[float, ...]:
    """One alpha per adjacent queue pair; a scalar applies to all of them."""
    if isinstance(alpha, (int, float)):
        return (float(alpha),) * (k - 1)
    alphas = tuple(alpha)
    if len(alphas) != k - 1:
        raise ValueError(f"{k} queues need {k - 1} alphas, got {len(alphas)}")
    return alphas


def compute_thresholds(
    states: list[QueueState], cfg: ClusterConfig, alpha: float | Sequence[float]
) -> list[float]:
    rule = ThresholdRule(cfg.threshold_rule)
    alphas = per_pair(alpha, len(states))
    weights = [queue_weight(q) for q in states]
    # the p/m substitution only feeds the adaptive rule
    sizes = size_measures(states, cfg)
    thresholds = []
    floor = -math.inf
    for i in range(len(states) - 1):
        t = compute_threshold(weights[i], weights[i + 1], sizes[i], sizes[i + 1], rule, alphas[i])
        floor = max(floor, t)
        thresholds.append(floor)
    return thresholds


def choose_queue(
    packet_weight: float,
    states: list[QueueState],
    cfg: ClusterConfig,
    alpha: float | Sequence[float] | None = None,
    table: ThresholdTable | None = None,
) -> int:
    """Index ``i`` with ``thres_{i-1} <= packet_weight < thres_i``; reads state only.

    With a ``table`` the frozen thresholds are range-matched instead of being
    recomputed from the queue states.
    """
    if table is not None:
        return bisect_right(table.thresholds, packet_weight)
    thresholds = compute_thresholds(states, cfg, cfg.alpha if alpha is None else alpha)
    return bisect_right(thresholds, packet_weight)


def clamp_centroid(states: list[QueueState], i: int) -> None:
    """Pull queue i's centroid back between its neighbours' so centroids stay ordered."""
    q = states[i]
    if q.packet_count <= 0:
        return
    m = q.weight_sum / q.packet_count
    lo = queue_weight(states[i - 1]) if i > 0 else -math.inf
    hi = queue_weight(states[i + 1]) if i + 1 < len(states) else math.inf
    if m < lo:
        q.weight_sum = lo * q.packet_count
    elif m > hi:
        q.weight_sum = hi * q.packet_count


def assign(packet_weight: float, chosen: int, states: list[QueueState], keep_order: bool = True) -> None:
    """
    Account a packet into queue ``chosen``'s centroid.

    Args:
        packet_weight (float): Weight of the packet.
        chosen (int): Queue index in ``[0, k)``.
        states (list[QueueState]): All queue states of the port.
        keep_order (bool): Re-establish ``m_i <= m_{i+1}`` right away. The
            dataplane path passes False and leaves it to the next sync.
    """
    if not 0 <= chosen < len(states):
        raise ValueError(f"queue {chosen} out of range for {len(states)} queues")
    q = states[chosen]
    q.weight_sum += packet_weight
    q.packet_count += 1
    q.assigned += 1
    q.assigned_total += 1
    if keep_order:
        clamp_centroid(states, chosen)


def adapt_alpha(
    states: list[QueueState], cfg: ClusterConfig, alphas: Sequence[float]
) -> tuple[float, ...]:
    """
    One step of the closed loop that steers cluster sizes through the alphas.

    Threshold ``i`` has its own alpha. Raising it moves the threshold towards
    ``m_{i+1}`` and hands more packets to queue ``i``. While the largest and
    smallest size measures differ by more than the configured tolerance,
    every pair whose two measures differ steps its alpha towards the smaller
    side: down when queue ``i`` is the bigger cluster, up when queue ``i+1``
    is.

    Args:
        states (list[QueueState]): Queue states of the port.
        cfg (ClusterConfig): Provides step, bounds, tolerance and strategy.
        alphas (Sequence[float]): Current alpha of each threshold.

    Returns:
        tuple[float, ...]: The updated alphas, each within ``[alpha_min, alpha_max]``.
    """
    alphas = per_pair(alphas, len(states))
    sizes = size_measures(states, cfg)
    largest, smallest = max(sizes), min(sizes)
    if largest <= 0 or (smallest > 0 and largest / smallest <= cfg.imbalance_tolerance):
        return alphas
    stepped = []
    for alpha, p_i, p_ip1 in zip(alphas, sizes, sizes[1:]):
        if p_i > p_ip1:
            alpha -= cfg.alpha_step
        elif p_i < p_ip1:
            alpha += cfg.alpha_step
        stepped.append(min(cfg.alpha_max, max(cfg.alpha_min, alpha)))
    return tuple(stepped)


def control_plane_sync(
    states: list[QueueState],
    cfg: ClusterConfig,
    alphas: Sequence[float],
    now: float,
    dirty: set[int] | None = None,
) -> ThresholdTable:
    """Control-plane refresh: order the centroids touched since the last sync, freeze new thresholds."""
    for i in sorted(dirty if dirty is not None else range(len(states))):
        clamp_centroid(states, i)
    alphas = per_pair(alphas, len(states))
    return ThresholdTable(tuple(compute_thresholds(states, cfg, alphas)), epoch=now, alphas=alphas)


def initial_weights(k: int, base: float, preset: str = "ladder") -> list[float]:
    """Starting centroids.

    ``ladder`` spreads them geometrically from ``base``. The other presets
    start every packet in one place: ``low`` in the lowest-priority queue,
    ``high`` in the highest, ``middle`` in queue ``k // 2`` and ``split`` in
    either the highest or the lowest queue.
    """
    tiny, huge = base * 1e-6, base * 1e12
    if preset == "ladder":
        return [base * 2**i for i in range(k)]
    if preset == "low":
        return [tiny * (i + 1) for i in range(k)]
    if preset == "high":
        return [huge * 2**i for i in range(k)]
    if preset == "middle":
        mid = k // 2
        return [tiny * (i + 1) if i < mid else base if i == mid else huge * 2**i for i in range(k)]
    if preset == "split":
        return [base] * k
    raise ValueError(f"unknown initial centroid preset {preset!r}")


class QueueClusterEngine:
    """
    Clustering state of one egress port (or of one class of its queues).

    Args:
        cfg (ClusterConfig): Cluster settings; ``cfg.k`` queues are managed.
        base_weight (float): Weight of a single packet in the policy's units,
            used to build the initial centroids unless ``cfg.initial_weight``
            is set.
    """

    def __init__(self, cfg: ClusterConfig, base_weight: float) -> None:
        self.cfg = cfg
        base = cfg.initial_weight or base_weight
        self.states = [QueueState(initial_weight=w) for w in initial_weights(cfg.k, base, cfg.init_preset)]
        self.alphas = per_pair(cfg.alpha, cfg.k)
        self.table: ThresholdTable | None = None
        self.history: list[tuple[float, ...]] = []
        self._dirty: set[int] = set()
        self._syncs = 0

    @property
    def k(self) -> int:
        return self.cfg.k

    @property
    def weights(self) -> list[float]:
        return [queue_weight(q) for q in self.states]

    def thresholds(self) -> tuple[float, ...]:
        if self.cfg.dataplane_mode and self.table is not None:
            return self.table.thresholds
        return tuple(compute_thresholds(self.states, self.cfg, self.alphas))

    def sync(self, now: float) -> ThresholdTable:
        self.table = control_plane_sync(self.states, self.cfg, self.alphas, now, self._dirty)
        self._dirty.clear()
        self._syncs += 1
        return self.table

    def choose(self, packet_weight: float, now: float) -> int:
        if self.cfg.dataplane_mode:
            if self.table is None or now >= self.table.epoch + self.cfg.control_plane_period:
                self.sync(now)
            return choose_queue(packet_weight, self.states, self.cfg, table=self.table)
        return choose_queue(packet_weight, self.states, self.cfg, self.alphas)

    def assign(self, packet_weight: float, queue: int) -> None:
        if self.cfg.dataplane_mode:
            assign(packet_weight, queue, self.states, keep_order=False)
            self._dirty.add(queue)
        else:
            assign(packet_weight, queue, self.states)

    def enqueued(self, queue: int, size: int) -> None:
        q = self.states[queue]
        q.occupancy_packets += 1
        q.occupancy_bytes += size

    def dequeued(self, queue: int, size: int) -> None:
        q = self.states[queue]
        q.occupancy_packets -= 1
        q.occupancy_bytes -= size
        assert q.occupancy_packets >= 0 and q.occupancy_bytes >= 0

    def control_tick(self, now: float) -> None:
        """Periodic control work: alpha adaptation, centroid ageing, history."""
        if self.cfg.dataplane_mode:
            # the control plane reads ordered centroids
            for i in sorted(self._dirty):
                clamp_centroid(self.states, i)
            self._dirty.clear()
        self.alphas = adapt_alpha(self.states, self.cfg, self.alphas)
        decay = self.cfg.weight_decay
        if decay < 1.0:
            for q in self.states:
                # keep at least one packet's worth of memory so the centroid survives idle periods
                if q.packet_count * decay >= 1.0:
                    q.weight_sum *= decay
                    q.packet_count *= decay
                q.assigned *= decay
        if self.cfg.dataplane_mode and (
            self.table is None or now >= self.table.epoch + self.cfg.control_plane_period
        ):
            self.sync(now)
            logger.debug("control plane sync #{} at {:.6f}s: {}", self._syncs, now, self.table.thresholds)
        self.history.append(
            (now, *self.alphas, *self.thresholds(), *(q.assigned_total for q in self.states))
        )

    def history_columns(self) -> list[str]:
        return (
            ["epoch"]
            + [f"alpha_{i}" for i in range(1, self.k)]
            + [f"thres_{i}" for i in range(1, self.k)]
            + [f"assigned_{i}" for i in range(self.k)]
        )
