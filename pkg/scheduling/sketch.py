"""The Scheduling Count-Min (SCM) sketch.

``depth`` rows of ``width`` buckets. Each bucket keeps the last access time,
a counter (bytes or packets, whatever the caller increments by) and the queue
the last packet mapped to it was sent into. Buckets age lazily: a bucket not
touched for ``delta_t_message`` is treated as belonging to a new message and
is cleared by the next insert; one not touched for ``delta_t_flowlet`` marks
the start of a new flowlet, and its queue ID may be overwritten freely.

Queue indices follow priority: index 0 is the highest-priority queue.
"""
from collections import Counter
from dataclasses import dataclass
from enum import StrEnum
from functools import lru_cache
from typing import Hashable, Iterator

import mmh3

UNSET = -1

DEFAULT_DEPTH = 3
# 83KB per port at 12 bytes per bucket over three rows
DEFAULT_WIDTH = 2300
DEFAULT_DELTA_T_MESSAGE = 5e-3
DEFAULT_DELTA_T_FLOWLET = 500e-6


class PolicyKind(StrEnum):
    PRIORITY = "priority-ordered"
    FAIR = "fair"


@dataclass(slots=True)
class SketchBucket:
    timestamp: float = 0.0
    counter: int = 0
    queue_id: int = UNSET


@dataclass(frozen=True, slots=True)
class SketchQueryResult:
    weight_estimate: int
    last_seen: float
    is_new_message: bool
    is_new_flowlet: bool
    prev_queue: int = UNSET


@lru_cache(maxsize=1 << 16)
def bucket_indices(key: str, seeds: tuple[int, ...], width: int) -> tuple[int, ...]:
    """Column of ``key`` in every row, one seeded MurmurHash3 per row."""
    return tuple(mmh3.hash64(key, seed=seed, signed=False)[0] % width for seed in seeds)


class ScmSketch:
    """
    Count-Min sketch with per-bucket timestamps and last-queue labels.

    The caller passes the current simulated time on every call; times must not
    go backwards. Insert and query touch exactly ``depth`` buckets.

    Args:
        depth (int): Number of rows (hash functions).
        width (int): Buckets per row.
        delta_t_message (float): Idle time in seconds after which a flow's next
            packet starts a new message.
        delta_t_flowlet (float): Idle time in seconds after which a flow's next
            packet starts a new flowlet. Should exceed the worst queueing delay
            of the port for disorder avoidance to be sound.
        seeds (tuple[int, ...], optional): One distinct hash seed per row.
            Defaults to ``seed_base, seed_base + 1, ...``.
        seed_base (int): First default seed.
    """

    def __init__(
        self,
        depth: int = DEFAULT_DEPTH,
        width: int = DEFAULT_WIDTH,
        delta_t_message: float = DEFAULT_DELTA_T_MESSAGE,
        delta_t_flowlet: float = DEFAULT_DELTA_T_FLOWLET,
        seeds: tuple[int, ...] | None = None,
        seed_base: int = 0,
    ) -> None:
        if depth < 1 or width < 1:
            raise ValueError(f"sketch needs depth >= 1 and width >= 1, got {depth}x{width}")
        if seeds is None:
            seeds = tuple(seed_base + row for row in range(depth))
        if len(seeds) != depth or len(set(seeds)) != depth:
            raise ValueError(f"need {depth} distinct row seeds, got {seeds}")
        self.depth = depth
        self.width = width
        self.delta_t_message = delta_t_message
        self.delta_t_flowlet = delta_t_flowlet
        self.seeds = tuple(seeds)
        self.rows = [[SketchBucket() for _ in range(width)] for _ in range(depth)]
        self._last_now = 0.0

    def _buckets(self, flow_id: Hashable) -> list[SketchBucket]:
        columns = bucket_indices(str(flow_id), self.seeds, self.width)
        return [row[col] for row, col in zip(self.rows, columns)]

    def _tick(self, now: float) -> None:
        assert now >= self._last_now, f"sketch clock went backwards: {now} < {self._last_now}"
        self._last_now = now

    def insert(self, flow_id: Hashable, amount: int, now: float) -> None:
        """Add ``amount`` to the flow's counters, clearing buckets idle for a whole message gap."""
        self._tick(now)
        horizon = now - self.delta_t_message
        for bucket in self._buckets(flow_id):
            if bucket.timestamp < horizon:
                bucket.counter = amount
                bucket.queue_id = UNSET
            else:
                bucket.counter += amount
            bucket.timestamp = now

    def query(
        self, flow_id: Hashable, now: float, policy_kind: PolicyKind = PolicyKind.PRIORITY
    ) -> SketchQueryResult:
        """
        Read the flow's weight, age and previous queue without changing the sketch.

        Args:
            flow_id (Hashable): Flow key.
            now (float): Current simulated time.
            policy_kind (PolicyKind): Selects the rule used to merge queue IDs.

        Returns:
            SketchQueryResult: Minimum counter, oldest timestamp, message and
            flowlet flags. ``prev_queue`` is only filled in when the packet
            continues a flowlet; it is ``UNSET`` otherwise.
        """
        buckets = self._buckets(flow_id)
        weight = min(b.counter for b in buckets)
        last_seen = min(b.timestamp for b in buckets)
        new_flowlet = last_seen < now - self.delta_t_flowlet
        prev_queue = UNSET if new_flowlet else self._merge_queue_ids(buckets, policy_kind)
        return SketchQueryResult(
            weight_estimate=weight,
            last_seen=last_seen,
            is_new_message=last_seen < now - self.delta_t_message,
            is_new_flowlet=new_flowlet,
            prev_queue=prev_queue,
        )

    def update_queue_id(
        self, flow_id: Hashable, chosen_queue: int, now: float, policy_kind: PolicyKind
    ) -> None:
        """Label the flow's buckets with the queue its packet went to.

        Idle buckets (older than one flowlet gap) and unlabelled buckets take
        ``chosen_queue`` directly. Otherwise priority-ordered policies only
        move the label towards lower priority and fair policies keep it.
        """
        if chosen_queue < 0:
            raise ValueError(f"queue index must be nonnegative, got {chosen_queue}")
        horizon = now - self.delta_t_flowlet
        for bucket in self._buckets(flow_id):
            bucket.queue_id = _next_queue_id(bucket, chosen_queue, horizon, policy_kind)

    def get_prev_queue(self, flow_id: Hashable, now: float, policy_kind: PolicyKind) -> int:
        """Queue of the flow's previous packet, or ``UNSET`` when no bucket carries one.

        Only meaningful when the caller already knows the packet continues a flowlet.
        """
        return self._merge_queue_ids(self._buckets(flow_id), policy_kind)

    def record(
        self, flow_id: Hashable, amount: int, chosen_queue: int, now: float, policy_kind: PolicyKind
    ) -> None:
        """Per-packet write path: queue-ID update then insert, in one pass over the buckets.

        The queue rule is judged against each bucket's timestamp before this
        packet touched it. A bucket cleared by message aging keeps the queue
        this packet chose.
        """
        if chosen_queue < 0:
            raise ValueError(f"queue index must be nonnegative, got {chosen_queue}")
        self._tick(now)
        flowlet_horizon = now - self.delta_t_flowlet
        message_horizon = now - self.delta_t_message
        for bucket in self._buckets(flow_id):
            if bucket.timestamp < message_horizon:
                bucket.counter = amount
                bucket.queue_id = chosen_queue
            else:
                bucket.queue_id = _next_queue_id(bucket, chosen_queue, flowlet_horizon, policy_kind)
                bucket.counter += amount
            bucket.timestamp = now

    @staticmethod
    def _merge_queue_ids(buckets: list[SketchBucket], policy_kind: PolicyKind) -> int:
        labelled = [b for b in buckets if b.queue_id != UNSET]
        if not labelled:
            return UNSET
        if policy_kind == PolicyKind.PRIORITY:
            return min(b.queue_id for b in labelled)
        # fair: the least recently refreshed bucket is the least polluted by other flows
        oldest = min(b.timestamp for b in labelled)
        tied = [b.queue_id for b in labelled if b.timestamp == oldest]
        if len(tied) == 1:
            return tied[0]
        votes = Counter(tied)
        best = max(votes.values())
        return next(q for q in tied if votes[q] == best)

    def iter_buckets(self) -> Iterator[tuple[int, int, SketchBucket]]:
        for r, row in enumerate(self.rows):
            for c, bucket in enumerate(row):
                yield r, c, bucket

    def dump(self, skip_empty: bool = True) -> str:
        """
        Render the sketch state as text for debugging.

        One line per bucket, row-major: ``row<TAB>column<TAB>timestamp<TAB>counter<TAB>queue_id``
        with ``-`` for an unset queue. Lines starting with ``#`` are comments.

        Args:
            skip_empty (bool): Leave out buckets never written (counter 0, unset queue).

        Returns:
            str: The dump, newline terminated.
        """
        lines = [
            f"# scm depth={self.depth} width={self.width} "
            f"delta_t_message={self.delta_t_message!r} delta_t_flowlet={self.delta_t_flowlet!r}",
            "# row\tcolumn\ttimestamp\tcounter\tqueue_id",
        ]
        for r, c, b in self.iter_buckets():
            if skip_empty and b.counter == 0 and b.queue_id == UNSET:
                continue
            queue = "-" if b.queue_id == UNSET else str(b.queue_id)
            lines.append(f"{r}\t{c}\t{b.timestamp!r}\t{b.counter}\t{queue}")
        return "\n".join(lines) + "\n"


def _next_queue_id(
    bucket: SketchBucket, chosen_queue: int, flowlet_horizon: float, policy_kind: PolicyKind
) -> int:
    if bucket.timestamp < flowlet_horizon or bucket.queue_id == UNSET:
        return chosen_queue
    if policy_kind == PolicyKind.PRIORITY:
        return max(bucket.queue_id, chosen_queue)
    return bucket.queue_id
