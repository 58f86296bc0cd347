import numpy as np
import pytest

from scheduling.sketch import UNSET, PolicyKind, ScmSketch, bucket_indices


def test_weight_is_bytes_sent_before_the_packet():
    sketch = ScmSketch(depth=3, width=4096)
    for i in range(3):
        assert sketch.query("f", i * 1e-6).weight_estimate == 1460 * i
        sketch.insert("f", 1460, i * 1e-6)
    assert sketch.query("f", 3e-6).weight_estimate == 4380


def test_message_aging_clears_strictly_after_delta_t():
    sketch = ScmSketch(depth=2, width=64, delta_t_message=5e-3, delta_t_flowlet=5e-4)
    sketch.insert("f", 100, 0.0)
    sketch.insert("f", 100, 5e-3)
    assert sketch.query("f", 5e-3).weight_estimate == 200

    q = sketch.query("f", 1e-2 + 1e-9)
    assert q.is_new_message and q.is_new_flowlet
    sketch.insert("f", 50, 1e-2 + 1e-9)
    assert sketch.query("f", 1e-2 + 2e-9).weight_estimate == 50


def test_flowlet_gap_is_shorter_than_message_gap():
    sketch = ScmSketch(delta_t_message=5e-3, delta_t_flowlet=5e-4)
    sketch.record("f", 1500, 2, 0.0, PolicyKind.PRIORITY)
    q = sketch.query("f", 1e-3)
    assert q.is_new_flowlet and not q.is_new_message
    assert q.prev_queue == UNSET
    q = sketch.query("f", 1e-4)
    assert not q.is_new_flowlet and q.prev_queue == 2


def test_insert_resets_queue_label_of_stale_bucket():
    sketch = ScmSketch(depth=1, width=8)
    sketch.record("f", 10, 3, 0.0, PolicyKind.PRIORITY)
    sketch.insert("f", 10, 1.0)
    assert sketch.get_prev_queue("f", 1.0, PolicyKind.PRIORITY) == UNSET


def test_record_keeps_chosen_queue_after_message_clear():
    sketch = ScmSketch(depth=1, width=8)
    sketch.record("f", 10, 3, 0.0, PolicyKind.PRIORITY)
    sketch.record("f", 10, 1, 1.0, PolicyKind.PRIORITY)
    assert sketch.get_prev_queue("f", 1.0, PolicyKind.PRIORITY) == 1
    assert sketch.query("f", 1.0).weight_estimate == 10


def test_priority_label_only_moves_down():
    sketch = ScmSketch(depth=2, width=64)
    sketch.update_queue_id("f", 2, 0.0, PolicyKind.PRIORITY)
    sketch.update_queue_id("f", 1, 1e-6, PolicyKind.PRIORITY)
    assert sketch.get_prev_queue("f", 1e-6, PolicyKind.PRIORITY) == 2
    sketch.update_queue_id("f", 5, 2e-6, PolicyKind.PRIORITY)
    assert sketch.get_prev_queue("f", 2e-6, PolicyKind.PRIORITY) == 5


def test_fair_label_is_kept_within_a_flowlet():
    sketch = ScmSketch(depth=2, width=64)
    sketch.record("f", 1, 3, 0.0, PolicyKind.FAIR)
    sketch.record("f", 1, 0, 1e-6, PolicyKind.FAIR)
    assert sketch.query("f", 2e-6, PolicyKind.FAIR).prev_queue == 3


def test_unset_label_is_overwritten_for_fair_policies():
    sketch = ScmSketch(depth=2, width=64)
    sketch.insert("f", 1, 0.0)
    sketch.update_queue_id("f", 4, 1e-6, PolicyKind.FAIR)
    assert sketch.get_prev_queue("f", 1e-6, PolicyKind.FAIR) == 4


def test_fair_merge_prefers_oldest_bucket_then_majority():
    sketch = ScmSketch(depth=3, width=16)
    rows = [row[col] for row, col in zip(sketch.rows, bucket_indices("f", sketch.seeds, sketch.width))]
    for bucket, ts, queue in zip(rows, (2.0, 1.0, 3.0), (5, 6, 7)):
        bucket.timestamp, bucket.queue_id, bucket.counter = ts, queue, 1
    assert sketch.get_prev_queue("f", 3.0, PolicyKind.FAIR) == 6

    for bucket, queue in zip(rows, (4, 2, 2)):
        bucket.timestamp, bucket.queue_id = 1.0, queue
    assert sketch.get_prev_queue("f", 3.0, PolicyKind.FAIR) == 2
    assert sketch.get_prev_queue("f", 3.0, PolicyKind.PRIORITY) == 2


def test_rejects_negative_queue_and_duplicate_seeds():
    sketch = ScmSketch()
    with pytest.raises(ValueError):
        sketch.update_queue_id("f", -1, 0.0, PolicyKind.PRIORITY)
    with pytest.raises(ValueError):
        ScmSketch(depth=2, seeds=(7, 7))


def test_dump_lists_written_buckets():
    sketch = ScmSketch(depth=2, width=32)
    sketch.insert("f", 1500, 0.5)
    lines = sketch.dump().splitlines()
    assert lines[0].startswith("# scm depth=2 width=32")
    body = [line for line in lines if not line.startswith("#")]
    assert len(body) == 2
    row, column, timestamp, counter, queue = body[0].split("\t")
    assert (row, timestamp, counter, queue) == ("0", "0.5", "1500", "-")
    assert 0 <= int(column) < 32


def _check_log(rng, seed):
    """One randomized insertion log against exact message byte counts; returns exact hits."""
    depth, width, delta_t = int(rng.integers(1, 4)), int(rng.integers(4, 128)), 1e-3
    sketch = ScmSketch(depth=depth, width=width, delta_t_message=delta_t, delta_t_flowlet=delta_t / 10, seed_base=seed)
    log = rng.integers(int(rng.integers(1, 1001)), size=int(rng.integers(5, 40))).tolist()
    owners = [dict() for _ in range(depth)]
    columns = {f: bucket_indices(str(f), sketch.seeds, width) for f in set(log)}
    for f, cols in columns.items():
        for row, col in enumerate(cols):
            owners[row].setdefault(col, set()).add(f)
    exclusive = {f: any(len(owners[r][c]) == 1 for r, c in enumerate(cols)) for f, cols in columns.items()}

    sent: dict[int, int] = {}
    last: dict[int, float] = {}
    now, exact_hits = 0.0, 0
    for f in log:
        # gaps straddle the message timeout
        now += rng.exponential(4e-4)
        amount = int(rng.integers(64, 1501))
        if f not in last or last[f] < now - delta_t:
            sent[f] = 0
        q = sketch.query(f, now)
        estimate = 0 if q.is_new_message else q.weight_estimate
        assert estimate >= sent[f], f"log {seed}"
        if exclusive[f]:
            assert estimate == sent[f], f"log {seed}"
            exact_hits += 1
        sketch.insert(f, amount, now)
        sent[f] += amount
        last[f] = now
    return exact_hits


@pytest.mark.parametrize("logs", [1_000, pytest.param(10_000, marks=pytest.mark.slow)])
def test_estimates_never_undercount_and_are_exact_without_collisions(logs):
    rng = np.random.default_rng(7)
    assert sum(_check_log(rng, seed) for seed in range(logs)) > 0


@pytest.mark.parametrize("packets", [20_000, pytest.param(1_000_000, marks=pytest.mark.slow)])
def test_prev_queue_never_above_true_queue_within_a_flowlet(packets):
    rng = np.random.default_rng(11)
    k, n_flows, flowlet = 8, 500, 2e-4
    sketch = ScmSketch(depth=3, width=256, delta_t_message=1e-3, delta_t_flowlet=flowlet)
    last_time: dict[int, float] = {}
    last_queue: dict[int, int] = {}
    flows = rng.integers(n_flows, size=packets)
    gaps = rng.exponential(2e-6, size=packets)
    choices = rng.integers(k, size=packets)
    now = 0.0
    for f, gap, chosen in zip(flows.tolist(), gaps.tolist(), choices.tolist()):
        now += gap
        q = sketch.query(f, now, PolicyKind.PRIORITY)
        if f in last_time and last_time[f] >= now - flowlet:
            assert not q.is_new_flowlet
            assert q.prev_queue >= last_queue[f]
        sketch.record(f, 1500, chosen, now, PolicyKind.PRIORITY)
        last_time[f] = now
        last_queue[f] = chosen
