from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import threading
import time

import pytest

from srlengine.model import validate_event
from srlengine.store import EventStore, SessionUnknown

from conftest import event_doc


def make_store(tmp_path) -> EventStore:
    return EventStore(tmp_path / "data")


def ingest(store: EventStore, doc: dict, ms: int = 0):
    return store.ingest(validate_event(doc), lambda: ms)


def test_first_event_gets_seq_zero(tmp_path):
    store = make_store(tmp_path)
    ack = ingest(store, event_doc(0))
    assert ack.server_seq == 0
    assert ack.status == "committed"


def test_duplicate_returns_original_ack(tmp_path):
    store = make_store(tmp_path)
    first = ingest(store, event_doc(0))
    duplicate = ingest(store, event_doc(0))
    assert duplicate.status == "duplicate"
    assert duplicate.server_seq == first.server_seq == 0
    assert store.session_length("s1") == 1


def test_duplicate_not_redelivered_to_listeners(tmp_path):
    store = make_store(tmp_path)
    seen = []
    store.add_commit_listener(lambda e: seen.append(e.event_id))
    ingest(store, event_doc(0))
    ingest(store, event_doc(0))
    assert seen == ["e0"]


def test_read_back_in_seq_order(tmp_path):
    store = make_store(tmp_path)
    for i in range(5):
        ingest(store, event_doc(i), ms=i * 10)
    events = store.read_events("s1")
    assert [e.server_seq for e in events] == [0, 1, 2, 3, 4]
    assert [e.server_ms for e in events] == [0, 10, 20, 30, 40]


def test_concurrent_producers_one_session(tmp_path):
    """4 producers, 1000 events: read-back must be seq 0..999 with each seq
    holding exactly the event acked at that seq (harness commit log)."""
    store = make_store(tmp_path)
    acks: dict[str, int] = {}
    lock = threading.Lock()

    def produce(worker: int):
        for i in range(250):
            doc = event_doc(worker * 1000 + i, action="ESSAY_EDIT")
            ack = ingest(store, doc)
            with lock:
                acks[doc["event_id"]] = ack.server_seq

    threads = [threading.Thread(target=produce, args=(w,)) for w in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    events = store.read_events("s1")
    assert [e.server_seq for e in events] == list(range(1000))
    assert len(acks) == 1000
    for event in events:
        assert acks[event.event_id] == event.server_seq


def test_subscribe_full_replay_then_live(tmp_path):
    store = make_store(tmp_path)
    for i in range(5):
        ingest(store, event_doc(i))
    sub = store.subscribe("s1", from_seq=0)
    got = [sub.get(timeout=1).server_seq for _ in range(5)]
    assert got == [0, 1, 2, 3, 4]
    ingest(store, event_doc(5))
    assert sub.get(timeout=1).server_seq == 5


def test_subscribe_offset_replay(tmp_path):
    store = make_store(tmp_path)
    for i in range(5):
        ingest(store, event_doc(i))
    sub = store.subscribe("s1", from_seq=3)
    assert [sub.get(timeout=1).server_seq for _ in range(2)] == [3, 4]


def test_subscriber_never_sees_gap_mid_burst(tmp_path):
    store = make_store(tmp_path)
    ingest(store, event_doc(0))
    received: list[int] = []
    stop = threading.Event()

    def producer():
        for i in range(1, 400):
            ingest(store, event_doc(i))
        stop.set()

    t = threading.Thread(target=producer)
    t.start()
    time.sleep(0.001)
    sub = store.subscribe("s1", from_seq=0)
    t.join()
    while True:
        event = sub.get(timeout=0.2)
        if event is None:
            break
        received.append(event.server_seq)
        if event.server_seq == 399:
            break
    assert received == list(range(received[0], received[0] + len(received)))
    assert received[0] == 0 and received[-1] == 399


def test_subscribe_unknown_session(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(SessionUnknown):
        store.subscribe("nope", 0)


def test_export_empty_experiment(tmp_path):
    store = make_store(tmp_path)
    assert store.export_bytes("ghost") == b""


def test_export_deterministic_and_complete(tmp_path):
    store = make_store(tmp_path)
    committed: set[str] = set()
    for s, session in enumerate(("sA", "sB")):
        for i in range(10):
            doc = event_doc(s * 100 + i, session_id=session)
            ingest(store, doc)
            committed.add(doc["event_id"])
    first = store.export_bytes("x1")
    second = store.export_bytes("x1")
    assert first == second
    lines = [json.loads(l) for l in first.splitlines()]
    assert {l["event_id"] for l in lines} == committed
    keys = [(l["session_id"], l["server_seq"]) for l in lines]
    assert keys == sorted(keys)


def test_restart_preserves_acked_events(tmp_path):
    store = make_store(tmp_path)
    for i in range(20):
        ingest(store, event_doc(i), ms=i)
    # no close(): simulate an abrupt loss of the process state
    reopened = EventStore(tmp_path / "data")
    events = reopened.read_events("s1")
    assert [e.server_seq for e in events] == list(range(20))
    # dedup survives restart
    ack = reopened.ingest(validate_event(event_doc(3)), lambda: 0)
    assert ack.status == "duplicate" and ack.server_seq == 3
    # and the sequence continues without gaps
    ack = reopened.ingest(validate_event(event_doc(99)), lambda: 99)
    assert ack.server_seq == 20


_CHILD = r"""
import sys, time
from srlengine.model import validate_event
from srlengine.store import EventStore

store = EventStore(sys.argv[1])
i = 0
while True:
    doc = {
        "event_id": f"k{i}", "session_id": "kill", "learner_id": "l1",
        "experiment_id": "x1", "client_timestamp_ms": i, "action": "ESSAY_EDIT",
    }
    ack = store.ingest(validate_event(doc), lambda: i)
    sys.stdout.write(f"{ack.event_id} {ack.server_seq}\n")
    sys.stdout.flush()
    i += 1
"""


def test_kill_minus_nine_loses_no_acked_event(tmp_path):
    """Durability-before-ack: SIGKILL the ingesting process mid-stream and
    verify every event it acked is present after reopening the log."""
    data_dir = tmp_path / "data"
    proc = subprocess.Popen(
        [sys.executable, "-c", _CHILD, str(data_dir)],
        stdout=subprocess.PIPE,
        text=True,
    )
    acked: list[tuple[str, int]] = []
    for _ in range(500):
        line = proc.stdout.readline()
        event_id, seq = line.split()
        acked.append((event_id, int(seq)))
    os.kill(proc.pid, signal.SIGKILL)
    proc.wait()

    store = EventStore(data_dir)
    events = {e.server_seq: e.event_id for e in store.read_events("kill")}
    for event_id, seq in acked:
        assert events.get(seq) == event_id, f"acked event {event_id} (seq {seq}) lost"
