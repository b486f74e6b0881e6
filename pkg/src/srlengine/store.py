"""Append-only trace event store with per-session ordering, dedup, and fan-out.

One log file per session, one canonical JSON line per committed event. A line
is written (unbuffered, straight to the kernel) before the ack is returned,
so an acked event survives a process kill. In-memory state is only an index
(byte offsets, dedup tail, counters) and is rebuilt by scanning the logs on
open.
"""

from __future__ import annotations

import os
import queue
import threading
from collections import Counter, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

from .model import (
    DEFAULT_VOCABULARY,
    MalformedField,
    TraceEvent,
    canonical_serialize,
    parse_event_line,
    validate_event,
)

# Most-recent event_ids remembered per session for duplicate detection.
DEDUP_WINDOW = 131072

_CLOSE = object()


class SessionUnknown(KeyError):
    pass


class ExperimentUnknown(KeyError):
    pass


@dataclass(frozen=True)
class IngestAck:
    event_id: str
    server_seq: int
    status: str  # "committed" | "duplicate"

    def to_doc(self) -> dict:
        return {"event_id": self.event_id, "server_seq": self.server_seq, "status": self.status}


class Subscription:
    """Ordered, gap-free view of one session's committed events."""

    def __init__(self):
        self._queue: queue.Queue = queue.Queue()
        self._closed = False

    def _push(self, event: TraceEvent) -> None:
        self._queue.put(event)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._queue.put(_CLOSE)

    def get(self, timeout: float | None = None) -> TraceEvent | None:
        """Next event, or None when closed / timed out."""
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _CLOSE:
            return None
        return item

    def drain(self) -> list[TraceEvent]:
        out = []
        while True:
            try:
                item = self._queue.get_nowait()
            except queue.Empty:
                return out
            if item is _CLOSE:
                return out
            out.append(item)


class _SessionLog:
    __slots__ = (
        "session_id",
        "path",
        "fd",
        "offsets",
        "end_offset",
        "next_seq",
        "dedup",
        "dedup_order",
        "lock",
        "subscribers",
        "experiment_id",
    )

    def __init__(self, session_id: str, path: Path):
        self.session_id = session_id
        self.path = path
        self.fd: int = -1
        self.offsets: list[int] = []
        self.end_offset = 0
        self.next_seq = 0
        self.dedup: dict[str, int] = {}
        self.dedup_order: deque[str] = deque()
        self.lock = threading.Lock()
        self.subscribers: list[Subscription] = []
        self.experiment_id: str | None = None

    def remember(self, event_id: str, seq: int) -> None:
        self.dedup[event_id] = seq
        self.dedup_order.append(event_id)
        if len(self.dedup_order) > DEDUP_WINDOW:
            evicted = self.dedup_order.popleft()
            self.dedup.pop(evicted, None)


class EventStore:
    """Durable, ordered, deduplicating event log keyed by (session, seq)."""

    def __init__(self, data_dir: str | os.PathLike, vocabulary: frozenset[str] = DEFAULT_VOCABULARY):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.vocabulary = vocabulary
        self._logs: dict[str, _SessionLog] = {}
        self._logs_lock = threading.Lock()
        self._experiments: dict[str, set[str]] = {}
        self._action_counts: dict[str, Counter] = {}
        self._learner_counts: dict[str, Counter] = {}
        self._counters_lock = threading.Lock()
        self._listeners: list[Callable[[TraceEvent], None]] = []
        self._scan()

    # -- lifecycle ---------------------------------------------------------

    def _scan(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.log")):
            session_id = _decode_name(path.stem)
            log = _SessionLog(session_id, path)
            offset = 0
            with open(path, "rb") as fh:
                for line in fh:
                    event = parse_event_line(line, self.vocabulary)
                    log.offsets.append(offset)
                    offset += len(line)
                    log.remember(event.event_id, event.server_seq)
                    self._count(event)
                    log.experiment_id = event.experiment_id
            log.end_offset = offset
            log.next_seq = len(log.offsets)
            if log.experiment_id is not None:
                self._experiments.setdefault(log.experiment_id, set()).add(session_id)
            self._logs[session_id] = log

    def close(self) -> None:
        with self._logs_lock:
            for log in self._logs.values():
                with log.lock:
                    if log.fd >= 0:
                        os.close(log.fd)
                        log.fd = -1
                    for sub in log.subscribers:
                        sub.close()
                    log.subscribers.clear()

    def add_commit_listener(self, listener: Callable[[TraceEvent], None]) -> None:
        """Listener runs once per committed event, in commit order per session."""
        self._listeners.append(listener)

    # -- write path --------------------------------------------------------

    def _log_for(self, session_id: str) -> _SessionLog:
        log = self._logs.get(session_id)
        if log is not None:
            return log
        with self._logs_lock:
            log = self._logs.get(session_id)
            if log is None:
                log = _SessionLog(session_id, self.sessions_dir / f"{_encode_name(session_id)}.log")
                self._logs[session_id] = log
            return log

    def _count(self, event: TraceEvent) -> None:
        with self._counters_lock:
            self._action_counts.setdefault(event.experiment_id, Counter())[event.action] += 1
            self._learner_counts.setdefault(event.experiment_id, Counter())[event.learner_id] += 1

    def ingest_raw(self, raw: Mapping, session_id: str, task_ms: Callable[[], int]) -> IngestAck:
        event = validate_event(raw, self.vocabulary)
        if event.session_id != session_id:
            raise MalformedField("session_id", "document session_id does not match the ingest session")
        return self.ingest(event, task_ms)

    def ingest(self, event: TraceEvent, task_ms: Callable[[], int]) -> IngestAck:
        """Assign the next seq, durably append, fan out. Idempotent by event_id."""
        log = self._log_for(event.session_id)
        with log.lock:
            prior = log.dedup.get(event.event_id)
            if prior is not None:
                return IngestAck(event.event_id, prior, "duplicate")
            seq = log.next_seq
            committed = event.committed(seq, task_ms())
            line = canonical_serialize(committed) + b"\n"
            if log.fd < 0:
                log.fd = os.open(log.path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
            os.write(log.fd, line)
            log.offsets.append(log.end_offset)
            log.end_offset += len(line)
            log.next_seq = seq + 1
            log.remember(event.event_id, seq)
            if log.experiment_id is None:
                log.experiment_id = event.experiment_id
                with self._logs_lock:
                    self._experiments.setdefault(event.experiment_id, set()).add(event.session_id)
            self._count(committed)
            for listener in self._listeners:
                listener(committed)
            for sub in log.subscribers:
                sub._push(committed)
        return IngestAck(event.event_id, seq, "committed")

    def import_line(self, line: bytes) -> IngestAck:
        """Re-append an exported committed event verbatim (seq and ms preserved)."""
        event = parse_event_line(line, self.vocabulary)
        if event.server_seq is None or event.server_ms is None:
            raise MalformedField("server_seq", "imported events must be committed documents")
        log = self._log_for(event.session_id)
        with log.lock:
            prior = log.dedup.get(event.event_id)
            if prior is not None:
                return IngestAck(event.event_id, prior, "duplicate")
            if event.server_seq != log.next_seq:
                raise MalformedField("server_seq", f"import gap: expected {log.next_seq}, got {event.server_seq}")
            data = canonical_serialize(event) + b"\n"
            if log.fd < 0:
                log.fd = os.open(log.path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
            os.write(log.fd, data)
            log.offsets.append(log.end_offset)
            log.end_offset += len(data)
            log.next_seq += 1
            log.remember(event.event_id, event.server_seq)
            if log.experiment_id is None:
                log.experiment_id = event.experiment_id
                with self._logs_lock:
                    self._experiments.setdefault(event.experiment_id, set()).add(event.session_id)
            self._count(event)
            for listener in self._listeners:
                listener(event)
            for sub in log.subscribers:
                sub._push(event)
        return IngestAck(event.event_id, event.server_seq, "committed")

    # -- read path ---------------------------------------------------------

    def has_session(self, session_id: str) -> bool:
        return session_id in self._logs

    def session_length(self, session_id: str) -> int:
        log = self._logs.get(session_id)
        return log.next_seq if log else 0

    @staticmethod
    def _read_locked(log: _SessionLog, from_seq: int, to_seq: int | None) -> list[bytes]:
        # Caller holds log.lock.
        end = log.next_seq if to_seq is None else min(to_seq, log.next_seq)
        if from_seq >= end:
            return []
        start_off = log.offsets[from_seq]
        end_off = log.end_offset if end == log.next_seq else log.offsets[end]
        with open(log.path, "rb") as fh:
            fh.seek(start_off)
            data = fh.read(end_off - start_off)
        return data.splitlines()

    def read_lines(self, session_id: str, from_seq: int = 0, to_seq: int | None = None) -> Iterator[bytes]:
        log = self._logs.get(session_id)
        if log is None:
            raise SessionUnknown(session_id)
        with log.lock:
            lines = self._read_locked(log, from_seq, to_seq)
        return iter(lines)

    def read_events(self, session_id: str, from_seq: int = 0, to_seq: int | None = None) -> list[TraceEvent]:
        return [parse_event_line(line, self.vocabulary) for line in self.read_lines(session_id, from_seq, to_seq)]

    def subscribe(self, session_id: str, from_seq: int = 0) -> Subscription:
        """Backlog from `from_seq`, then live events; no gaps, no duplicates."""
        if from_seq < 0:
            raise ValueError("from_seq must be >= 0")
        log = self._logs.get(session_id)
        if log is None:
            raise SessionUnknown(session_id)
        sub = Subscription()
        with log.lock:
            for line in self._read_locked(log, from_seq, None):
                sub._push(parse_event_line(line, self.vocabulary))
            log.subscribers.append(sub)
        return sub

    def unsubscribe(self, session_id: str, sub: Subscription) -> None:
        log = self._logs.get(session_id)
        if log is None:
            return
        with log.lock:
            if sub in log.subscribers:
                log.subscribers.remove(sub)
        sub.close()

    def experiment_sessions(self, experiment_id: str) -> list[str]:
        with self._logs_lock:
            return sorted(self._experiments.get(experiment_id, set()))

    def export_lines(self, experiment_id: str, sessions: Iterable[str] | None = None) -> Iterator[bytes]:
        """Byte-deterministic export ordered by (session_id, server_seq)."""
        if sessions is None:
            chosen = self.experiment_sessions(experiment_id)
        else:
            chosen = sorted(set(sessions))
        for session_id in chosen:
            if session_id not in self._logs:
                continue
            yield from self.read_lines(session_id)

    def export_bytes(self, experiment_id: str, sessions: Iterable[str] | None = None) -> bytes:
        return b"".join(line + b"\n" for line in self.export_lines(experiment_id, sessions))

    # -- stats hooks -------------------------------------------------------

    def experiment_action_counts(self, experiment_id: str) -> Counter:
        with self._counters_lock:
            return Counter(self._action_counts.get(experiment_id, Counter()))

    def experiment_learner_counts(self, experiment_id: str) -> Counter:
        with self._counters_lock:
            return Counter(self._learner_counts.get(experiment_id, Counter()))


def _encode_name(session_id: str) -> str:
    # Session ids are opaque bytes; hex-escape anything unsafe for a filename.
    return "".join(c if c.isalnum() or c in "-_." else f"%{ord(c):02x}" for c in session_id)


def _decode_name(name: str) -> str:
    out = []
    i = 0
    while i < len(name):
        if name[i] == "%" and i + 3 <= len(name):
            out.append(chr(int(name[i + 1 : i + 3], 16)))
            i += 3
        else:
            out.append(name[i])
            i += 1
    return "".join(out)
