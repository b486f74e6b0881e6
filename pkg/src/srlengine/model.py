"""Shared domain types: trace events, the action vocabulary, sessions, taxonomies.

Everything here is a plain value type. Events are canonically serialized as
UTF-8 JSON with sorted keys so that equal events are byte-equal on the wire,
which the store, the export path, and the label-replay path all rely on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

# Actions whose occurrence flips a dynamic learning condition.
CONDITION_ACTIONS = (
    "SAVE_PLANNER",
    "TIMER",
    "TRY_OUT_TOOLS",
    "PAGE_NAVIGATION",
    "TASK_REQUIREMENT",
    "RUBRIC",
)

# Actions emitted by the workspace instrumentation and by the engine itself.
ENGINE_ACTIONS = (
    "ESSAY_EDIT",
    "NOTE_EDIT",
    "ANNOTATION_CREATE",
    "CHAT_SEND",
    "CHAT_RECEIVE",
    "DOC_OP",
    "PLAN_VIEW",
    "SUBMIT_TEXT",
    "SCAFFOLD_SHOWN",
    "SCAFFOLD_ACK",
    "SESSION_PHASE",
)

DEFAULT_VOCABULARY: frozenset[str] = frozenset(CONDITION_ACTIONS) | frozenset(ENGINE_ACTIONS)

PHASES = ("pre_task", "training", "main_task", "post_task")
SESSION_STATUSES = ("active", "completed", "abandoned")

MAX_ID_BYTES = 128

_EVENT_FIELDS = (
    "event_id",
    "session_id",
    "learner_id",
    "experiment_id",
    "client_timestamp_ms",
    "server_seq",
    "server_ms",
    "action",
    "target",
    "payload",
)

_ID_FIELDS = ("event_id", "session_id", "learner_id", "experiment_id")


class ValidationError(ValueError):
    """A raw event document failed validation. `field` names the offender."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class MissingField(ValidationError):
    pass


class UnknownAction(ValidationError):
    def __init__(self, action: str):
        super().__init__("action", f"unknown action {action!r}")
        self.action = action


class MalformedTimestamp(ValidationError):
    pass


class MalformedField(ValidationError):
    pass


@dataclass(frozen=True, eq=True)
class TraceEvent:
    """One timestamped learner action, the atom of all analytics.

    `server_seq` and `server_ms` are None until the store commits the event;
    `server_ms` is milliseconds on the session's task clock (-1 before the
    task clock starts). `client_timestamp_ms` is advisory only.
    """

    event_id: str
    session_id: str
    learner_id: str
    experiment_id: str
    client_timestamp_ms: int
    action: str
    target: str = ""
    payload: dict = field(default_factory=dict)
    server_seq: int | None = None
    server_ms: int | None = None

    def committed(self, server_seq: int, server_ms: int) -> "TraceEvent":
        return replace(self, server_seq=server_seq, server_ms=server_ms)


@dataclass(frozen=True)
class SessionState:
    session_id: str
    learner_id: str
    experiment_id: str
    group: str
    phase: str = "pre_task"
    status: str = "active"
    task_started_at_ms: int | None = None


@dataclass(frozen=True)
class SrlProcessTaxonomy:
    taxonomy_id: str
    processes: tuple[str, ...]
    model_profile: str = "CUSTOM"  # COPES | ZIMMERMAN | CUSTOM
    profile_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.processes)) != len(self.processes):
            raise ValueError("taxonomy process names must be unique")

    def __contains__(self, process: str) -> bool:
        return process in self.processes


def _check_payload_value(path: str, value: Any) -> None:
    if value is None or isinstance(value, (str, bool, int)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise MalformedField(path, "non-finite number in payload")
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            _check_payload_value(f"{path}[{i}]", item)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise MalformedField(path, "payload object keys must be strings")
            _check_payload_value(f"{path}.{key}", item)
        return
    raise MalformedField(path, f"unsupported payload value of type {type(value).__name__}")


def validate_event(raw: Mapping[str, Any], vocabulary: Iterable[str] = DEFAULT_VOCABULARY) -> TraceEvent:
    """Turn a parsed wire document into a TraceEvent or raise a ValidationError.

    Unknown top-level keys are preserved under payload (instrumentation tools
    evolve; we never reject extra detail). Explicit payload keys win over a
    colliding top-level extra.
    """
    if not isinstance(raw, Mapping):
        raise MalformedField("$", "event document must be an object")

    for name in _ID_FIELDS:
        value = raw.get(name)
        if value is None:
            raise MissingField(name, "required field is missing")
        if not isinstance(value, str) or not value:
            raise MalformedField(name, "must be a non-empty string")
        if len(value.encode("utf-8")) > MAX_ID_BYTES:
            raise MalformedField(name, f"identifier exceeds {MAX_ID_BYTES} bytes")

    if "client_timestamp_ms" not in raw:
        raise MissingField("client_timestamp_ms", "required field is missing")
    ts = raw["client_timestamp_ms"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedTimestamp("client_timestamp_ms", "must be integer milliseconds")

    action = raw.get("action")
    if action is None:
        raise MissingField("action", "required field is missing")
    if not isinstance(action, str):
        raise MalformedField("action", "must be a string")
    if action not in vocabulary:
        raise UnknownAction(action)

    target = raw.get("target", "")
    if not isinstance(target, str):
        raise MalformedField("target", "must be a string")

    payload = raw.get("payload", {})
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise MalformedField("payload", "must be an object")

    server_seq = raw.get("server_seq")
    if server_seq is not None and (isinstance(server_seq, bool) or not isinstance(server_seq, int) or server_seq < 0):
        raise MalformedField("server_seq", "must be a non-negative integer")
    server_ms = raw.get("server_ms")
    if server_ms is not None and (isinstance(server_ms, bool) or not isinstance(server_ms, int)):
        raise MalformedField("server_ms", "must be an integer")

    extras = {k: v for k, v in raw.items() if k not in _EVENT_FIELDS}
    if extras:
        merged = dict(extras)
        merged.update(payload)  # explicit payload keys win
        payload = merged
    _check_payload_value("payload", payload)

    return TraceEvent(
        event_id=raw["event_id"],
        session_id=raw["session_id"],
        learner_id=raw["learner_id"],
        experiment_id=raw["experiment_id"],
        client_timestamp_ms=ts,
        action=action,
        target=target,
        payload=payload,
        server_seq=server_seq,
        server_ms=server_ms,
    )


def _normalize_numbers(value: Any) -> Any:
    # Integral floats collapse to ints so that payloads that compare equal
    # under Python's cross-type numeric equality also serialize identically.
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return int(value) if value.is_integer() else value
    if isinstance(value, list):
        return [_normalize_numbers(v) for v in value]
    if isinstance(value, dict):
        return {k: _normalize_numbers(v) for k, v in value.items()}
    return value


def canonical_serialize(event: TraceEvent) -> bytes:
    """Deterministic byte encoding: sorted keys, compact separators, UTF-8."""
    doc = {
        "action": event.action,
        "client_timestamp_ms": event.client_timestamp_ms,
        "event_id": event.event_id,
        "experiment_id": event.experiment_id,
        "learner_id": event.learner_id,
        "payload": _normalize_numbers(event.payload) if event.payload else {},
        "server_ms": event.server_ms,
        "server_seq": event.server_seq,
        "session_id": event.session_id,
        "target": event.target,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def parse_event_line(line: bytes | str, vocabulary: Iterable[str] = DEFAULT_VOCABULARY) -> TraceEvent:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    return validate_event(json.loads(line), vocabulary)


def canonical_json(doc: Any) -> bytes:
    """Canonical encoding for non-event documents (labels, acks, exports)."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")
