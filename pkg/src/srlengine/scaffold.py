"""Trigger evaluation and scaffold delivery on the session task clock.

A trigger rule names a critical process and a deadline (or a window) on the
task clock. On every evaluation tick the engine fires rules whose process has
not produced any label starting before the deadline. A fired rule assembles a
prompt from its template — embedding all eight condition statements for
condition-personalized groups, none for process-only groups — asks the
gateway for the scaffold text, and emits the message on the session's
scaffold stream. If the gateway fails, the template's fallback text ships
instead, flagged degraded: a late scaffold is a lost scaffold.
"""

from __future__ import annotations

import json
import queue
import re
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .agents import Gateway, GatewayError, ProviderRequest
from .analyzer import Analyzer, ConditionSnapshot
from .model import SessionState, canonical_json

TEMPLATE_SLOTS = ("task_description", "missing_process", "condition_statements", "style_constraints")
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

SCAFFOLD_SYSTEM_PROMPT = "You generate short scaffolding messages shown in a learner's instruction panel."

DEFAULT_TICK_MS = 10000


class TemplateUnknown(KeyError):
    pass


class UnboundSlot(ValueError):
    pass


class AlreadyIssued(RuntimeError):
    pass


class TriggerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerRule:
    rule_id: str
    critical_process: str
    template_id: str
    applicable_groups: frozenset[str]
    deadline_ms: int | None = None
    window: tuple[int, int] | None = None
    one_shot: bool = True

    def __post_init__(self):
        if (self.deadline_ms is None) == (self.window is None):
            raise TriggerConfigError(f"rule {self.rule_id!r}: exactly one of deadline_ms or window required")
        if self.deadline_ms is not None and self.deadline_ms <= 0:
            raise TriggerConfigError(f"rule {self.rule_id!r}: deadline_ms must be positive")
        if self.window is not None and not (0 <= self.window[0] < self.window[1]):
            raise TriggerConfigError(f"rule {self.rule_id!r}: window must be non-empty")

    @property
    def due_ms(self) -> int:
        return self.deadline_ms if self.deadline_ms is not None else self.window[1]


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    style_constraints: str
    fallback_text: str

    def __post_init__(self):
        unknown = [name for name in _PLACEHOLDER_RE.findall(self.body) if name not in TEMPLATE_SLOTS]
        if unknown:
            raise TriggerConfigError(f"template {self.template_id!r} uses undeclared slots: {unknown}")

    def render(self, slots: Mapping[str, str]) -> str:
        missing = [name for name in _PLACEHOLDER_RE.findall(self.body) if name not in slots]
        if missing:
            raise UnboundSlot(f"template {self.template_id!r}: unbound slots {missing}")
        out = self.body
        for name in TEMPLATE_SLOTS:
            if name in slots:
                out = out.replace("{" + name + "}", slots[name])
        return out


@dataclass
class ScaffoldMessage:
    message_id: str
    session_id: str
    rule_id: str
    template_id: str
    rendered_prompt: str
    scaffold_text: str
    issued_at_ms: int
    delivery_status: str = "pending"  # pending | shown | acknowledged
    degraded: bool = False
    group: str = ""
    missing_process: str = ""
    condition_statements: tuple[str, ...] = ()
    task_description: str = ""

    def to_doc(self) -> dict:
        return {
            "message_id": self.message_id,
            "session_id": self.session_id,
            "rule_id": self.rule_id,
            "template_id": self.template_id,
            "rendered_prompt": self.rendered_prompt,
            "scaffold_text": self.scaffold_text,
            "issued_at_ms": self.issued_at_ms,
            "delivery_status": self.delivery_status,
            "degraded": self.degraded,
            "group": self.group,
            "missing_process": self.missing_process,
            "condition_statements": list(self.condition_statements),
            "task_description": self.task_description,
        }


def load_trigger_file(path: str | Path) -> tuple[list[TriggerRule], set[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    rules = [
        TriggerRule(
            rule_id=str(r["rule_id"]),
            critical_process=str(r["critical_process"]),
            template_id=str(r["template_id"]),
            applicable_groups=frozenset(r.get("applicable_groups", [])),
            deadline_ms=r.get("deadline_ms"),
            window=tuple(r["window"]) if r.get("window") else None,
            one_shot=bool(r.get("one_shot", True)),
        )
        for r in doc["rules"]
    ]
    return rules, set(doc.get("condition_groups", []))


def load_templates(path: str | Path) -> dict[str, PromptTemplate]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    templates = {}
    for t in doc["templates"]:
        template = PromptTemplate(
            template_id=str(t["template_id"]),
            body=str(t["body"]),
            style_constraints=str(t.get("style_constraints", "")),
            fallback_text=str(t.get("fallback_text", "")),
        )
        templates[template.template_id] = template
    return templates


class _SessionScaffolds:
    __slots__ = ("lock", "fired", "messages", "subscribers")

    def __init__(self):
        self.lock = threading.Lock()
        self.fired: set[str] = set()
        self.messages: list[ScaffoldMessage] = []
        self.subscribers: list[queue.Queue] = []


class ScaffoldEngine:
    def __init__(
        self,
        rules: Iterable[TriggerRule],
        templates: Mapping[str, PromptTemplate],
        condition_groups: Iterable[str],
        gateway: Gateway,
        analyzer: Analyzer,
        session_lookup: Callable[[str], SessionState],
        task_description: Callable[[str], str],
        model_ref: str = "scripted",
        trace_sink: Callable[[str, str, dict], None] | None = None,
        log_path: str | Path | None = None,
        tick_ms: int = DEFAULT_TICK_MS,
    ):
        self.rules = tuple(rules)
        for rule in self.rules:
            if rule.template_id not in templates:
                raise TemplateUnknown(rule.template_id)
        self.templates = dict(templates)
        self.condition_groups = set(condition_groups)
        self.gateway = gateway
        self.analyzer = analyzer
        self._session_lookup = session_lookup
        self._task_description = task_description
        self.model_ref = model_ref
        self._trace_sink = trace_sink
        self.tick_ms = tick_ms
        self._sessions: dict[str, _SessionScaffolds] = {}
        self._sessions_lock = threading.Lock()
        self._by_message: dict[str, tuple[str, ScaffoldMessage]] = {}
        self._log_path = Path(log_path) if log_path else None
        self._log_lock = threading.Lock()
        analyzer.watch_processes(r.critical_process for r in self.rules)

    def _state(self, session_id: str) -> _SessionScaffolds:
        state = self._sessions.get(session_id)
        if state is not None:
            return state
        with self._sessions_lock:
            return self._sessions.setdefault(session_id, _SessionScaffolds())

    # -- evaluation ----------------------------------------------------------

    def evaluate_triggers(self, session_id: str, now_ms: int) -> list[TriggerRule]:
        """Rules due to fire at now_ms. Read-only: issuing is a separate step."""
        session = self._session_lookup(session_id)
        state = self._state(session_id)
        engine = self.analyzer.engine_for(session_id)
        due = []
        for rule in self.rules:
            if session.group not in rule.applicable_groups:
                continue
            if now_ms < rule.due_ms:
                continue
            if rule.one_shot and rule.rule_id in state.fired:
                continue
            if rule.window is not None:
                present = engine.process_in_range(rule.critical_process, rule.window[0], rule.window[1])
            else:
                # Absence is judged strictly by labels starting before the deadline.
                present = engine.process_in_range(rule.critical_process, 0, rule.deadline_ms)
            if not present:
                due.append(rule)
        return due

    def assemble_prompt(self, rule: TriggerRule, snapshot: ConditionSnapshot, session: SessionState) -> str:
        template = self.templates.get(rule.template_id)
        if template is None:
            raise TemplateUnknown(rule.template_id)
        statements = snapshot.statements if session.group in self.condition_groups else ()
        slots = {
            "task_description": self._task_description(session.session_id),
            "missing_process": rule.critical_process,
            "condition_statements": "\n".join(statements),
            "style_constraints": template.style_constraints,
        }
        return template.render(slots)

    def issue_scaffold(self, session_id: str, rule: TriggerRule, now_ms: int) -> ScaffoldMessage:
        session = self._session_lookup(session_id)
        state = self._state(session_id)
        with state.lock:
            if rule.one_shot and rule.rule_id in state.fired:
                raise AlreadyIssued(f"rule {rule.rule_id} already issued for session {session_id}")
            state.fired.add(rule.rule_id)

        snapshot = self.analyzer.conditions(session_id)
        prompt = self.assemble_prompt(rule, snapshot, session)
        template = self.templates[rule.template_id]
        degraded = False
        try:
            reply = self.gateway.complete(
                ProviderRequest(
                    model_ref=self.model_ref,
                    messages=(("system", SCAFFOLD_SYSTEM_PROMPT), ("user", prompt)),
                )
            )
            text = reply.text
        except GatewayError:
            text = template.fallback_text
            degraded = True

        statements = snapshot.statements if session.group in self.condition_groups else ()
        message = ScaffoldMessage(
            message_id=f"scaffold-{uuid.uuid4().hex[:12]}",
            session_id=session_id,
            rule_id=rule.rule_id,
            template_id=rule.template_id,
            rendered_prompt=prompt,
            scaffold_text=text,
            issued_at_ms=now_ms,
            degraded=degraded,
            group=session.group,
            missing_process=rule.critical_process,
            condition_statements=statements,
            task_description=self._task_description(session_id),
        )
        with state.lock:
            state.messages.append(message)
            self._by_message[message.message_id] = (session_id, message)
            for sub in state.subscribers:
                sub.put(message)
        self._persist(message)
        return message

    def tick(self, session_id: str, now_ms: int) -> list[ScaffoldMessage]:
        issued = []
        for rule in self.evaluate_triggers(session_id, now_ms):
            try:
                issued.append(self.issue_scaffold(session_id, rule, now_ms))
            except AlreadyIssued:
                continue
        return issued

    # -- delivery ------------------------------------------------------------

    def messages(self, session_id: str) -> list[ScaffoldMessage]:
        return list(self._state(session_id).messages)

    def rule(self, rule_id: str) -> TriggerRule:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise KeyError(rule_id)

    def subscribe(self, session_id: str, from_index: int = 0) -> queue.Queue:
        state = self._state(session_id)
        sub: queue.Queue = queue.Queue()
        with state.lock:
            for message in state.messages[from_index:]:
                sub.put(message)
            state.subscribers.append(sub)
        return sub

    def unsubscribe(self, session_id: str, sub: queue.Queue) -> None:
        state = self._state(session_id)
        with state.lock:
            if sub in state.subscribers:
                state.subscribers.remove(sub)

    def ack(self, message_id: str, kind: str = "shown") -> ScaffoldMessage:
        entry = self._by_message.get(message_id)
        if entry is None:
            raise KeyError(message_id)
        session_id, message = entry
        state = self._state(session_id)
        with state.lock:
            if kind == "shown" and message.delivery_status == "pending":
                message.delivery_status = "shown"
                if self._trace_sink:
                    self._trace_sink("SCAFFOLD_SHOWN", message.message_id, {"rule_id": message.rule_id, "session_id": session_id})
            elif kind == "acknowledged" and message.delivery_status in ("pending", "shown"):
                message.delivery_status = "acknowledged"
                if self._trace_sink:
                    self._trace_sink("SCAFFOLD_ACK", message.message_id, {"rule_id": message.rule_id, "session_id": session_id})
        self._persist(message, update=True)
        return message

    def replay_prompt(self, message: ScaffoldMessage) -> str:
        """Re-render the stored provenance; byte-equal to rendered_prompt."""
        template = self.templates.get(message.template_id)
        if template is None:
            raise TemplateUnknown(message.template_id)
        slots = {
            "task_description": message.task_description,
            "missing_process": message.missing_process,
            "condition_statements": "\n".join(message.condition_statements),
            "style_constraints": template.style_constraints,
        }
        return template.render(slots)

    def _persist(self, message: ScaffoldMessage, update: bool = False) -> None:
        if self._log_path is None:
            return
        record = dict(message.to_doc())
        record["record"] = "update" if update else "issue"
        with self._log_lock:
            with open(self._log_path, "ab") as fh:
                fh.write(canonical_json(record) + b"\n")
