"""Engine assembly: wires the store, analyzer, scaffolds, gateway, chat,
collaborative docs, writing analytics, and the admin registry together."""

from __future__ import annotations

import threading
import uuid
from pathlib import Path
from typing import Iterable, Mapping

from . import admin as admin_mod
from .academic import AcademicLexicon, analyze_academic
from .admin import AdminRegistry, Plan
from .agents import AgentConfig, ChatService, Gateway, HttpProvider, ScriptedProvider
from .analyzer import (
    Analyzer,
    AnalyzerConfig,
    RuleSet,
    SrlLabel,
    StatementTable,
    action_time_proportions,
    load_taxonomy,
    score_instrument,
)
from .annotations import AnnotationSet
from .clock import Clock, MonotonicClock
from .collab import CollabStore, DocOp
from .config import EngineConfig
from .model import TraceEvent, parse_event_line, validate_event
from .originality import analyze_originality
from .scaffold import ScaffoldEngine, load_templates, load_trigger_file
from .store import EventStore, IngestAck
from .writing_llm import Rubric, RubricUnknown, WritingService


class Engine:
    def __init__(self, config: EngineConfig, clock: Clock | None = None):
        self.config = config
        self.clock = clock or MonotonicClock()
        data_dir = Path(config.data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)

        self.admin = AdminRegistry(data_dir)
        self.taxonomy = load_taxonomy(config.resolved("taxonomy"), config.taxonomy_profile)
        self.statements = StatementTable.from_file(config.resolved("statements"))
        self.ruleset = RuleSet.from_file(config.resolved("label_rules"), self.taxonomy)
        self.analyzer = Analyzer(self.ruleset, self.taxonomy, self.statements, config.analyzer)

        self.gateway = Gateway(timeout_s=config.gateway_timeout_s)
        self.scripted_provider = ScriptedProvider()
        self.gateway.register("scripted", self.scripted_provider)
        for spec in config.providers:
            if spec.kind == "scripted":
                self.gateway.register(spec.model_ref, ScriptedProvider(), spec.max_concurrent)
            else:
                self.gateway.register(
                    spec.model_ref,
                    HttpProvider(spec.endpoint, spec.model, spec.credential_env),
                    spec.max_concurrent,
                )

        self.store = EventStore(data_dir)
        self.store.add_commit_listener(self.analyzer.on_event)

        trigger_rules, condition_groups = load_trigger_file(config.resolved("trigger_rules"))
        templates = load_templates(config.resolved("templates"))
        self.scaffolds = ScaffoldEngine(
            trigger_rules,
            templates,
            condition_groups,
            self.gateway,
            self.analyzer,
            session_lookup=self.admin.session,
            task_description=self._task_description,
            model_ref=config.scaffold_model_ref,
            trace_sink=self._scaffold_trace,
            log_path=data_dir / "scaffolds.log",
            tick_ms=config.tick_ms,
        )

        self.chats = ChatService(self.gateway, trace_sink_factory=self._chat_trace_sink)
        self.collab = CollabStore(data_dir, trace_sink=self._doc_trace)
        self.writing = WritingService(self.gateway, config.writing_model_ref)

        self.lexicons: dict[str, AcademicLexicon] = {
            "default": AcademicLexicon.from_file(config.resolved("lexicon"))
        }
        self.source_sets: dict[str, list[tuple[str, str]]] = {}
        self.rubrics: dict[str, Rubric] = {}
        self._replay_after_restart()
        self._ticker: threading.Thread | None = None
        self._ticker_stop = threading.Event()

    # -- restart --------------------------------------------------------------

    def _replay_after_restart(self) -> None:
        # Rebuild analyzer state for any sessions already on disk; static
        # condition scores live in the session registry, not the stream.
        for session in self.admin._sessions.values():
            if self.store.has_session(session.session_id):
                for event in self.store.read_events(session.session_id):
                    self.analyzer.on_event(event)

    # -- time -------------------------------------------------------------------

    def task_ms(self, session_id: str) -> int:
        return self.admin.task_ms(session_id, self.clock.now_ms())

    def _task_description(self, session_id: str) -> str:
        session = self.admin.session(session_id)
        experiment = self.admin.experiment(session.experiment_id)
        return experiment.task.instruction_doc

    # -- trace sinks --------------------------------------------------------------

    def _engine_event(self, session_id: str, action: str, target: str, payload: Mapping) -> TraceEvent:
        session = self.admin.session(session_id)
        return TraceEvent(
            event_id=f"ev-{uuid.uuid4().hex}",
            session_id=session_id,
            learner_id=session.learner_id,
            experiment_id=session.experiment_id,
            client_timestamp_ms=self.clock.now_ms(),
            action=action,
            target=target,
            payload=dict(payload),
        )

    def _scaffold_trace(self, action: str, target: str, payload: Mapping) -> None:
        session_id = payload.get("session_id", "")
        event = self._engine_event(session_id, action, target, payload)
        self.store.ingest(event, lambda: self.task_ms(session_id))

    def _chat_trace_sink(self, session_id: str):
        def sink(action: str, target: str, payload: Mapping) -> None:
            event = self._engine_event(session_id, action, target, payload)
            self.store.ingest(event, lambda: self.task_ms(session_id))

        return sink

    def _doc_trace(self, session_id: str, action: str, target: str, payload: Mapping) -> None:
        event = self._engine_event(session_id, action, target, payload)
        self.store.ingest(event, lambda: self.task_ms(session_id))

    # -- ingestion ------------------------------------------------------------------

    def ingest_raw(self, raw: Mapping) -> IngestAck:
        session_id = raw.get("session_id")
        if not isinstance(session_id, str) or not session_id:
            event = validate_event(raw)  # produces the precise validation error
            session_id = event.session_id
        self.admin.require_active(session_id)
        return self.store.ingest_raw(raw, session_id, lambda: self.task_ms(session_id))

    def ingest_event(self, event: TraceEvent) -> IngestAck:
        self.admin.require_active(event.session_id)
        return self.store.ingest(event, lambda: self.task_ms(event.session_id))

    def set_phase(self, session_id: str, phase: str) -> None:
        """Phase transitions are trace events so label replay sees them."""
        self.admin.set_phase(session_id, phase, self.clock.now_ms())
        event = self._engine_event(session_id, "SESSION_PHASE", phase, {})
        self.store.ingest(event, lambda: self.task_ms(session_id))

    # -- labels ------------------------------------------------------------------------

    def labels(self, session_id: str) -> list[SrlLabel]:
        if not self.store.has_session(session_id):
            self.admin.session(session_id)  # raises SessionUnknown if truly unknown
            return []
        return self.analyzer.label_stream(session_id, self.store.read_events(session_id))

    def replay_export(self, lines: Iterable[bytes]) -> dict[str, list[SrlLabel]]:
        by_session: dict[str, list[TraceEvent]] = {}
        for line in lines:
            if not line.strip():
                continue
            event = parse_event_line(line)
            by_session.setdefault(event.session_id, []).append(event)
        return {
            session_id: self.analyzer.label_stream(session_id, events)
            for session_id, events in sorted(by_session.items())
        }

    # -- instruments ----------------------------------------------------------------------

    def submit_instrument(self, session_id: str, kind: str, responses, key) -> float:
        self.admin.require_active(session_id)
        score = score_instrument(responses, key)
        if kind == "strategy_knowledge":
            self.analyzer.set_static_scores(session_id, strategy=score)
        elif kind == "prior_knowledge":
            self.analyzer.set_static_scores(session_id, prior=score)
        else:
            raise ValueError(f"unknown instrument kind {kind!r}")
        return score

    # -- intervals / proportions -------------------------------------------------------------

    def aggregate_interval(self, session_id: str, k: int):
        self.admin.session(session_id)
        return self.analyzer.aggregate_interval(session_id, k, now_task_ms=self.task_ms(session_id))

    def proportions(self, session_id: str) -> dict[str, float]:
        self.admin.session(session_id)
        if not self.store.has_session(session_id):
            raise admin_mod.SessionUnknown(session_id)
        engine = self.analyzer.engine_for(session_id)
        return action_time_proportions(engine)

    # -- plans -----------------------------------------------------------------------------------

    def save_plan(self, plan: Plan) -> IngestAck:
        self.admin.require_active(plan.session_id)
        self.admin.require_tool(plan.session_id, "planner")
        self.admin.save_plan(plan)
        event = self._engine_event(plan.session_id, "SAVE_PLANNER", "planner", plan.to_doc())
        return self.store.ingest(event, lambda: self.task_ms(plan.session_id))

    # -- writing -----------------------------------------------------------------------------------

    def analyze(self, session_id: str | None, text: str, kinds: Iterable[str],
                source_set_id: str = "", lexicon_id: str = "default") -> AnnotationSet:
        if session_id is not None:
            self.admin.require_tool(session_id, "writing_analytics")
        combined = AnnotationSet.for_text(text)
        for kind in kinds:
            if kind == "originality":
                sources = self.source_sets.get(source_set_id, [])
                result = analyze_originality(text, sources)
            elif kind == "academic":
                result = analyze_academic(text, self.lexicons.get(lexicon_id))
            elif kind == "basic":
                result = self.writing.analyze_basic(text)
            elif kind == "cognition":
                result = self.writing.classify_cognition(text)
            else:
                raise ValueError(f"unknown analysis kind {kind!r}")
            combined.annotations.extend(result.annotations)
        combined.annotations.sort(key=lambda a: (a.kind, a.start, a.end))
        combined.validate(len(text))
        return combined

    def grade(self, session_id: str | None, text: str, rubric_id: str):
        if session_id is not None:
            self.admin.require_tool(session_id, "writing_analytics")
        rubric = self.rubrics.get(rubric_id)
        if rubric is None:
            raise RubricUnknown(rubric_id)
        grade = self.writing.grade_submission(text, rubric)
        if session_id is not None:
            event = self._engine_event(
                session_id, "SUBMIT_TEXT", rubric_id,
                {"rubric_id": rubric_id, "total_points": grade.total_points},
            )
            self.store.ingest(event, lambda: self.task_ms(session_id))
        return grade

    # -- chats ----------------------------------------------------------------------------------------

    def configure_chat(self, session_id: str, mode: str, agents: list[AgentConfig], chat_id: str | None = None):
        self.admin.require_active(session_id)
        self.admin.require_tool(session_id, "chat")
        return self.chats.configure_chat(session_id, mode, agents, chat_id)

    def send_chat_turn(self, chat_id: str, text: str, addressee: str):
        chat = self.chats.chat(chat_id)
        self.admin.require_tool(chat.session_id, "chat")
        return self.chats.send_turn(chat_id, text, addressee)

    # -- docs ------------------------------------------------------------------------------------------

    def create_doc(self, creator_session_id: str, participants: Mapping[str, str], doc_id: str | None = None) -> str:
        session = self.admin.require_active(creator_session_id)
        self.admin.require_tool(creator_session_id, "collab_doc")
        return self.collab.create_doc(session.experiment_id, participants, doc_id)

    def submit_doc_op(self, op: DocOp) -> tuple[DocOp, int]:
        doc = self.collab.doc(op.doc_id)
        session_id = doc.participants.get(op.author)
        if session_id is not None:
            self.admin.require_tool(session_id, "collab_doc")
        return self.collab.submit_op(op)

    # -- scaffolds ----------------------------------------------------------------------------------------

    def scaffold_stream(self, session_id: str, from_index: int = 0):
        self.admin.session(session_id)
        self.admin.require_tool(session_id, "instruction_panel")
        return self.scaffolds.subscribe(session_id, from_index)

    def ack_scaffold(self, message_id: str, kind: str = "shown"):
        return self.scaffolds.ack(message_id, kind)

    def tick_session(self, session_id: str) -> list:
        now = self.task_ms(session_id)
        if now < 0:
            return []
        return self.scaffolds.tick(session_id, now)

    def start_ticker(self) -> None:
        if self._ticker is not None:
            return
        self._ticker_stop.clear()

        def run():
            while not self._ticker_stop.wait(self.config.tick_ms / 1000):
                for session in list(self.admin._sessions.values()):
                    if session.status == "active" and session.task_started_at_ms is not None:
                        try:
                            self.tick_session(session.session_id)
                        except Exception:
                            continue

        self._ticker = threading.Thread(target=run, daemon=True, name="scaffold-ticker")
        self._ticker.start()

    def stop_ticker(self) -> None:
        self._ticker_stop.set()
        if self._ticker is not None:
            self._ticker.join(timeout=2)
            self._ticker = None

    # -- registries --------------------------------------------------------------------------------------------

    def register_source_set(self, source_set_id: str, sources: list[tuple[str, str]]) -> None:
        self.source_sets[source_set_id] = list(sources)

    def register_lexicon(self, lexicon_id: str, doc: Mapping) -> None:
        self.lexicons[lexicon_id] = AcademicLexicon.from_doc(doc)

    def register_rubric(self, doc: Mapping) -> None:
        rubric = Rubric.from_doc(doc)
        self.rubrics[rubric.rubric_id] = rubric

    # -- export / import ----------------------------------------------------------------------------------------

    def export(self, experiment_id: str, sessions: Iterable[str] | None = None) -> bytes:
        self.admin.experiment(experiment_id)
        return self.store.export_bytes(experiment_id, sessions)

    def import_export(self, data: bytes) -> int:
        count = 0
        for line in data.splitlines():
            if not line.strip():
                continue
            self.store.import_line(line)
            count += 1
        return count

    def close(self) -> None:
        self.stop_ticker()
        self.store.close()
