"""SRL process labeling over ordered event streams.

Three label levels with increasing context:

  occurrence   one label per event from a context-light action map
  contingency  an event whose preceding window satisfies a pattern
  patterned    a configured action sequence completed a set number of times

Labeling is a pure function of (rules, taxonomy, ordered events): feeding the
same committed events through a fresh ``LabelEngine`` reproduces the same
labels byte for byte, which is what the export-replay workflow relies on.
The module also tracks the dynamic/static learning conditions, scores
pre-task instruments, and serves task-clock interval aggregates.
"""

from __future__ import annotations

import bisect
import json
import threading
from collections import Counter, deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .model import SrlProcessTaxonomy, TraceEvent, canonical_json

LEVELS = ("occurrence", "contingency", "patterned")
UNCLASSIFIED = "Unclassified"

DYNAMIC_FLAGS = (
    "plan_made",
    "time_aware",
    "tools_aware",
    "material_aware",
    "requirement_aware",
    "rubric_aware",
)

STATIC_CONDITIONS = ("strategy_knowledge", "prior_knowledge")

# Single-action condition capture: one detection action flips one flag.
ACTION_TO_FLAG = {
    "SAVE_PLANNER": "plan_made",
    "TIMER": "time_aware",
    "TRY_OUT_TOOLS": "tools_aware",
    "PAGE_NAVIGATION": "material_aware",
    "TASK_REQUIREMENT": "requirement_aware",
    "RUBRIC": "rubric_aware",
}

DEFAULT_INTERVAL_MS = 420000  # seven minutes
DEFAULT_IDLE_CAP_MS = 60000
DEFAULT_WINDOW_MS = 120000
DEFAULT_WINDOW_EVENTS = 20
DEFAULT_PATTERN_REPEAT = 3
DEFAULT_KNOWLEDGE_THRESHOLD = 0.6


class TaxonomyUnknown(KeyError):
    pass


class SessionMismatch(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class IntervalNotElapsed(RuntimeError):
    pass


class NoEvents(RuntimeError):
    pass


class RuleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SrlLabel:
    session_id: str
    level: str
    process: str
    evidence: tuple[int, ...]
    window: tuple[int, int]
    rule_id: str

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "level": self.level,
            "process": self.process,
            "evidence": list(self.evidence),
            "window": list(self.window),
            "rule_id": self.rule_id,
        }

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_doc())


@dataclass(frozen=True)
class LabelRule:
    """One total pattern over event windows. Missing predicates always match."""

    rule_id: str
    level: str
    emit: str
    priority: int = 0
    actions: tuple[str, ...] = ()
    target: str | None = None
    phase: str | None = None
    after_ms: int | None = None  # task clock >= after_ms
    before_ms: int | None = None  # task clock < before_ms
    window_contains: tuple[str, ...] = ()
    window_lacks: tuple[str, ...] = ()
    first_target_visit: bool | None = None
    sequence: tuple[tuple[str, ...], ...] = ()  # patterned only
    repeat: int = DEFAULT_PATTERN_REPEAT

    def sort_key(self) -> tuple[int, str]:
        return (-self.priority, self.rule_id)


@dataclass(frozen=True)
class ConditionSnapshot:
    """Current learning conditions of a session plus their rendered statements.

    Dynamic flags are monotone: once true they never revert. Statements hold
    exactly one verbatim string per condition (6 dynamic + 2 static).
    """

    session_id: str
    dynamic: Mapping[str, bool]
    strategy_knowledge_score: float | None = None
    prior_knowledge_score: float | None = None
    statements: tuple[str, ...] = ()

    def flag(self, name: str) -> bool:
        return bool(self.dynamic.get(name, False))

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "dynamic": {k: bool(self.dynamic.get(k, False)) for k in DYNAMIC_FLAGS},
            "static": {
                "strategy_knowledge_score": self.strategy_knowledge_score,
                "prior_knowledge_score": self.prior_knowledge_score,
            },
            "statements": list(self.statements),
        }


@dataclass(frozen=True)
class IntervalAggregate:
    session_id: str
    interval_index: int
    interval_length_ms: int
    process_counts: Mapping[str, int]
    action_time_proportions: Mapping[str, float]

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "interval_index": self.interval_index,
            "interval_length_ms": self.interval_length_ms,
            "process_counts": dict(self.process_counts),
            "action_time_proportions": dict(self.action_time_proportions),
        }


@dataclass(frozen=True)
class AnalyzerConfig:
    interval_ms: int = DEFAULT_INTERVAL_MS
    idle_cap_ms: int = DEFAULT_IDLE_CAP_MS
    window_ms: int = DEFAULT_WINDOW_MS
    window_events: int = DEFAULT_WINDOW_EVENTS
    pattern_repeat: int = DEFAULT_PATTERN_REPEAT
    knowledge_threshold: float = DEFAULT_KNOWLEDGE_THRESHOLD


class StatementTable:
    """Fixed condition -> polarity -> statement mapping, loaded from JSON."""

    def __init__(self, doc: Mapping):
        dynamic = doc.get("dynamic", {})
        static = doc.get("static", {})
        missing = [f for f in DYNAMIC_FLAGS if f not in dynamic]
        missing += [c for c in STATIC_CONDITIONS if c not in static]
        if missing:
            raise RuleConfigError(f"statement table missing conditions: {missing}")
        self.dynamic: dict[str, dict[str, str]] = {}
        for flag in DYNAMIC_FLAGS:
            entry = dynamic[flag]
            if "true" not in entry or "false" not in entry:
                raise RuleConfigError(f"statement table needs both polarities for {flag}")
            self.dynamic[flag] = {"true": str(entry["true"]), "false": str(entry["false"])}
        self.static: dict[str, dict[str, str]] = {}
        for cond in STATIC_CONDITIONS:
            entry = static[cond]
            if "high" not in entry or "low" not in entry:
                raise RuleConfigError(f"statement table needs both polarities for {cond}")
            self.static[cond] = {"high": str(entry["high"]), "low": str(entry["low"])}

    @classmethod
    def from_file(cls, path: str | Path) -> "StatementTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def dynamic_statement(self, flag: str, value: bool) -> str:
        return self.dynamic[flag]["true" if value else "false"]

    def static_statement(self, condition: str, high: bool) -> str:
        return self.static[condition]["high" if high else "low"]


def render_statements(
    table: StatementTable,
    dynamic: Mapping[str, bool],
    strategy_score: float | None,
    prior_score: float | None,
    threshold: float,
) -> tuple[str, ...]:
    """Exactly 6 dynamic + 2 static statements, in fixed condition order."""
    out = [table.dynamic_statement(flag, bool(dynamic.get(flag, False))) for flag in DYNAMIC_FLAGS]
    out.append(table.static_statement("strategy_knowledge", strategy_score is not None and strategy_score >= threshold))
    out.append(table.static_statement("prior_knowledge", prior_score is not None and prior_score >= threshold))
    return tuple(out)


def new_snapshot(session_id: str, table: StatementTable, threshold: float = DEFAULT_KNOWLEDGE_THRESHOLD) -> ConditionSnapshot:
    dynamic = {flag: False for flag in DYNAMIC_FLAGS}
    return ConditionSnapshot(
        session_id=session_id,
        dynamic=dynamic,
        statements=render_statements(table, dynamic, None, None, threshold),
    )


def update_conditions(
    snapshot: ConditionSnapshot,
    event: TraceEvent,
    table: StatementTable,
    threshold: float = DEFAULT_KNOWLEDGE_THRESHOLD,
) -> ConditionSnapshot:
    """New snapshot with the event's condition flag set; monotone and idempotent."""
    if event.session_id != snapshot.session_id:
        raise SessionMismatch(f"event session {event.session_id!r} != snapshot session {snapshot.session_id!r}")
    flag = ACTION_TO_FLAG.get(event.action)
    if flag is None or snapshot.dynamic.get(flag, False):
        return snapshot
    dynamic = dict(snapshot.dynamic)
    dynamic[flag] = True
    return replace(
        snapshot,
        dynamic=dynamic,
        statements=render_statements(
            table, dynamic, snapshot.strategy_knowledge_score, snapshot.prior_knowledge_score, threshold
        ),
    )


def score_instrument(responses: Sequence[int | None], key: Sequence[int]) -> float:
    """Fraction of exact matches; None / -1 responses count as unanswered."""
    if len(responses) != len(key):
        raise LengthMismatch(f"{len(responses)} responses vs {len(key)} key items")
    if not key:
        return 0.0
    correct = 0
    for given, expected in zip(responses, key):
        if given is None or given == -1:
            continue
        if given == expected:
            correct += 1
    return correct / len(key)


# ---------------------------------------------------------------------------
# Rule loading


def _as_action_tuple(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,)
    return tuple(str(v) for v in value)


def parse_rule(doc: Mapping) -> LabelRule:
    level = doc.get("level")
    if level not in LEVELS:
        raise RuleConfigError(f"rule {doc.get('rule_id')!r}: bad level {level!r}")
    match = doc.get("match", {}) or {}
    sequence = tuple(
        tuple(_as_action_tuple(step)) for step in doc.get("sequence", [])
    )
    if level == "patterned" and not sequence:
        raise RuleConfigError(f"rule {doc.get('rule_id')!r}: patterned rule needs a sequence")
    return LabelRule(
        rule_id=str(doc["rule_id"]),
        level=level,
        emit=str(doc["emit"]),
        priority=int(doc.get("priority", 0)),
        actions=_as_action_tuple(match.get("action")),
        target=match.get("target"),
        phase=match.get("phase"),
        after_ms=match.get("after_ms"),
        before_ms=match.get("before_ms"),
        window_contains=_as_action_tuple(match.get("window_contains")),
        window_lacks=_as_action_tuple(match.get("window_lacks")),
        first_target_visit=match.get("first_target_visit"),
        sequence=sequence,
        repeat=int(doc.get("repeat", DEFAULT_PATTERN_REPEAT)),
    )


@dataclass(frozen=True)
class RuleSet:
    occurrence: tuple[LabelRule, ...]
    contingency: tuple[LabelRule, ...]
    patterned: tuple[LabelRule, ...]

    @classmethod
    def from_rules(cls, rules: Iterable[LabelRule], taxonomy: SrlProcessTaxonomy) -> "RuleSet":
        occ, ctg, pat = [], [], []
        for rule in rules:
            if rule.emit not in taxonomy:
                raise RuleConfigError(f"rule {rule.rule_id!r} emits {rule.emit!r}, not in taxonomy")
            {"occurrence": occ, "contingency": ctg, "patterned": pat}[rule.level].append(rule)
        key = LabelRule.sort_key
        return cls(tuple(sorted(occ, key=key)), tuple(sorted(ctg, key=key)), tuple(sorted(pat, key=key)))

    @classmethod
    def from_file(cls, path: str | Path, taxonomy: SrlProcessTaxonomy) -> "RuleSet":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_rules([parse_rule(r) for r in doc["rules"]], taxonomy)


def load_taxonomy(path: str | Path, profile: str = "CUSTOM") -> SrlProcessTaxonomy:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    profiles = doc.get("profiles", {})
    if profile != "CUSTOM" and profile not in profiles:
        raise TaxonomyUnknown(profile)
    return SrlProcessTaxonomy(
        taxonomy_id=str(doc["taxonomy_id"]),
        processes=tuple(doc["processes"]),
        model_profile=profile,
        profile_map=dict(profiles.get(profile, {})),
    )


# ---------------------------------------------------------------------------
# Per-session labeling engine


class _PatternState:
    __slots__ = ("index", "completions", "matched")

    def __init__(self):
        self.index = 0
        self.completions = 0
        self.matched: list[int] = []


class LabelEngine:
    """Labels one session's ordered event stream; deterministic by construction."""

    def __init__(
        self,
        session_id: str,
        ruleset: RuleSet,
        taxonomy: SrlProcessTaxonomy,
        statements: StatementTable,
        config: AnalyzerConfig = AnalyzerConfig(),
        sink: Callable[[SrlLabel], None] | None = None,
        watched_processes: Iterable[str] = (),
    ):
        if UNCLASSIFIED not in taxonomy:
            raise RuleConfigError("taxonomy must include the reserved Unclassified process")
        self.session_id = session_id
        self.ruleset = ruleset
        self.taxonomy = taxonomy
        self.statements_table = statements
        self.config = config
        self.sink = sink
        self.phase = "pre_task"
        self._window: deque[tuple[int, int, str, str]] = deque()  # (seq, ms, action, target)
        self._seen_targets: set[tuple[str, str]] = set()
        self._patterns: dict[str, _PatternState] = {r.rule_id: _PatternState() for r in ruleset.patterned}
        self.conditions = new_snapshot(session_id, statements, config.knowledge_threshold)
        self._times: list[int] = []  # server_ms by seq
        self._actions: list[str] = []
        self._earliest_ms: dict[str, int] = {}
        self._watched: dict[str, list[int]] = {p: [] for p in watched_processes}
        self._interval_counts: dict[int, Counter] = {}
        self._occ_by_action: dict[str, list[LabelRule]] = {}
        for rule in ruleset.occurrence:
            if rule.actions:
                for action in rule.actions:
                    self._occ_by_action.setdefault(action, []).append(rule)
            else:
                self._occ_by_action.setdefault("*", []).append(rule)

    # -- matching ----------------------------------------------------------

    def _match(self, rule: LabelRule, seq: int, ms: int, action: str, target: str) -> list[int] | None:
        """Window evidence seqs on match, None otherwise. Total: never raises."""
        if rule.actions and action not in rule.actions:
            return None
        if rule.target is not None and target != rule.target:
            return None
        if rule.phase is not None and self.phase != rule.phase:
            return None
        if rule.after_ms is not None and (ms < 0 or ms < rule.after_ms):
            return None
        if rule.before_ms is not None and (ms < 0 or ms >= rule.before_ms):
            return None
        if rule.first_target_visit is not None:
            first = (action, target) not in self._seen_targets
            if first != rule.first_target_visit:
                return None
        evidence: list[int] = []
        if rule.window_contains:
            needed = set(rule.window_contains)
            for wseq, _, waction, _ in self._window:
                if waction in needed:
                    evidence.append(wseq)
                    needed.discard(waction)
            if needed:
                return None
        if rule.window_lacks:
            lacking = set(rule.window_lacks)
            for _, _, waction, _ in self._window:
                if waction in lacking:
                    return None
        return evidence

    def _emit(self, out: list[SrlLabel], label: SrlLabel) -> None:
        out.append(label)
        start_seq = label.window[0]
        start_ms = self._times[start_seq] if start_seq < len(self._times) else None
        if start_ms is None:
            return
        prior = self._earliest_ms.get(label.process)
        if prior is None or start_ms < prior:
            self._earliest_ms[label.process] = start_ms
        watch = self._watched.get(label.process)
        if watch is not None:
            bisect.insort(watch, start_ms)
        if start_ms >= 0:
            k = start_ms // self.config.interval_ms
            self._interval_counts.setdefault(k, Counter())[label.process] += 1

    def on_event(self, event: TraceEvent) -> list[SrlLabel]:
        if event.session_id != self.session_id:
            raise SessionMismatch(f"event for {event.session_id!r} fed to engine for {self.session_id!r}")
        seq = event.server_seq if event.server_seq is not None else len(self._times)
        ms = event.server_ms if event.server_ms is not None else -1
        action, target = event.action, event.target

        if action == "SESSION_PHASE" and target:
            self.phase = target

        while len(self._times) <= seq:
            self._times.append(ms)
            self._actions.append(action)
        self._times[seq] = ms
        self._actions[seq] = action

        out: list[SrlLabel] = []

        # occurrence: first matching rule after (priority desc, rule_id asc)
        candidates = self._occ_by_action.get(action, [])
        wild = self._occ_by_action.get("*", [])
        if wild:
            candidates = sorted(candidates + wild, key=LabelRule.sort_key)
        occurrence = None
        for rule in candidates:
            if self._match(rule, seq, ms, action, target) is not None:
                occurrence = SrlLabel(self.session_id, "occurrence", rule.emit, (seq,), (seq, seq), rule.rule_id)
                break
        if occurrence is None:
            occurrence = SrlLabel(self.session_id, "occurrence", UNCLASSIFIED, (seq,), (seq, seq), "")
        self._emit(out, occurrence)

        # contingency: every completed window pattern
        for rule in self.ruleset.contingency:
            evidence = self._match(rule, seq, ms, action, target)
            if evidence is None:
                continue
            all_evidence = tuple(sorted(set(evidence) | {seq}))
            self._emit(
                out,
                SrlLabel(
                    self.session_id,
                    "contingency",
                    rule.emit,
                    all_evidence,
                    (all_evidence[0], all_evidence[-1]),
                    rule.rule_id,
                ),
            )

        # patterned: advance sequence recognizers; emit at the configured count
        for rule in self.ruleset.patterned:
            state = self._patterns[rule.rule_id]
            step = rule.sequence[state.index]
            if action in step:
                state.matched.append(seq)
                state.index += 1
                if state.index == len(rule.sequence):
                    state.index = 0
                    state.completions += 1
                    if state.completions >= rule.repeat:
                        evidence = tuple(state.matched)
                        self._emit(
                            out,
                            SrlLabel(
                                self.session_id,
                                "patterned",
                                rule.emit,
                                evidence,
                                (evidence[0], evidence[-1]),
                                rule.rule_id,
                            ),
                        )
                        state.completions = 0
                        state.matched = []

        self.conditions = update_conditions(self.conditions, event, self.statements_table, self.config.knowledge_threshold)

        self._seen_targets.add((action, target))
        self._window.append((seq, ms, action, target))
        self._trim_window(ms)

        if self.sink is not None:
            for label in out:
                self.sink(label)
        return out

    def _trim_window(self, now_ms: int) -> None:
        window = self._window
        while len(window) > self.config.window_events:
            window.popleft()
        if now_ms >= 0:
            horizon = now_ms - self.config.window_ms
            while window and 0 <= window[0][1] < horizon:
                window.popleft()

    # -- condition + static score management --------------------------------

    def set_static_scores(self, strategy: float | None = None, prior: float | None = None) -> ConditionSnapshot:
        snap = self.conditions
        strategy_score = strategy if strategy is not None else snap.strategy_knowledge_score
        prior_score = prior if prior is not None else snap.prior_knowledge_score
        self.conditions = replace(
            snap,
            strategy_knowledge_score=strategy_score,
            prior_knowledge_score=prior_score,
            statements=render_statements(
                self.statements_table, snap.dynamic, strategy_score, prior_score, self.config.knowledge_threshold
            ),
        )
        return self.conditions

    # -- trigger support -----------------------------------------------------

    def earliest_process_ms(self, process: str) -> int | None:
        return self._earliest_ms.get(process)

    def process_in_range(self, process: str, start_ms: int, end_ms: int) -> bool:
        starts = self._watched.get(process)
        if starts is None:
            earliest = self._earliest_ms.get(process)
            return earliest is not None and start_ms <= earliest < end_ms
        i = bisect.bisect_left(starts, start_ms)
        return i < len(starts) and starts[i] < end_ms

    # -- aggregates ----------------------------------------------------------

    def _attributed_ms(self, k: int) -> Counter:
        """Per-action milliseconds attributed inside interval k.

        Each event owns the gap to the next event, capped at the idle cap and
        clipped at the interval end, so the per-interval sum never exceeds the
        interval length. An event with no successor owns min(cap, interval end
        - t): an action observed once still accounts for time.
        """
        cfg = self.config
        length = cfg.interval_ms
        lo, hi = k * length, (k + 1) * length
        times = self._times
        # server_ms of pre-task events is -1; they sit before index bisect finds.
        i = bisect.bisect_left(times, max(lo, 0))
        attributed: Counter = Counter()
        n = len(times)
        while i < n and times[i] < hi:
            t = times[i]
            gap = times[i + 1] - t if i + 1 < n else None
            span = min(cfg.idle_cap_ms, hi - t) if gap is None else min(gap, cfg.idle_cap_ms, hi - t)
            attributed[self._actions[i]] += span
            i += 1
        return attributed

    def aggregate_interval(self, k: int) -> IntervalAggregate:
        """Aggregate for interval [k*L, (k+1)*L); caller checks elapsed-ness."""
        length = self.config.interval_ms
        attributed = self._attributed_ms(k)
        proportions = {action: ms / length for action, ms in sorted(attributed.items())}
        counts = self._interval_counts.get(k, Counter())
        return IntervalAggregate(
            session_id=self.session_id,
            interval_index=k,
            interval_length_ms=length,
            process_counts=dict(sorted(counts.items())),
            action_time_proportions=proportions,
        )

    def accounted_action_ms(self) -> dict[str, int]:
        """Capped, interval-clipped action time over the whole session."""
        totals: Counter = Counter()
        if not self._times:
            return {}
        last_t = self._times[-1]
        if last_t < 0:
            return {}
        max_k = last_t // self.config.interval_ms
        for k in range(0, max_k + 1):
            totals.update(self._attributed_ms(k))
        return dict(totals)

    def interval_count(self) -> int:
        if not self._times or self._times[-1] < 0:
            return 0
        return self._times[-1] // self.config.interval_ms + 1


class Analyzer:
    """Engine-wide analyzer: one LabelEngine per session, fed in commit order."""

    def __init__(
        self,
        ruleset: RuleSet,
        taxonomy: SrlProcessTaxonomy,
        statements: StatementTable,
        config: AnalyzerConfig = AnalyzerConfig(),
        sink_factory: Callable[[str], Callable[[SrlLabel], None] | None] | None = None,
    ):
        self.ruleset = ruleset
        self.taxonomy = taxonomy
        self.statements = statements
        self.config = config
        self._sink_factory = sink_factory
        self._engines: dict[str, LabelEngine] = {}
        self._lock = threading.Lock()
        self._watched_processes: set[str] = set()

    def watch_processes(self, processes: Iterable[str]) -> None:
        self._watched_processes.update(processes)

    def engine_for(self, session_id: str) -> LabelEngine:
        engine = self._engines.get(session_id)
        if engine is not None:
            return engine
        with self._lock:
            engine = self._engines.get(session_id)
            if engine is None:
                sink = self._sink_factory(session_id) if self._sink_factory else None
                engine = LabelEngine(
                    session_id,
                    self.ruleset,
                    self.taxonomy,
                    self.statements,
                    self.config,
                    sink=sink,
                    watched_processes=self._watched_processes,
                )
                self._engines[session_id] = engine
            return engine

    def on_event(self, event: TraceEvent) -> list[SrlLabel]:
        return self.engine_for(event.session_id).on_event(event)

    def has_session(self, session_id: str) -> bool:
        return session_id in self._engines

    def conditions(self, session_id: str) -> ConditionSnapshot:
        return self.engine_for(session_id).conditions

    def set_static_scores(self, session_id: str, strategy: float | None = None, prior: float | None = None) -> ConditionSnapshot:
        return self.engine_for(session_id).set_static_scores(strategy, prior)

    def aggregate_interval(self, session_id: str, k: int, now_task_ms: int | None = None) -> IntervalAggregate:
        engine = self.engine_for(session_id)
        if now_task_ms is not None and now_task_ms < (k + 1) * self.config.interval_ms:
            raise IntervalNotElapsed(f"interval {k} has not fully elapsed")
        return engine.aggregate_interval(k)

    def label_stream(self, session_id: str, events: Iterable[TraceEvent]) -> list[SrlLabel]:
        """Pure replay: label an ordered stream with a fresh engine."""
        engine = LabelEngine(
            session_id,
            self.ruleset,
            self.taxonomy,
            self.statements,
            self.config,
            watched_processes=self._watched_processes,
        )
        out: list[SrlLabel] = []
        for event in events:
            out.extend(engine.on_event(event))
        return out


def action_time_proportions(engine: LabelEngine) -> dict[str, float]:
    """Session-level time proportions renormalized over accounted time."""
    totals = engine.accounted_action_ms()
    if not totals:
        raise NoEvents(engine.session_id)
    accounted = sum(totals.values())
    if accounted <= 0:
        raise NoEvents(engine.session_id)
    return {action: ms / accounted for action, ms in sorted(totals.items())}
