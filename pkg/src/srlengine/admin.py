"""Experiment and session management, dataset statistics, fuzzy search, plans.

Experiments configure per-group toolsets that gate every tool-serving
endpoint; sessions carry the experimental arm and the task clock origin.
Small registries persist as JSON files next to the event logs.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .model import PHASES, SESSION_STATUSES, SessionState

REGISTERED_TOOLS = frozenset(
    {"chat", "planner", "writing_analytics", "collab_doc", "timer", "instruction_panel"}
)

MAIN_STRATEGIES = (
    "Read first, then write",
    "Read and write simultaneously",
    "Write intensively while reading selectively",
)


class ExperimentUnknown(KeyError):
    pass


class SessionUnknown(KeyError):
    pass


class SessionClosed(RuntimeError):
    pass


class ExperimentStarted(RuntimeError):
    pass


class UnknownTool(ValueError):
    pass


class InvalidStrategy(ValueError):
    pass


class ToolDisabled(PermissionError):
    def __init__(self, tool: str, session_id: str):
        super().__init__(f"tool {tool!r} is disabled for session {session_id}")
        self.tool = tool


@dataclass(frozen=True)
class TaskSpec:
    duration_ms: int
    instruction_doc: str = ""
    rubric_id: str = ""
    source_set_id: str = ""

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise ValueError("task duration_ms must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    name: str
    groups: tuple[str, ...]
    toolsets: Mapping[str, frozenset[str]]  # group -> enabled tools
    task: TaskSpec
    scaffold_rule_file: str = ""
    chat_config: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.groups:
            raise ValueError("experiment needs at least one group")
        for group, tools in self.toolsets.items():
            unknown = set(tools) - REGISTERED_TOOLS
            if unknown:
                raise UnknownTool(f"group {group!r} enables unregistered tools: {sorted(unknown)}")

    @classmethod
    def from_doc(cls, doc: Mapping) -> "ExperimentConfig":
        task = doc.get("task", {})
        return cls(
            experiment_id=str(doc["experiment_id"]),
            name=str(doc["name"]),
            groups=tuple(doc["groups"]),
            toolsets={g: frozenset(tools) for g, tools in doc.get("toolsets", {}).items()},
            task=TaskSpec(
                duration_ms=int(task.get("duration_ms", 7200000)),
                instruction_doc=str(task.get("instruction_doc", "")),
                rubric_id=str(task.get("rubric_id", "")),
                source_set_id=str(task.get("source_set_id", "")),
            ),
            scaffold_rule_file=str(doc.get("scaffold_rule_file", "")),
            chat_config=dict(doc.get("chat_config", {})),
        )

    def to_doc(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "name": self.name,
            "groups": list(self.groups),
            "toolsets": {g: sorted(t) for g, t in self.toolsets.items()},
            "task": {
                "duration_ms": self.task.duration_ms,
                "instruction_doc": self.task.instruction_doc,
                "rubric_id": self.task.rubric_id,
                "source_set_id": self.task.source_set_id,
            },
            "scaffold_rule_file": self.scaffold_rule_file,
            "chat_config": dict(self.chat_config),
        }


@dataclass(frozen=True)
class Plan:
    session_id: str
    main_strategy: str
    allocations: tuple[tuple[str, int], ...] = ()
    reading_strategy: str = ""
    writing_strategy: str = ""

    def __post_init__(self):
        if self.main_strategy not in MAIN_STRATEGIES:
            raise InvalidStrategy(f"unsupported main strategy {self.main_strategy!r}")
        for task_name, minutes in self.allocations:
            if minutes < 0:
                raise ValueError(f"allocation for {task_name!r} must be >= 0 minutes")

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Plan":
        return cls(
            session_id=str(doc["session_id"]),
            main_strategy=str(doc["main_strategy"]),
            allocations=tuple((str(a["task_name"]), int(a["minutes"])) for a in doc.get("allocations", [])),
            reading_strategy=str(doc.get("reading_strategy", "")),
            writing_strategy=str(doc.get("writing_strategy", "")),
        )

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "main_strategy": self.main_strategy,
            "allocations": [{"task_name": n, "minutes": m} for n, m in self.allocations],
            "reading_strategy": self.reading_strategy,
            "writing_strategy": self.writing_strategy,
        }


@dataclass(frozen=True)
class ExperimentStats:
    experiment_id: str
    participant_count: int
    avg_events_per_participant: float
    events_per_tool: Mapping[str, int]

    def to_doc(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "participant_count": self.participant_count,
            "avg_events_per_participant": self.avg_events_per_participant,
            "events_per_tool": dict(self.events_per_tool),
        }


def damerau_levenshtein(a: str, b: str, cap: int | None = None) -> int:
    """Edit distance with adjacent transpositions (optimal string alignment)."""
    n, m = len(a), len(b)
    if cap is not None and abs(n - m) > cap:
        return cap + 1
    prev2: list[int] = []
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                cur[j] = min(cur[j], prev2[j - 2] + 1)
        prev2, prev = prev, cur
    return prev[m]


class AdminRegistry:
    def __init__(self, data_dir: str | os.PathLike | None = None):
        self.data_dir = Path(data_dir) if data_dir else None
        self._experiments: dict[str, ExperimentConfig] = {}
        self._sessions: dict[str, SessionState] = {}
        self._plans: dict[str, Plan] = {}
        self._lock = threading.Lock()
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence ---------------------------------------------------------

    def _load(self) -> None:
        exp_path = self.data_dir / "experiments.json"
        if exp_path.exists():
            with open(exp_path, "r", encoding="utf-8") as fh:
                for doc in json.load(fh):
                    config = ExperimentConfig.from_doc(doc)
                    self._experiments[config.experiment_id] = config
        sess_path = self.data_dir / "sessions.json"
        if sess_path.exists():
            with open(sess_path, "r", encoding="utf-8") as fh:
                for doc in json.load(fh):
                    self._sessions[doc["session_id"]] = SessionState(**doc)
        plan_path = self.data_dir / "plans.json"
        if plan_path.exists():
            with open(plan_path, "r", encoding="utf-8") as fh:
                for doc in json.load(fh):
                    self._plans[doc["session_id"]] = Plan.from_doc(doc)

    def _save(self) -> None:
        if not self.data_dir:
            return
        _atomic_write(
            self.data_dir / "experiments.json",
            json.dumps([e.to_doc() for e in self._experiments.values()], indent=1),
        )
        _atomic_write(
            self.data_dir / "sessions.json",
            json.dumps([s.__dict__ for s in self._sessions.values()], indent=1),
        )
        _atomic_write(
            self.data_dir / "plans.json",
            json.dumps([p.to_doc() for p in self._plans.values()], indent=1),
        )

    # -- experiments ---------------------------------------------------------

    def configure_experiment(self, config: ExperimentConfig) -> None:
        with self._lock:
            started = any(s.experiment_id == config.experiment_id for s in self._sessions.values())
            if started:
                raise ExperimentStarted(f"experiment {config.experiment_id} already has sessions")
            self._experiments[config.experiment_id] = config
            self._save()

    def experiment(self, experiment_id: str) -> ExperimentConfig:
        config = self._experiments.get(experiment_id)
        if config is None:
            raise ExperimentUnknown(experiment_id)
        return config

    def experiments(self) -> list[ExperimentConfig]:
        return sorted(self._experiments.values(), key=lambda e: e.name)

    def search_experiments(self, query: str) -> list[ExperimentConfig]:
        """Exact name first, then substring, then edit distance <= 2."""
        q = query.strip().casefold()
        ranked = []
        for config in self._experiments.values():
            name = config.name.casefold()
            if not q or q == name or q == config.experiment_id.casefold():
                score = 3 if q else 2
            elif q in name or q in config.experiment_id.casefold():
                score = 2
            elif damerau_levenshtein(q, name, cap=2) <= 2:
                score = 1
            else:
                continue
            ranked.append((score, config))
        ranked.sort(key=lambda pair: (-pair[0], pair[1].name, pair[1].experiment_id))
        return [config for _, config in ranked]

    # -- sessions --------------------------------------------------------------

    def create_session(self, session_id: str, learner_id: str, experiment_id: str, group: str) -> SessionState:
        experiment = self.experiment(experiment_id)
        if group not in experiment.groups:
            raise ValueError(f"group {group!r} not configured for experiment {experiment_id}")
        with self._lock:
            if session_id in self._sessions:
                raise ValueError(f"session {session_id} already exists")
            session = SessionState(session_id, learner_id, experiment_id, group)
            self._sessions[session_id] = session
            self._save()
            return session

    def session(self, session_id: str) -> SessionState:
        session = self._sessions.get(session_id)
        if session is None:
            raise SessionUnknown(session_id)
        return session

    def require_active(self, session_id: str) -> SessionState:
        session = self.session(session_id)
        if session.status != "active":
            raise SessionClosed(f"session {session_id} is {session.status}")
        return session

    def sessions_for(self, experiment_id: str) -> list[SessionState]:
        return sorted(
            (s for s in self._sessions.values() if s.experiment_id == experiment_id),
            key=lambda s: s.session_id,
        )

    def set_phase(self, session_id: str, phase: str, now_ms: int) -> SessionState:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        with self._lock:
            session = self.session(session_id)
            updates: dict = {"phase": phase}
            if phase == "main_task" and session.task_started_at_ms is None:
                updates["task_started_at_ms"] = now_ms  # set exactly once
            session = replace(session, **updates)
            self._sessions[session_id] = session
            self._save()
            return session

    def set_status(self, session_id: str, status: str) -> SessionState:
        if status not in SESSION_STATUSES:
            raise ValueError(f"unknown status {status!r}")
        with self._lock:
            session = replace(self.session(session_id), status=status)
            self._sessions[session_id] = session
            self._save()
            return session

    def task_ms(self, session_id: str, now_ms: int) -> int:
        """Task clock for a session; -1 before the main task starts."""
        session = self.session(session_id)
        if session.task_started_at_ms is None:
            return -1
        return now_ms - session.task_started_at_ms

    # -- tool gating -----------------------------------------------------------

    def tool_enabled(self, session_id: str, tool: str) -> bool:
        if tool not in REGISTERED_TOOLS:
            raise UnknownTool(tool)
        session = self.session(session_id)
        experiment = self.experiment(session.experiment_id)
        toolset = experiment.toolsets.get(session.group, frozenset())
        return tool in toolset

    def require_tool(self, session_id: str, tool: str) -> None:
        if not self.tool_enabled(session_id, tool):
            raise ToolDisabled(tool, session_id)

    # -- plans -------------------------------------------------------------------

    def save_plan(self, plan: Plan) -> None:
        self.require_active(plan.session_id)
        with self._lock:
            self._plans[plan.session_id] = plan  # last write wins; history is in the trace
            self._save()

    def plan(self, session_id: str) -> Plan | None:
        return self._plans.get(session_id)

    # -- stats ---------------------------------------------------------------------

    def compute_stats(self, experiment_id: str, store) -> ExperimentStats:
        self.experiment(experiment_id)
        learners = store.experiment_learner_counts(experiment_id)
        actions = store.experiment_action_counts(experiment_id)
        participants = len(learners)
        total = sum(learners.values())
        return ExperimentStats(
            experiment_id=experiment_id,
            participant_count=participants,
            avg_events_per_participant=(total / participants) if participants else 0.0,
            events_per_tool=dict(sorted(actions.items())),
        )


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
