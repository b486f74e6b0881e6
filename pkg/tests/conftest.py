from __future__ import annotations

import pytest

from srlengine.admin import ExperimentConfig, TaskSpec
from srlengine.clock import ManualClock
from srlengine.config import EngineConfig
from srlengine.engine import Engine

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{verdict}  {name}")

ALL_TOOLS = frozenset({"chat", "planner", "writing_analytics", "collab_doc", "timer", "instruction_panel"})


def make_engine(tmp_path, **config_kwargs) -> tuple[Engine, ManualClock]:
    clock = ManualClock()
    engine = Engine(EngineConfig(data_dir=str(tmp_path / "data"), **config_kwargs), clock=clock)
    return engine, clock


def standard_experiment(engine: Engine, experiment_id: str = "x1", name: str = "pilot study") -> ExperimentConfig:
    config = ExperimentConfig(
        experiment_id=experiment_id,
        name=name,
        groups=("CN", "Po", "PwC"),
        toolsets={
            "CN": frozenset({"timer"}),
            "Po": ALL_TOOLS,
            "PwC": ALL_TOOLS,
        },
        task=TaskSpec(duration_ms=7200000, instruction_doc="Write a 300-word essay on AI in medicine."),
    )
    engine.admin.configure_experiment(config)
    return config


def start_session(engine: Engine, session_id="s1", learner_id="l1", experiment_id="x1", group="PwC"):
    session = engine.admin.create_session(session_id, learner_id, experiment_id, group)
    engine.set_phase(session_id, "main_task")
    return session


def event_doc(i: int, session_id="s1", learner_id="l1", experiment_id="x1", action="TIMER", target="", payload=None):
    return {
        "event_id": f"e{i}",
        "session_id": session_id,
        "learner_id": learner_id,
        "experiment_id": experiment_id,
        "client_timestamp_ms": i,
        "action": action,
        "target": target,
        "payload": payload or {},
    }


@pytest.fixture
def engine_env(tmp_path):
    engine, clock = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine)
    yield engine, clock
    engine.close()
