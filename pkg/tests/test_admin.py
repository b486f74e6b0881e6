from __future__ import annotations

import pytest

from srlengine.admin import (
    ExperimentConfig,
    ExperimentStarted,
    InvalidStrategy,
    Plan,
    TaskSpec,
    ToolDisabled,
    UnknownTool,
    damerau_levenshtein,
)

from conftest import event_doc, make_engine, standard_experiment, start_session


def reference_dl(a: str, b: str) -> int:
    """Independent optimal-string-alignment distance, full-matrix version."""
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                d[i][j] = min(d[i][j], d[i - 2][j - 2] + 1)
    return d[n][m]


# -- search ---------------------------------------------------------------------


def experiments_engine(tmp_path, names):
    engine, clock = make_engine(tmp_path)
    for i, name in enumerate(names):
        engine.admin.configure_experiment(
            ExperimentConfig(
                experiment_id=f"x{i}",
                name=name,
                groups=("G",),
                toolsets={"G": frozenset()},
                task=TaskSpec(duration_ms=1000),
            )
        )
    return engine, clock


def test_empty_query_returns_all_sorted_by_name(tmp_path):
    engine, _ = experiments_engine(tmp_path, ["zeta", "alpha", "mid"])
    results = engine.admin.search_experiments("")
    assert [e.name for e in results] == ["alpha", "mid", "zeta"]
    engine.close()


def test_full_name_ranks_first(tmp_path):
    engine, _ = experiments_engine(tmp_path, ["experiment-7-extended", "experiment-7", "unrelated"])
    results = engine.admin.search_experiments("experiment-7")
    assert results[0].name == "experiment-7"
    assert results[1].name == "experiment-7-extended"
    engine.close()


def test_typo_matches_within_distance_two(tmp_path):
    assert reference_dl("expirment-7", "experiment-7") <= 2
    assert damerau_levenshtein("expirment-7", "experiment-7") == reference_dl("expirment-7", "experiment-7")
    engine, _ = experiments_engine(tmp_path, ["experiment-7", "unrelated-name"])
    results = engine.admin.search_experiments("expirment-7")
    assert [e.name for e in results] == ["experiment-7"]
    engine.close()


@pytest.mark.parametrize(
    "a,b",
    [("abc", "abc"), ("abc", "acb"), ("abc", ""), ("kitten", "sitting"), ("ca", "abc"), ("experiment", "expirment")],
)
def test_dl_distance_agrees_with_reference(a, b):
    assert damerau_levenshtein(a, b) == reference_dl(a, b)


def test_search_deterministic(tmp_path):
    engine, _ = experiments_engine(tmp_path, ["study-b", "study-a", "study-c"])
    first = [e.experiment_id for e in engine.admin.search_experiments("study")]
    second = [e.experiment_id for e in engine.admin.search_experiments("study")]
    assert first == second == ["x1", "x0", "x2"]  # name ascending within tier
    engine.close()


# -- stats ---------------------------------------------------------------------------


def test_stats_empty_experiment(tmp_path):
    engine, _ = experiments_engine(tmp_path, ["empty"])
    stats = engine.admin.compute_stats("x0", engine.store)
    assert stats.participant_count == 0
    assert stats.avg_events_per_participant == 0.0
    assert stats.events_per_tool == {}
    engine.close()


def test_stats_average_and_partition(tmp_path):
    engine, clock = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine, session_id="sA", learner_id="lA")
    start_session(engine, session_id="sB", learner_id="lB")
    for i in range(10):
        engine.ingest_raw(event_doc(i, session_id="sA", learner_id="lA", action="TIMER"))
    for i in range(20):
        engine.ingest_raw(event_doc(100 + i, session_id="sB", learner_id="lB", action="ESSAY_EDIT"))
    stats = engine.admin.compute_stats("x1", engine.store)
    assert stats.participant_count == 2
    # arithmetic oracle over the fixture: (12 + 21) / 2 counting the two
    # SESSION_PHASE events emitted by start_session
    total = sum(stats.events_per_tool.values())
    assert total == 32
    assert stats.avg_events_per_participant == total / 2 == 16.0
    engine.close()


def test_stats_per_tool_counts_sum_to_total(tmp_path):
    engine, _ = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine)
    actions = ["TIMER", "RUBRIC", "ESSAY_EDIT", "TIMER", "CHAT_SEND"]
    for i, action in enumerate(actions):
        engine.ingest_raw(event_doc(i, action=action))
    stats = engine.admin.compute_stats("x1", engine.store)
    assert sum(stats.events_per_tool.values()) == len(actions) + 1  # + SESSION_PHASE
    assert stats.events_per_tool["TIMER"] == 2
    engine.close()


# -- proportions -------------------------------------------------------------------------


def test_single_action_session_full_proportion(tmp_path):
    engine, clock = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine)
    clock.advance(1000)
    engine.ingest_raw(event_doc(0, action="ESSAY_EDIT"))
    proportions = engine.proportions("s1")
    assert set(proportions) >= {"ESSAY_EDIT"}
    assert proportions["ESSAY_EDIT"] > 0.9  # SESSION_PHASE event owns a 1s sliver
    assert abs(sum(proportions.values()) - 1.0) <= 1e-9
    engine.close()


def test_two_actions_equal_capped_gaps_split_evenly(tmp_path):
    engine, clock = make_engine(tmp_path)
    standard_experiment(engine)
    session = engine.admin.create_session("s2", "l2", "x1", "Po")
    engine.admin.set_phase("s2", "main_task", clock.now_ms())  # no SESSION_PHASE event
    # two actions, each followed by a gap far beyond the 60 s idle cap
    engine.ingest_raw(event_doc(0, session_id="s2", learner_id="l2", action="TIMER"))
    clock.advance(300000)
    engine.ingest_raw(event_doc(1, session_id="s2", learner_id="l2", action="RUBRIC"))
    clock.advance(300000)
    proportions = engine.proportions("s2")
    assert proportions == {"TIMER": 0.5, "RUBRIC": 0.5}
    engine.close()


def test_proportions_sum_to_one(tmp_path):
    engine, clock = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine)
    for i, action in enumerate(["TIMER", "ESSAY_EDIT", "RUBRIC", "NOTE_EDIT", "CHAT_SEND"]):
        clock.advance(7919 * (i + 1))
        engine.ingest_raw(event_doc(i, action=action))
    proportions = engine.proportions("s1")
    assert abs(sum(proportions.values()) - 1.0) <= 1e-9
    engine.close()


# -- plans ----------------------------------------------------------------------------------


def test_save_plan_emits_event_and_flips_condition(tmp_path):
    engine, _ = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine)
    plan = Plan(session_id="s1", main_strategy="Read first, then write", allocations=(("reading", 30),))
    engine.save_plan(plan)
    export = engine.export("x1").decode()
    assert "SAVE_PLANNER" in export
    assert engine.analyzer.conditions("s1").flag("plan_made")
    assert engine.admin.plan("s1").main_strategy == "Read first, then write"
    engine.close()


def test_invalid_strategy_rejected():
    with pytest.raises(InvalidStrategy):
        Plan(session_id="s1", main_strategy="Skim everything")


def test_save_plan_twice_last_write_wins_full_trace(tmp_path):
    engine, _ = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine)
    engine.save_plan(Plan(session_id="s1", main_strategy="Read first, then write"))
    engine.save_plan(Plan(session_id="s1", main_strategy="Read and write simultaneously"))
    assert engine.admin.plan("s1").main_strategy == "Read and write simultaneously"
    events = [e for e in engine.store.read_events("s1") if e.action == "SAVE_PLANNER"]
    assert len(events) == 2
    engine.close()


# -- experiment configuration / gating ----------------------------------------------------------


def test_unknown_tool_rejected():
    with pytest.raises(UnknownTool):
        ExperimentConfig(
            experiment_id="x",
            name="n",
            groups=("G",),
            toolsets={"G": frozenset({"telepathy"})},
            task=TaskSpec(duration_ms=1000),
        )


def test_reconfigure_after_first_session_rejected(tmp_path):
    engine, _ = make_engine(tmp_path)
    config = standard_experiment(engine)
    start_session(engine)
    with pytest.raises(ExperimentStarted):
        engine.admin.configure_experiment(config)
    engine.close()


def test_cn_scaffold_stream_tool_disabled(tmp_path):
    engine, _ = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine, session_id="cn1", group="CN")
    with pytest.raises(ToolDisabled):
        engine.scaffold_stream("cn1")
    engine.close()


def test_tool_gating_matrix(tmp_path):
    engine, _ = make_engine(tmp_path)
    standard_experiment(engine)
    start_session(engine, session_id="cn1", group="CN")  # CN has only the timer
    session_checks = {
        "chat": lambda: engine.configure_chat("cn1", "shared", []),
        "writing_analytics": lambda: engine.analyze("cn1", "text", ["academic"]),
        "collab_doc": lambda: engine.create_doc("cn1", {}),
        "instruction_panel": lambda: engine.scaffold_stream("cn1"),
        "planner": lambda: engine.save_plan(Plan(session_id="cn1", main_strategy="Read first, then write")),
    }
    for tool, call in session_checks.items():
        with pytest.raises(ToolDisabled) as exc:
            call()
        assert exc.value.tool == tool
    engine.close()
