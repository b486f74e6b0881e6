from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlengine.analyzer import (
    DYNAMIC_FLAGS,
    Analyzer,
    AnalyzerConfig,
    IntervalNotElapsed,
    LabelEngine,
    LengthMismatch,
    RuleSet,
    SessionMismatch,
    StatementTable,
    load_taxonomy,
    new_snapshot,
    score_instrument,
    update_conditions,
)
from srlengine.config import packaged_data
from srlengine.model import TraceEvent

TAXONOMY = load_taxonomy(packaged_data("taxonomy.json"), "COPES")
STATEMENTS = StatementTable.from_file(packaged_data("statements.json"))
RULESET = RuleSet.from_file(packaged_data("label_rules.json"), TAXONOMY)


def committed(seq: int, ms: int, action: str, target: str = "", session_id: str = "s1") -> TraceEvent:
    return TraceEvent(
        event_id=f"e{seq}",
        session_id=session_id,
        learner_id="l1",
        experiment_id="x1",
        client_timestamp_ms=ms,
        action=action,
        target=target,
        server_seq=seq,
        server_ms=ms,
    )


def fresh_engine(session_id: str = "s1", config: AnalyzerConfig = AnalyzerConfig()) -> LabelEngine:
    return LabelEngine(session_id, RULESET, TAXONOMY, STATEMENTS, config)


def label_all(events):
    engine = fresh_engine()
    out = []
    for event in events:
        out.extend(engine.on_event(event))
    return out, engine


# -- occurrence / contingency / patterned -----------------------------------


def test_task_requirement_early_is_orientation():
    labels, _ = label_all([committed(0, 30000, "TASK_REQUIREMENT")])
    occ = [l for l in labels if l.level == "occurrence"]
    assert len(occ) == 1
    assert occ[0].process == "Orientation"
    assert occ[0].evidence == (0,)


def test_rubric_during_drafting_is_evaluation_contingency():
    labels, _ = label_all(
        [
            committed(0, 1000, "ESSAY_EDIT"),
            committed(1, 2000, "ESSAY_EDIT"),
            committed(2, 3000, "RUBRIC"),
        ]
    )
    contingency = [l for l in labels if l.level == "contingency"]
    assert [l.process for l in contingency] == ["Evaluation"]
    label = contingency[0]
    assert 2 in label.evidence and label.window[1] == 2
    assert label.window[0] in label.evidence


def test_rubric_without_drafting_window_no_contingency():
    labels, _ = label_all([committed(0, 1000, "RUBRIC")])
    assert [l for l in labels if l.level == "contingency"] == []
    assert [l.process for l in labels if l.level == "occurrence"] == ["Orientation"]


def test_strategic_cycle_patterned_on_third_repetition():
    events = []
    seq = 0
    ms = 0
    for _ in range(3):
        for action in ("PAGE_NAVIGATION", "NOTE_EDIT", "SUBMIT_TEXT"):
            events.append(committed(seq, ms, action, target=f"p{seq}"))
            seq += 1
            ms += 5000
    labels, _ = label_all(events)
    patterned = [l for l in labels if l.level == "patterned"]
    assert len(patterned) == 1
    assert patterned[0].process == "StrategicCycle"
    assert patterned[0].evidence == tuple(range(9))
    assert patterned[0].window == (0, 8)


def test_two_repetitions_do_not_emit_patterned():
    events = []
    seq = 0
    for _ in range(2):
        for action in ("PAGE_NAVIGATION", "NOTE_EDIT", "SUBMIT_TEXT"):
            events.append(committed(seq, seq * 1000, action))
            seq += 1
    labels, _ = label_all(events)
    assert [l for l in labels if l.level == "patterned"] == []


def test_empty_stream_empty_labels():
    labels, _ = label_all([])
    assert labels == []


def test_first_vs_re_reading():
    labels, _ = label_all(
        [
            committed(0, 0, "PAGE_NAVIGATION", target="doc-a"),
            committed(1, 1000, "PAGE_NAVIGATION", target="doc-a"),
            committed(2, 2000, "PAGE_NAVIGATION", target="doc-b"),
        ]
    )
    occ = [l.process for l in labels if l.level == "occurrence"]
    assert occ == ["FirstReading", "ReReading", "FirstReading"]


def test_determinism_same_stream_same_bytes():
    events = [
        committed(0, 0, "PAGE_NAVIGATION", target="a"),
        committed(1, 5000, "ESSAY_EDIT"),
        committed(2, 9000, "RUBRIC"),
        committed(3, 12000, "TIMER"),
    ]
    first, _ = label_all(events)
    second, _ = label_all(events)
    assert [l.to_bytes() for l in first] == [l.to_bytes() for l in second]


_actions = st.sampled_from(
    ["TIMER", "ESSAY_EDIT", "RUBRIC", "TASK_REQUIREMENT", "PAGE_NAVIGATION", "NOTE_EDIT", "CHAT_SEND", "SCAFFOLD_SHOWN"]
)


@settings(deadline=None, max_examples=50)
@given(st.lists(_actions, max_size=40))
def test_every_event_gets_exactly_one_occurrence_label(actions):
    events = [committed(i, i * 1000, action) for i, action in enumerate(actions)]
    labels, _ = label_all(events)
    occurrence = [l for l in labels if l.level == "occurrence"]
    assert len(occurrence) == len(events)
    assert [l.evidence[0] for l in occurrence] == list(range(len(events)))
    for label in labels:
        assert label.process in TAXONOMY.processes
        assert label.evidence, "evidence must be non-empty"
        assert label.window[0] <= min(label.evidence) and max(label.evidence) <= label.window[1]


# -- conditions ---------------------------------------------------------------


def test_timer_flips_time_aware_with_verbatim_statement():
    snap = new_snapshot("s1", STATEMENTS)
    snap2 = update_conditions(snap, committed(0, 0, "TIMER"), STATEMENTS)
    assert snap2.flag("time_aware")
    assert "the student is aware of the time constraint." in snap2.statements
    assert "the student is not aware of the time constraint." not in snap2.statements


def test_non_condition_action_leaves_flags():
    snap = new_snapshot("s1", STATEMENTS)
    snap2 = update_conditions(snap, committed(0, 0, "ESSAY_EDIT"), STATEMENTS)
    assert snap2.dynamic == snap.dynamic
    assert "the student is not aware of the time constraint." in snap2.statements


def test_condition_update_idempotent_and_monotone():
    snap = new_snapshot("s1", STATEMENTS)
    once = update_conditions(snap, committed(0, 0, "TIMER"), STATEMENTS)
    twice = update_conditions(once, committed(1, 1, "TIMER"), STATEMENTS)
    assert once == twice


def test_condition_session_mismatch():
    snap = new_snapshot("s1", STATEMENTS)
    with pytest.raises(SessionMismatch):
        update_conditions(snap, committed(0, 0, "TIMER", session_id="other"), STATEMENTS)


def test_statement_totality():
    snap = new_snapshot("s1", STATEMENTS)
    assert len(snap.statements) == 8


@settings(deadline=None, max_examples=40)
@given(st.lists(_actions | st.sampled_from(["SAVE_PLANNER", "TRY_OUT_TOOLS"]), max_size=30))
def test_dynamic_flags_monotone(actions):
    engine = fresh_engine()
    previous = {flag: False for flag in DYNAMIC_FLAGS}
    for i, action in enumerate(actions):
        engine.on_event(committed(i, i * 500, action))
        current = dict(engine.conditions.dynamic)
        for flag in DYNAMIC_FLAGS:
            assert current[flag] >= previous[flag], f"{flag} reverted"
        previous = current


# -- instrument scoring --------------------------------------------------------


def test_score_12_of_15():
    # count-and-divide oracle: 12 matching positions over 15 items
    key = [2, 1, 0, 3, 2, 2, 1, 0, 0, 3, 1, 2, 0, 1, 3]
    responses = list(key)
    responses[4] = (key[4] + 1) % 4
    responses[9] = (key[9] + 1) % 4
    responses[14] = None
    matches = sum(1 for r, k in zip(responses, key) if r == k)
    assert matches == 12
    assert score_instrument(responses, key) == matches / 15 == 0.8


def test_score_all_correct():
    key = [0, 1, 2, 3]
    assert score_instrument(list(key), key) == 1.0


def test_score_all_unanswered():
    key = [0, 1, 2]
    assert score_instrument([None, -1, None], key) == 0.0


def test_score_length_mismatch():
    with pytest.raises(LengthMismatch):
        score_instrument([1, 2], [1, 2, 3])


# -- interval aggregates -----------------------------------------------------------


def test_interval_with_no_events_is_all_zero():
    engine = fresh_engine()
    agg = engine.aggregate_interval(0)
    assert agg.process_counts == {}
    assert agg.action_time_proportions == {}


def test_action_spanning_whole_interval_capped():
    # Events at 0 and L: the first action's proportion is min(gap, cap)/L.
    config = AnalyzerConfig()
    L, cap = config.interval_ms, config.idle_cap_ms
    engine = fresh_engine(config=config)
    engine.on_event(committed(0, 0, "ESSAY_EDIT"))
    engine.on_event(committed(1, L, "TIMER"))
    agg = engine.aggregate_interval(0)
    assert agg.action_time_proportions == {"ESSAY_EDIT": min(L, cap) / L}


def test_interval_proportions_sum_below_one():
    engine = fresh_engine()
    for i in range(50):
        engine.on_event(committed(i, i * 7000, "ESSAY_EDIT" if i % 2 else "TIMER"))
    agg = engine.aggregate_interval(0)
    assert sum(agg.action_time_proportions.values()) <= 1.0 + 1e-12


def test_interval_label_counts_use_window_start():
    config = AnalyzerConfig()
    L = config.interval_ms
    engine = fresh_engine(config=config)
    engine.on_event(committed(0, 100, "TIMER"))
    engine.on_event(committed(1, L + 100, "TIMER"))
    agg0 = engine.aggregate_interval(0)
    agg1 = engine.aggregate_interval(1)
    assert agg0.process_counts == {"Monitoring": 1}
    assert agg1.process_counts == {"Monitoring": 1}


def test_interval_not_elapsed_guard():
    analyzer = Analyzer(RULESET, TAXONOMY, STATEMENTS)
    analyzer.on_event(committed(0, 0, "TIMER"))
    with pytest.raises(IntervalNotElapsed):
        analyzer.aggregate_interval("s1", 0, now_task_ms=1000)
    agg = analyzer.aggregate_interval("s1", 0, now_task_ms=AnalyzerConfig().interval_ms)
    assert agg.interval_index == 0
