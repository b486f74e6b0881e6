#!/usr/bin/env python3
"""Run a three-arm demo experiment end to end against an in-process engine.

Simulates a CN, a Po, and a PwC learner working the same timed task on an
injected clock, then prints what each arm experienced: labels, conditions,
scaffolds, a graded submission, a short chat, and a collaborative doc.

    python scripts/run_demo_session.py [--data-dir DIR]
"""

import argparse
import json
import tempfile

from srlengine.admin import ExperimentConfig, Plan, TaskSpec
from srlengine.agents import AgentConfig
from srlengine.clock import ManualClock
from srlengine.collab import DocOp
from srlengine.config import EngineConfig
from srlengine.engine import Engine

ALL_TOOLS = frozenset({"chat", "planner", "writing_analytics", "collab_doc", "timer", "instruction_panel"})

ESSAY = (
    "AI can support diagnosis. We don't think it replaces doctors. "
    "Machine learning models analyze patient histories and imaging data to flag risk early."
)
SOURCE = "machine learning models analyze patient histories and imaging data to flag risk early and often"


def make_event(i, session, learner, action, target=""):
    return {
        "event_id": f"demo-{session}-{i}",
        "session_id": session,
        "learner_id": learner,
        "experiment_id": "demo",
        "client_timestamp_ms": i,
        "action": action,
        "target": target,
    }


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--data-dir", default=None)
    args = parser.parse_args()
    data_dir = args.data_dir or tempfile.mkdtemp(prefix="srlengine-demo-")

    clock = ManualClock()
    engine = Engine(EngineConfig(data_dir=data_dir), clock=clock)
    engine.admin.configure_experiment(
        ExperimentConfig(
            experiment_id="demo",
            name="demo study",
            groups=("CN", "Po", "PwC"),
            toolsets={"CN": frozenset({"timer"}), "Po": ALL_TOOLS, "PwC": ALL_TOOLS},
            task=TaskSpec(duration_ms=7_200_000, instruction_doc="Write a 300-word essay on AI in medicine."),
        )
    )
    engine.register_source_set("demo-sources", [("reading-1", SOURCE)])
    engine.register_rubric(
        {
            "rubric_id": "demo-rubric",
            "criteria": [
                {"name": "accuracy", "description": "claims are correct", "max_points": 5},
                {"name": "use of sources", "description": "integrates the readings", "max_points": 5},
            ],
        }
    )

    for session, group in (("cn-1", "CN"), ("po-1", "Po"), ("pwc-1", "PwC")):
        engine.admin.create_session(session, f"learner-{session}", "demo", group)
        engine.set_phase(session, "main_task")

    # PwC learner orients and plans early; Po learner only drafts; CN untouched.
    engine.ingest_raw(make_event(1, "pwc-1", "learner-pwc-1", "TIMER"))
    engine.submit_instrument("pwc-1", "prior_knowledge", [0, 1, 2, 0, 1], [0, 1, 2, 0, 1])
    engine.save_plan(Plan(session_id="pwc-1", main_strategy="Read first, then write"))
    engine.ingest_raw(make_event(2, "po-1", "learner-po-1", "ESSAY_EDIT", "essay"))

    # tick the task clock to 14 minutes; scaffolds fire for missing orientation
    for tick in range(1, 85):
        clock.set(tick * 10_000)
        for session in ("cn-1", "po-1", "pwc-1"):
            for message in engine.tick_session(session):
                print(f"[scaffold] {session} rule={message.rule_id} degraded={message.degraded}")
                print(f"           text: {message.scaffold_text!r}")

    print("\n[conditions pwc-1]")
    for statement in engine.analyzer.conditions("pwc-1").statements:
        print("  -", statement)

    print("\n[labels pwc-1]")
    for label in engine.labels("pwc-1"):
        print("  ", label.to_bytes().decode())

    print("\n[writing analytics po-1]")
    pos = ESSAY.index("don't")
    engine.scripted_provider.script(
        json.dumps({"annotations": [{"start": pos, "end": pos + 5, "kind": "grammar", "label": "contraction", "suggestion": "do not"}]})
    )
    result = engine.analyze("po-1", ESSAY, ["basic", "academic", "originality"], source_set_id="demo-sources")
    for ann in result.annotations:
        print(f"   {ann.kind:12s} {ESSAY[ann.start:ann.end]!r}" + (f" -> {ann.suggestion}" if ann.suggestion else ""))

    print("\n[rubric grading po-1]")
    engine.scripted_provider.script(
        json.dumps({"criteria": [{"name": "accuracy", "points": 4, "comment": "solid"},
                                 {"name": "use of sources", "points": 3, "comment": "cite more"}],
                    "feedback": "Good start; integrate the second reading."})
    )
    grade = engine.grade("po-1", ESSAY, "demo-rubric")
    print(f"   total {grade.total_points}/10: {grade.feedback_text}")

    print("\n[multi-agent chat pwc-1, separate windows]")
    engine.scripted_provider.script("As the client, I need the system by March.", "As the supplier, March is feasible with staged delivery.")
    chat = engine.configure_chat("pwc-1", "separate", [
        AgentConfig("client", "Client", "Role-play the client in a negotiation."),
        AgentConfig("supplier", "Supplier", "Role-play the supplier in a negotiation."),
    ])
    for agent_id in ("client", "supplier"):
        _, reply = engine.send_chat_turn(chat.chat_id, "What are your constraints?", agent_id)
        print(f"   {agent_id}: {reply.text}")

    print("\n[collaborative doc]")
    doc_id = engine.create_doc("pwc-1", {"learner-pwc-1": "pwc-1", "learner-po-1": "po-1"})
    engine.submit_doc_op(DocOp("d1", doc_id, "learner-pwc-1", 0, "insert", 0, text="Shared outline: "))
    engine.submit_doc_op(DocOp("d2", doc_id, "learner-po-1", 0, "insert", 0, text="AI in medicine. "))
    print("   content:", repr(engine.collab.content(doc_id)))

    stats = engine.admin.compute_stats("demo", engine.store)
    print(f"\n[stats] participants={stats.participant_count} avg_events={stats.avg_events_per_participant:.1f}")
    print(f"[data dir] {data_dir}")
    engine.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
