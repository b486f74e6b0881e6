from __future__ import annotations

import json
import re

import pytest

from srlengine.agents import Gateway, ProviderRejected, ScriptedProvider
from srlengine.writing_llm import (
    BLOOM_LEVELS,
    GatewayUnavailable,
    Rubric,
    RubricCriterion,
    UnparseableReply,
    WritingService,
)


def make_service(*replies: str) -> tuple[WritingService, ScriptedProvider]:
    gateway = Gateway(timeout_s=1.0)
    provider = ScriptedProvider(replies)
    gateway.register("scripted", provider)
    return WritingService(gateway), provider


def basic_reply(*entries: dict) -> str:
    return json.dumps({"annotations": list(entries)})


# -- basic writing --------------------------------------------------------------


def test_scripted_spelling_fix():
    text = "The teh mistake."
    service, _ = make_service(
        basic_reply({"start": 4, "end": 7, "kind": "spelling", "label": "teh", "suggestion": "the"})
    )
    result = service.analyze_basic(text)
    assert len(result.annotations) == 1
    ann = result.annotations[0]
    assert (ann.start, ann.end, ann.kind, ann.suggestion) == (4, 7, "spelling", "the")


def test_out_of_bounds_span_dropped_and_counted():
    text = "x" * 100
    service, _ = make_service(
        basic_reply({"start": 900, "end": 905, "kind": "spelling", "label": "ghost"})
    )
    result = service.analyze_basic(text)
    assert result.annotations == []
    assert service.provider_errors["basic"] == 1


def test_empty_text_no_gateway_call():
    service, provider = make_service()
    result = service.analyze_basic("")
    assert result.annotations == []
    assert provider.requests == []


def test_undecodable_reply_raises_unparseable():
    service, _ = make_service("not json at all")
    with pytest.raises(UnparseableReply):
        service.analyze_basic("some text")


def test_gateway_failure_surfaces_as_unavailable():
    gateway = Gateway(timeout_s=1.0)
    provider = ScriptedProvider()
    provider.fail_next(ProviderRejected("down"), times=2)  # retry also fails
    gateway.register("scripted", provider)
    service = WritingService(gateway)
    with pytest.raises(GatewayUnavailable):
        service.analyze_basic("some text")


# -- cognition ---------------------------------------------------------------------


def test_two_sentences_classified_as_scripted():
    text = "We remember facts. We create new theories."
    service, provider = make_service(json.dumps({"levels": ["Remember", "Create"]}))
    result = service.classify_cognition(text)
    assert [a.label for a in result.annotations] == ["Remember", "Create"]
    assert len(provider.requests) == 1, "one batched request per essay"
    assert provider.requests[0].messages[0][0] == "system"


def test_cognition_spans_tile_sentences():
    text = "First point here. Second, longer point follows! Third?"
    service, _ = make_service(json.dumps({"levels": ["Understand", "Analyze", "Evaluate"]}))
    result = service.classify_cognition(text)
    # independent segmentation pass: split on terminator+space boundaries
    independent = [m for m in re.split(r"(?<=[.!?])\s+", text) if m]
    assert len(result.annotations) == len(independent)
    for ann, expected in zip(result.annotations, independent):
        assert text[ann.start : ann.end] == expected.strip()


def test_cognition_empty_text():
    service, provider = make_service()
    assert service.classify_cognition("").annotations == []
    assert provider.requests == []


def test_cognition_invalid_level_degrades():
    text = "One. Two."
    service, _ = make_service(json.dumps({"levels": ["Remember", "Galaxy-Brain"]}))
    result = service.classify_cognition(text)
    assert [a.label for a in result.annotations] == ["Remember"]
    assert service.provider_errors["cognition"] == 1


def test_bloom_levels_total_order():
    assert BLOOM_LEVELS == ("Remember", "Understand", "Apply", "Analyze", "Evaluate", "Create")


# -- rubric grading -------------------------------------------------------------------


def two_criterion_rubric() -> Rubric:
    return Rubric(
        rubric_id="r1",
        criteria=(
            RubricCriterion("accuracy", "factually correct", 5),
            RubricCriterion("style", "clear prose", 5),
        ),
    )


def grade_reply(accuracy: float, style: float) -> str:
    return json.dumps(
        {
            "criteria": [
                {"name": "accuracy", "points": accuracy, "comment": "ok"},
                {"name": "style", "points": style, "comment": "fine"},
            ],
            "feedback": "keep going",
        }
    )


def test_grade_totals():
    service, _ = make_service(grade_reply(3, 4))
    grade = service.grade_submission("An essay.", two_criterion_rubric())
    assert grade.total_points == 7
    assert [row["points"] for row in grade.per_criterion] == [3, 4]
    assert grade.feedback_text == "keep going"


def test_grade_clamped_and_flagged():
    service, _ = make_service(grade_reply(9, 2))
    grade = service.grade_submission("An essay.", two_criterion_rubric())
    assert grade.per_criterion[0]["points"] == 5
    assert grade.per_criterion[0].get("clamped") is True
    assert grade.total_points == 7


def test_grade_empty_text_zero_without_call():
    service, provider = make_service()
    grade = service.grade_submission("   ", two_criterion_rubric())
    assert grade.total_points == 0
    assert grade.feedback_text == "no submission content"
    assert provider.requests == []


def test_grade_retries_once_on_unparseable_then_succeeds():
    service, provider = make_service("garbage", grade_reply(2, 2))
    grade = service.grade_submission("essay", two_criterion_rubric())
    assert grade.total_points == 4
    assert len(provider.requests) == 2


def test_grade_unparseable_twice_surfaces():
    service, _ = make_service("garbage", "also garbage")
    with pytest.raises(UnparseableReply):
        service.grade_submission("essay", two_criterion_rubric())


def test_grade_provenance_persisted():
    service, _ = make_service(grade_reply(1, 1))
    grade = service.grade_submission("essay body", two_criterion_rubric())
    assert "essay body" in grade.prompt
    assert grade.raw_reply == grade_reply(1, 1)
