"""Gateway-backed writing analyzers: basic writing, cognition level, grading.

Provider replies are structured JSON. Replies that do not decode raise the
typed UnparseableReply; decodable replies with bad entries (spans outside the
text, unknown levels) degrade entry-wise and bump a provider-error counter,
so arbitrary provider output can never crash an analysis.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from dataclasses import dataclass

from .agents import Gateway, GatewayError, ProviderRequest
from .annotations import Annotation, AnnotationSet, merge_spans
from .textscan import sentence_spans

BLOOM_LEVELS = ("Remember", "Understand", "Apply", "Analyze", "Evaluate", "Create")
BLOOM_ORDER = {level: i for i, level in enumerate(BLOOM_LEVELS)}

BASIC_SYSTEM_PROMPT = (
    "You are a writing checker. Find spelling and grammar errors in the user's text. "
    'Reply with JSON only: {"annotations": [{"start": int, "end": int, "kind": "spelling"|"grammar", '
    '"label": str, "suggestion": str}]}. Offsets are character indices into the text.'
)

COGNITION_SYSTEM_PROMPT = (
    "You classify sentences by cognitive level using the six levels "
    "Remember, Understand, Apply, Analyze, Evaluate, Create. The user sends a numbered "
    'sentence list; reply with JSON only: {"levels": ["<level>", ...]} with one entry per sentence, in order.'
)

RUBRIC_SYSTEM_PROMPT = (
    "You grade a submission against rubric criteria. Reply with JSON only: "
    '{"criteria": [{"name": str, "points": number, "comment": str}], "feedback": str}. '
    "Award points between zero and each criterion's maximum."
)


class GatewayUnavailable(RuntimeError):
    pass


class UnparseableReply(RuntimeError):
    pass


class RubricUnknown(KeyError):
    pass


@dataclass(frozen=True)
class RubricCriterion:
    name: str
    description: str
    max_points: int

    def __post_init__(self):
        if self.max_points <= 0:
            raise ValueError(f"criterion {self.name!r}: max_points must be positive")


@dataclass(frozen=True)
class Rubric:
    rubric_id: str
    criteria: tuple[RubricCriterion, ...]

    def __post_init__(self):
        names = [c.name for c in self.criteria]
        if len(set(names)) != len(names):
            raise ValueError("rubric criteria names must be unique")

    @property
    def total(self) -> int:
        return sum(c.max_points for c in self.criteria)

    @classmethod
    def from_doc(cls, doc) -> "Rubric":
        return cls(
            rubric_id=str(doc["rubric_id"]),
            criteria=tuple(
                RubricCriterion(str(c["name"]), str(c.get("description", "")), int(c["max_points"]))
                for c in doc["criteria"]
            ),
        )


@dataclass
class Grade:
    per_criterion: list[dict]
    total_points: int
    feedback_text: str
    prompt: str
    raw_reply: str

    def to_doc(self) -> dict:
        return {
            "per_criterion": self.per_criterion,
            "total_points": self.total_points,
            "feedback_text": self.feedback_text,
        }


class WritingService:
    def __init__(self, gateway: Gateway, model_ref: str = "scripted"):
        self.gateway = gateway
        self.model_ref = model_ref
        self.provider_errors: Counter = Counter()
        self._lock = threading.Lock()

    def _complete(self, system: str, user: str) -> str:
        request = ProviderRequest(model_ref=self.model_ref, messages=(("system", system), ("user", user)))
        try:
            return self.gateway.complete(request).text
        except GatewayError as exc:
            raise GatewayUnavailable(str(exc)) from exc

    def _count_error(self, kind: str) -> None:
        with self._lock:
            self.provider_errors[kind] += 1

    def analyze_basic(self, text: str) -> AnnotationSet:
        if not text:
            return AnnotationSet.for_text(text)
        reply = self._complete(BASIC_SYSTEM_PROMPT, text)
        try:
            doc = json.loads(reply)
            entries = doc["annotations"]
        except (ValueError, KeyError, TypeError) as exc:
            raise UnparseableReply(f"basic-writing reply not decodable: {exc}") from exc
        annotations = []
        for entry in entries:
            try:
                start, end = int(entry["start"]), int(entry["end"])
                kind = entry["kind"]
                if kind not in ("spelling", "grammar"):
                    raise ValueError(kind)
                if not (0 <= start < end <= len(text)):
                    raise ValueError("span outside text")
                annotations.append(
                    Annotation(start, end, kind, str(entry.get("label", kind)), entry.get("suggestion"))
                )
            except (ValueError, KeyError, TypeError):
                self._count_error("basic")
        per_kind: dict[str, list[Annotation]] = {}
        for ann in annotations:
            per_kind.setdefault(ann.kind, []).append(ann)
        kept: list[Annotation] = []
        for anns in per_kind.values():
            kept.extend(merge_spans(anns))
        return AnnotationSet.for_text(text, kept)

    def classify_cognition(self, text: str) -> AnnotationSet:
        spans = sentence_spans(text)
        if not spans:
            return AnnotationSet.for_text(text)
        numbered = "\n".join(f"{i + 1}. {text[s:e]}" for i, (s, e) in enumerate(spans))
        reply = self._complete(COGNITION_SYSTEM_PROMPT, numbered)
        try:
            doc = json.loads(reply)
            levels = doc["levels"]
            if not isinstance(levels, list):
                raise TypeError("levels must be a list")
        except (ValueError, KeyError, TypeError) as exc:
            raise UnparseableReply(f"cognition reply not decodable: {exc}") from exc
        if len(levels) != len(spans):
            self._count_error("cognition")
        annotations = []
        for (start, end), level in zip(spans, levels):
            if level not in BLOOM_ORDER:
                self._count_error("cognition")
                continue
            annotations.append(Annotation(start, end, "cognition", level))
        return AnnotationSet.for_text(text, annotations)

    def grade_submission(self, text: str, rubric: Rubric) -> Grade:
        if not text.strip():
            return Grade(
                per_criterion=[
                    {"name": c.name, "points": 0, "comment": "no submission content"} for c in rubric.criteria
                ],
                total_points=0,
                feedback_text="no submission content",
                prompt="",
                raw_reply="",
            )
        criteria_text = "\n".join(
            f"- {c.name} (max {c.max_points} points): {c.description}" for c in rubric.criteria
        )
        user = f"Rubric criteria:\n{criteria_text}\n\nSubmission:\n{text}"
        reply = self._complete(RUBRIC_SYSTEM_PROMPT, user)
        try:
            return self._parse_grade(reply, rubric, user)
        except UnparseableReply:
            self._count_error("grading")
            reply = self._complete(RUBRIC_SYSTEM_PROMPT, user)
            return self._parse_grade(reply, rubric, user)

    def _parse_grade(self, reply: str, rubric: Rubric, prompt: str) -> Grade:
        try:
            doc = json.loads(reply)
            entries = {str(e["name"]): e for e in doc["criteria"]}
            feedback = str(doc.get("feedback", ""))
        except (ValueError, KeyError, TypeError) as exc:
            raise UnparseableReply(f"grading reply not decodable: {exc}") from exc
        per_criterion = []
        total = 0
        for criterion in rubric.criteria:
            entry = entries.get(criterion.name, {})
            try:
                points = int(round(float(entry.get("points", 0))))
            except (ValueError, TypeError):
                points = 0
            clamped = False
            if points < 0:
                points, clamped = 0, True
            elif points > criterion.max_points:
                points, clamped = criterion.max_points, True
            if clamped:
                self._count_error("grading")
            row = {"name": criterion.name, "points": points, "comment": str(entry.get("comment", ""))}
            if clamped:
                row["clamped"] = True
            per_criterion.append(row)
            total += points
        return Grade(per_criterion, total, feedback, prompt, reply)
