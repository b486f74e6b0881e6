"""Offset-addressed writing-analytics findings.

All character offsets are Unicode scalar-value indices into the analyzed
text (Python string indices), never bytes; the workspace UI indexes by code
point too, so spans agree across the wire.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

ANNOTATION_KINDS = (
    "spelling",
    "grammar",
    "tone",
    "complexity",
    "vocabulary",
    "originality",
    "cognition",
)


@dataclass(frozen=True)
class Annotation:
    start: int
    end: int
    kind: str
    label: str
    suggestion: str | None = None
    source_ref: tuple[str, tuple[int, int]] | None = None  # (source_id, (start, end))

    def to_doc(self) -> dict:
        doc = {
            "span": [self.start, self.end],
            "kind": self.kind,
            "label": self.label,
        }
        if self.suggestion is not None:
            doc["suggestion"] = self.suggestion
        if self.source_ref is not None:
            doc["source_ref"] = {"source_id": self.source_ref[0], "span": list(self.source_ref[1])}
        return doc


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class AnnotationSet:
    text_hash: str
    annotations: list[Annotation] = field(default_factory=list)

    @classmethod
    def for_text(cls, text: str, annotations: Sequence[Annotation] = ()) -> "AnnotationSet":
        out = cls(text_digest(text), sorted(annotations, key=lambda a: (a.kind, a.start, a.end)))
        out.validate(len(text))
        return out

    def of_kind(self, kind: str) -> list[Annotation]:
        return [a for a in self.annotations if a.kind == kind]

    def validate(self, text_len: int) -> None:
        seen_end: dict[str, int] = {}
        for ann in self.annotations:
            if ann.kind not in ANNOTATION_KINDS:
                raise ValueError(f"unknown annotation kind {ann.kind!r}")
            if not (0 <= ann.start < ann.end <= text_len):
                raise ValueError(f"span {ann.start}..{ann.end} outside text of length {text_len}")
            if ann.kind == "originality" and ann.source_ref is None:
                raise ValueError("originality annotations must carry a source_ref")
            if ann.start < seen_end.get(ann.kind, 0):
                raise ValueError(f"overlapping {ann.kind} annotations")
            seen_end[ann.kind] = ann.end

    def to_doc(self) -> dict:
        return {"text_hash": self.text_hash, "annotations": [a.to_doc() for a in self.annotations]}


def merge_spans(annotations: Sequence[Annotation]) -> list[Annotation]:
    """Merge overlapping same-kind annotations; the earliest (then longest)
    constituent supplies label, suggestion, and source_ref."""
    merged: list[Annotation] = []
    for ann in sorted(annotations, key=lambda a: (a.start, -(a.end - a.start))):
        if merged and ann.start <= merged[-1].end and ann.kind == merged[-1].kind:
            prev = merged[-1]
            if ann.end > prev.end:
                merged[-1] = Annotation(prev.start, ann.end, prev.kind, prev.label, prev.suggestion, prev.source_ref)
        else:
            merged.append(ann)
    return merged
