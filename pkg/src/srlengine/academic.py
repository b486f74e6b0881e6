"""Academic-style scan: lexicon phrase matching plus sentence complexity.

The lexicon is a plain lookup from lowercased surface phrase to an issue kind
(tone or vocabulary) and a suggestion; scanning is longest-match over the
token stream, so "a lot of" wins over "a lot".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .annotations import Annotation, AnnotationSet, merge_spans
from .textscan import sentence_spans, tokenize

DEFAULT_MAX_SENTENCE_WORDS = 35


class LexiconMissing(LookupError):
    pass


@dataclass(frozen=True)
class AcademicLexicon:
    lexicon_id: str
    phrases: Mapping[tuple[str, ...], tuple[str, str]]  # tokens -> (kind, suggestion)
    max_sentence_words: int = DEFAULT_MAX_SENTENCE_WORDS
    max_phrase_tokens: int = field(default=1)

    @classmethod
    def from_doc(cls, doc: Mapping) -> "AcademicLexicon":
        phrases: dict[tuple[str, ...], tuple[str, str]] = {}
        for phrase, entry in doc.get("phrases", {}).items():
            key = tuple(t.text for t in tokenize(phrase))
            if not key:
                raise ValueError(f"lexicon phrase {phrase!r} is empty after tokenization")
            kind = entry["kind"]
            if kind not in ("tone", "vocabulary"):
                raise ValueError(f"lexicon phrase {phrase!r} has unsupported kind {kind!r}")
            phrases[key] = (kind, str(entry.get("suggestion", "")))
        longest = max((len(k) for k in phrases), default=1)
        return cls(
            lexicon_id=str(doc.get("lexicon_id", "default")),
            phrases=phrases,
            max_sentence_words=int(doc.get("max_sentence_words", DEFAULT_MAX_SENTENCE_WORDS)),
            max_phrase_tokens=longest,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "AcademicLexicon":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))


def analyze_academic(text: str, lexicon: AcademicLexicon | None) -> AnnotationSet:
    if lexicon is None:
        raise LexiconMissing("no academic lexicon loaded")
    tokens = tokenize(text)
    norms = [t.text for t in tokens]
    found: list[Annotation] = []

    i = 0
    n = len(tokens)
    while i < n:
        hit = None
        for length in range(min(lexicon.max_phrase_tokens, n - i), 0, -1):
            entry = lexicon.phrases.get(tuple(norms[i : i + length]))
            if entry is not None:
                hit = (length, entry)
                break
        if hit is None:
            i += 1
            continue
        length, (kind, suggestion) = hit
        found.append(
            Annotation(
                start=tokens[i].start,
                end=tokens[i + length - 1].end,
                kind=kind,
                label=" ".join(norms[i : i + length]),
                suggestion=suggestion,
            )
        )
        i += length

    complexity: list[Annotation] = []
    for start, end in sentence_spans(text):
        words = sum(1 for t in tokens if start <= t.start and t.end <= end)
        if words > lexicon.max_sentence_words:
            complexity.append(
                Annotation(
                    start=start,
                    end=end,
                    kind="complexity",
                    label=f"sentence has {words} words (limit {lexicon.max_sentence_words})",
                    suggestion="split this sentence",
                )
            )

    merged: list[Annotation] = []
    for kind in ("tone", "vocabulary", "complexity"):
        merged.extend(merge_spans([a for a in found + complexity if a.kind == kind]))
    return AnnotationSet.for_text(text, merged)
