"""Shared text scanning: word tokenization and sentence segmentation."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

_WORD_RE = re.compile(r"\S+")
_SENTENCE_END_RE = re.compile(r"[.!?]+(?=\s|$)")

# Trailing-dot abbreviations that do not end a sentence.
ABBREVIATIONS = frozenset(
    {
        "e.g", "i.e", "etc", "cf", "vs", "al", "fig", "eq", "no",
        "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vol", "pp", "ca",
    }
)


@dataclass(frozen=True)
class Token:
    text: str  # punctuation-stripped, casefolded surface form
    start: int  # char offset of the first kept character
    end: int  # char offset one past the last kept character


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[Token]:
    """Whitespace-split words, stripped of leading/trailing punctuation,
    casefolded. Hyphenated words stay single tokens; all-punctuation chunks
    are dropped."""
    tokens: list[Token] = []
    for m in _WORD_RE.finditer(text):
        start, end = m.start(), m.end()
        while start < end and _is_punct(text[start]):
            start += 1
        while end > start and _is_punct(text[end - 1]):
            end -= 1
        if start < end:
            tokens.append(Token(text[start:end].casefold(), start, end))
    return tokens


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Sentence spans [start, end); splits on ., !, ? followed by whitespace
    or end of text, skipping listed abbreviations. Spans are trimmed to
    non-whitespace and jointly cover every non-whitespace character."""
    boundaries: list[int] = []
    for m in _SENTENCE_END_RE.finditer(text):
        if "." in m.group() and "!" not in m.group() and "?" not in m.group():
            before = text[: m.start()]
            word = re.split(r"\s", before)[-1] if before else ""
            word = word.lstrip("(\"'([{")
            if word.casefold().rstrip(".") in ABBREVIATIONS or re.fullmatch(r"[A-Za-z]", word):
                continue
        boundaries.append(m.end())
    spans: list[tuple[int, int]] = []
    prev = 0
    for b in boundaries:
        spans.append((prev, b))
        prev = b
    if prev < len(text):
        spans.append((prev, len(text)))
    trimmed: list[tuple[int, int]] = []
    for start, end in spans:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            trimmed.append((start, end))
    return trimmed
