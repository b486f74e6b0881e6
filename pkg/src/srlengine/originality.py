"""Exact n-gram overlap detection between an essay and background sources.

A run of MIN_RUN_TOKENS or more consecutive essay tokens that appears
verbatim in a source is flagged ("more than seven consecutive words" means
eight is the smallest flagged run). Matching is over punctuation-stripped,
casefolded whitespace tokens; results are reported as character spans in both
the essay and the source.

The index is a hash map from 8-token shingles to source positions (hash hit
verified by tuple equality); each hit is extended maximally and the scan then
jumps to the last window overlapping the run's tail, which keeps the scan
linear on ordinary text while provably preserving the union of maximal runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .annotations import Annotation, AnnotationSet
from .textscan import Token, tokenize

MIN_RUN_TOKENS = 8


@dataclass(frozen=True)
class _Run:
    start: int  # essay token index, inclusive
    end: int  # essay token index, exclusive
    source_order: int
    source_id: str
    source_pos: int  # source token index of the match start
    source_len: int  # matched token count at source_pos (pre-merge length)


def _find_runs(essay: Sequence[str], source: Sequence[str], source_order: int, source_id: str) -> list[_Run]:
    n, m = len(essay), len(source)
    if n < MIN_RUN_TOKENS or m < MIN_RUN_TOKENS:
        return []
    index: dict[tuple[str, ...], list[int]] = {}
    for p in range(m - MIN_RUN_TOKENS + 1):
        index.setdefault(tuple(source[p : p + MIN_RUN_TOKENS]), []).append(p)
    runs: list[_Run] = []
    i = 0
    while i <= n - MIN_RUN_TOKENS:
        positions = index.get(tuple(essay[i : i + MIN_RUN_TOKENS]))
        if not positions:
            i += 1
            continue
        best_len, best_pos = 0, -1
        for p in positions:
            length = MIN_RUN_TOKENS
            while i + length < n and p + length < m and essay[i + length] == source[p + length]:
                length += 1
            if length > best_len:
                best_len, best_pos = length, p
        runs.append(_Run(i, i + best_len, source_order, source_id, best_pos, best_len))
        # Runs starting inside (i, end-7) that outlast this one must contain
        # the window at end-7, so resuming there loses nothing.
        i = i + best_len - (MIN_RUN_TOKENS - 1)
    return runs


def _merge_runs(runs: list[_Run]) -> list[_Run]:
    """Union of token intervals; overlapping or adjacent runs coalesce and
    keep the earliest (then longest) constituent's source reference."""
    merged: list[_Run] = []
    for run in sorted(runs, key=lambda r: (r.start, -(r.end - r.start), r.source_order, r.source_pos)):
        if merged and run.start <= merged[-1].end:
            prev = merged[-1]
            if run.end > prev.end:
                merged[-1] = _Run(prev.start, run.end, prev.source_order, prev.source_id, prev.source_pos, prev.source_len)
        else:
            merged.append(run)
    return merged


def analyze_originality(text: str, sources: Sequence[tuple[str, str]]) -> AnnotationSet:
    essay_tokens = tokenize(text)
    essay_norm = [t.text for t in essay_tokens]
    runs: list[_Run] = []
    source_tokens: dict[str, list[Token]] = {}
    for order, (source_id, source_text) in enumerate(sources):
        toks = tokenize(source_text)
        source_tokens[source_id] = toks
        runs.extend(_find_runs(essay_norm, [t.text for t in toks], order, source_id))
    annotations = []
    for run in _merge_runs(runs):
        src_toks = source_tokens[run.source_id]
        src_end = run.source_pos + run.source_len
        annotations.append(
            Annotation(
                start=essay_tokens[run.start].start,
                end=essay_tokens[run.end - 1].end,
                kind="originality",
                label=f"verbatim overlap ({run.end - run.start} words)",
                source_ref=(
                    run.source_id,
                    (src_toks[run.source_pos].start, src_toks[src_end - 1].end),
                ),
            )
        )
    return AnnotationSet.for_text(text, annotations)
