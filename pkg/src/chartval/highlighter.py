"""Dictionary-based concept matching over clinical notes.

Surface terms are matched case-insensitively at token boundaries.  A match
is flagged negated when a negation trigger appears within the six tokens
preceding it in the same sentence.  Sentence boundaries are ., !, ? and
newline runs; tokens are maximal word-character runs.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "TermDictionary",
    "ClinicalNote",
    "MatchSpan",
    "DateRange",
    "HighlightedNote",
    "ChartView",
    "NEGATION_TRIGGERS",
    "scan_note",
    "classify_patient",
    "chart_view",
]

NEGATION_TRIGGERS: tuple[str, ...] = (
    "no",
    "not",
    "denies",
    "denied",
    "deny",
    "without",
    "never",
    "no evidence of",
    "no signs of",
    "negative for",
    "rules out",
    "ruled out",
    "absence of",
    "free of",
)

NEGATION_WINDOW_TOKENS = 6

_SENTENCE_SPLIT = re.compile(r"[.!?]|\n+")
_TOKEN = re.compile(r"\w+")


@dataclass(frozen=True)
class DateRange:
    """Inclusive calendar-date range."""

    start: date
    end: date

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"empty date range: {self.start} > {self.end}")

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    patient_id: str
    date: date
    text: str


@dataclass(frozen=True)
class MatchSpan:
    note_id: str
    start: int
    end: int
    concept_id: str
    negated: bool


class TermDictionary:
    """Deduplicated (concept_id, surface term) pairs with case folding."""

    def __init__(self, entries: Iterable[tuple[str, str]], case_fold: bool = True):
        self.case_fold = case_fold
        seen: set[tuple[str, str]] = set()
        cleaned: list[tuple[str, str]] = []
        for concept_id, term in entries:
            term = term.strip()
            if not term:
                raise ValueError(f"empty surface term for concept {concept_id!r}")
            key = (concept_id, term.casefold() if case_fold else term)
            if key in seen:
                continue
            seen.add(key)
            cleaned.append((concept_id, term))
        self.entries: tuple[tuple[str, str], ...] = tuple(cleaned)
        flags = re.IGNORECASE if case_fold else 0
        self._patterns = [
            (cid, re.compile(r"(?<!\w)" + re.escape(term) + r"(?!\w)", flags))
            for cid, term in self.entries
        ]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_csv(cls, path: str | Path, case_fold: bool = True) -> "TermDictionary":
        """Load the UTF-8 CSV format with header ``concept_id,term``."""
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or not {"concept_id", "term"} <= set(
                reader.fieldnames
            ):
                raise ValueError(
                    f"{path}: expected CSV header with columns concept_id,term"
                )
            rows = [(row["concept_id"], row["term"]) for row in reader]
        return cls(rows, case_fold=case_fold)


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    last = 0
    for m in _SENTENCE_SPLIT.finditer(text):
        spans.append((last, m.start()))
        last = m.end()
    spans.append((last, len(text)))
    return [(s, e) for s, e in spans if e > s]


_TRIGGER_TOKENS = tuple(tuple(t.split()) for t in NEGATION_TRIGGERS)


def _is_negated(tokens: Sequence[tuple[str, int, int]], match_start: int) -> bool:
    before = [t for t in tokens if t[2] <= match_start]
    window = [t[0] for t in before[-NEGATION_WINDOW_TOKENS:]]
    for trig in _TRIGGER_TOKENS:
        n = len(trig)
        for i in range(len(window) - n + 1):
            if tuple(window[i : i + n]) == trig:
                return True
    return False


def scan_note(note: ClinicalNote, dictionary: TermDictionary) -> list[MatchSpan]:
    """All token-boundary occurrences of dictionary terms, with negation flags.

    Spans from different terms may overlap.  Output is ordered by start
    offset, then end, then concept id.
    """
    spans: list[MatchSpan] = []
    sentences = _sentence_spans(note.text)
    token_cache: dict[int, list[tuple[str, int, int]]] = {}
    for concept_id, pattern in dictionary._patterns:
        for m in pattern.finditer(note.text):
            sent = next(
                (s for s in sentences if s[0] <= m.start() < s[1]),
                (m.start(), m.end()),
            )
            if sent[0] not in token_cache:
                token_cache[sent[0]] = [
                    (t.group().casefold(), t.start(), t.end())
                    for t in _TOKEN.finditer(note.text, sent[0], sent[1])
                ]
            negated = _is_negated(token_cache[sent[0]], m.start())
            spans.append(
                MatchSpan(
                    note_id=note.note_id,
                    start=m.start(),
                    end=m.end(),
                    concept_id=concept_id,
                    negated=negated,
                )
            )
    spans.sort(key=lambda s: (s.start, s.end, s.concept_id))
    return spans


def classify_patient(
    notes: Sequence[ClinicalNote],
    dictionary: TermDictionary,
    followup: DateRange | None = None,
    count_negated_mentions: bool = False,
) -> tuple[bool, date | None]:
    """EHR status for one patient: positive iff some qualifying mention exists
    in a note dated inside the follow-up range (all notes when None).

    Negated mentions do not qualify unless ``count_negated_mentions`` is set.
    Returns (status, date of the earliest qualifying note).
    """
    first: date | None = None
    for note in notes:
        if followup is not None and not followup.contains(note.date):
            continue
        for span in scan_note(note, dictionary):
            if span.negated and not count_negated_mentions:
                continue
            if first is None or note.date < first:
                first = note.date
            break
    return (first is not None), first


@dataclass(frozen=True)
class HighlightedNote:
    note: ClinicalNote
    spans: tuple[MatchSpan, ...]


@dataclass(frozen=True)
class ChartView:
    patient_id: str
    window: DateRange | None
    notes: tuple[HighlightedNote, ...] = field(default=())

    @property
    def note_count(self) -> int:
        return len(self.notes)


def chart_view(
    notes: Sequence[ClinicalNote],
    dictionary: TermDictionary,
    window: DateRange | None = None,
) -> ChartView:
    """Notes filtered to the window and sorted ascending by (date, note_id),
    each carrying its highlight spans."""
    patient_ids = {n.patient_id for n in notes}
    if len(patient_ids) > 1:
        raise ValueError(f"chart_view expects one patient, got {sorted(patient_ids)}")
    selected = [
        n for n in notes if window is None or window.contains(n.date)
    ]
    selected.sort(key=lambda n: (n.date, n.note_id))
    highlighted = tuple(
        HighlightedNote(note=n, spans=tuple(scan_note(n, dictionary)))
        for n in selected
    )
    patient_id = next(iter(patient_ids)) if patient_ids else ""
    return ChartView(patient_id=patient_id, window=window, notes=highlighted)
