"""Term matching, negation windows, patient classification, and chart views."""

from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartval.highlighter import (
    ClinicalNote,
    DateRange,
    TermDictionary,
    chart_view,
    classify_patient,
    scan_note,
)

DICT = TermDictionary(
    [
        ("C001", "suicide attempt"),
        ("C002", "suicidal ideation"),
        ("C003", "SI"),
    ]
)


def note(text: str, day: date = date(2020, 3, 1), note_id: str = "n1") -> ClinicalNote:
    return ClinicalNote(note_id=note_id, patient_id="p1", date=day, text=text)


# --- dictionary ---------------------------------------------------------------


def test_dictionary_deduplicates_case_folded_pairs():
    d = TermDictionary([("C1", "foo"), ("C1", "FOO"), ("C1", "foo "), ("C2", "foo")])
    assert len(d) == 2


def test_dictionary_rejects_empty_terms():
    with pytest.raises(ValueError):
        TermDictionary([("C1", "   ")])


def test_dictionary_from_csv(tmp_path):
    path = tmp_path / "terms.csv"
    path.write_text("concept_id,term\nC1,suicide attempt\nC2,overdose\n")
    d = TermDictionary.from_csv(path)
    assert d.entries == (("C1", "suicide attempt"), ("C2", "overdose"))


def test_dictionary_from_csv_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,word\nC1,x\n")
    with pytest.raises(ValueError):
        TermDictionary.from_csv(path)


# --- matching -----------------------------------------------------------------


def test_match_is_case_insensitive_and_token_bounded():
    spans = scan_note(note("History of SUICIDE ATTEMPT noted."), DICT)
    assert len(spans) == 1
    assert spans[0].concept_id == "C001"
    assert not spans[0].negated


def test_no_match_inside_larger_token():
    # "SI" must not fire inside "basic" or "SIgn"
    spans = scan_note(note("basic SIgnal review"), DICT)
    assert spans == []


def test_span_offsets_recover_surface_text():
    text = "Admitted after suicide attempt."
    spans = scan_note(note(text), DICT)
    assert len(spans) == 1
    assert text[spans[0].start : spans[0].end].casefold() == "suicide attempt"


def test_overlapping_terms_both_reported():
    d = TermDictionary([("A", "suicide"), ("B", "suicide attempt")])
    spans = scan_note(note("prior suicide attempt"), d)
    assert {(s.concept_id, s.start, s.end) for s in spans} == {
        ("A", 6, 13),
        ("B", 6, 21),
    }


# --- negation -----------------------------------------------------------------


def test_denies_negates_following_term():
    spans = scan_note(note("patient denies suicidal ideation"), DICT)
    assert len(spans) == 1
    assert spans[0].negated


def test_sentence_boundary_resets_negation():
    spans = scan_note(note("suicide attempt last night. No SI today."), DICT)
    assert len(spans) == 2
    by_concept = {s.concept_id: s.negated for s in spans}
    assert by_concept == {"C001": False, "C003": True}


def test_multiword_trigger():
    spans = scan_note(note("There was no evidence of suicide attempt today."), DICT)
    assert spans[0].negated


def test_trigger_outside_six_token_window_does_not_negate():
    text = "denies one two three four five six suicide attempt"
    spans = scan_note(note(text), DICT)
    assert len(spans) == 1
    assert not spans[0].negated


def test_trigger_at_window_edge_negates():
    text = "denies one two three four five suicide attempt"
    spans = scan_note(note(text), DICT)
    assert spans[0].negated


def test_trigger_in_previous_sentence_ignored():
    spans = scan_note(note("Patient denies pain. Suicide attempt last week."), DICT)
    assert len(spans) == 1
    assert not spans[0].negated


def test_newline_is_sentence_boundary():
    spans = scan_note(note("no complaints\nsuicide attempt reported"), DICT)
    assert not spans[0].negated


@settings(max_examples=50, deadline=None)
@given(prefix=st.text(alphabet="abcd ", max_size=30))
def test_inserting_denies_flips_negation(prefix):
    base = prefix + " suicide attempt"
    plain = scan_note(note(base), DICT)
    negated = scan_note(note(prefix + " denies suicide attempt"), DICT)
    target = [s for s in negated if s.concept_id == "C001"]
    assert target and all(s.negated for s in target)
    assert all(not s.negated for s in plain if s.concept_id == "C001")


@settings(max_examples=60, deadline=None)
@given(text=st.text(alphabet="abc .!?\nsuicidal ideation attempt SI", max_size=120))
def test_span_invariants(text):
    for span in scan_note(note(text), DICT):
        assert 0 <= span.start < span.end <= len(text)
        matched = text[span.start : span.end].casefold()
        assert matched in {t.casefold() for _, t in DICT.entries}


# --- classification -----------------------------------------------------------


def test_all_negated_is_ehr_negative():
    notes = [note("patient denies suicidal ideation")]
    status, first = classify_patient(notes, DICT)
    assert status is False and first is None


def test_negated_counts_when_configured():
    notes = [note("patient denies suicidal ideation")]
    status, first = classify_patient(notes, DICT, count_negated_mentions=True)
    assert status is True and first == date(2020, 3, 1)


def test_first_match_date_is_earliest_qualifying_note():
    notes = [
        note("suicide attempt", day=date(2020, 4, 10), note_id="later"),
        note("suicide attempt", day=date(2020, 2, 10), note_id="earlier"),
        note("denies suicide attempt", day=date(2020, 1, 5), note_id="negated"),
    ]
    status, first = classify_patient(notes, DICT)
    assert status is True
    assert first == date(2020, 2, 10)


def test_followup_range_excludes_outside_notes():
    notes = [note("suicide attempt", day=date(2019, 1, 1))]
    followup = DateRange(date(2020, 1, 1), date(2020, 12, 31))
    status, first = classify_patient(notes, DICT, followup=followup)
    assert status is False and first is None


def test_no_mentions_is_ehr_negative():
    status, first = classify_patient([note("routine visit")], DICT)
    assert status is False and first is None


# --- chart view ---------------------------------------------------------------


def test_chart_view_orders_by_date_then_note_id():
    notes = [
        note("b", day=date(2020, 3, 2), note_id="n2"),
        note("a", day=date(2020, 3, 1), note_id="n9"),
        note("c", day=date(2020, 3, 1), note_id="n0"),
    ]
    view = chart_view(notes, DICT)
    assert [hn.note.note_id for hn in view.notes] == ["n0", "n9", "n2"]


def test_chart_view_window_filter():
    notes = [
        note("suicide attempt", day=date(2020, 3, 1), note_id="in"),
        note("suicide attempt", day=date(2021, 1, 1), note_id="out"),
    ]
    window = DateRange(date(2020, 1, 1), date(2020, 12, 31))
    view = chart_view(notes, DICT, window=window)
    assert view.note_count == 1
    assert view.notes[0].note.note_id == "in"
    assert len(view.notes[0].spans) == 1


def test_chart_view_rejects_mixed_patients():
    notes = [
        ClinicalNote("n1", "p1", date(2020, 1, 1), "x"),
        ClinicalNote("n2", "p2", date(2020, 1, 1), "y"),
    ]
    with pytest.raises(ValueError):
        chart_view(notes, DICT)


def test_date_range_validation():
    with pytest.raises(ValueError):
        DateRange(date(2020, 2, 1), date(2020, 1, 1))
