/** Contract: highlight offsets from the gateway reproduce dictionary
 * terms on every recorded note, and segmentation is lossless. */

import { describe, expect, it } from "vitest";

import charts from "../fixtures/charts.json";
import noHighlights from "../fixtures/chart_no_highlights.json";
import dictionary from "../fixtures/dictionary.json";
import {
  chartViewModel,
  segmentNote,
  spanClass,
  spanSurface,
} from "../src/highlight.js";
import type { ChartPayload, DictionaryEntry } from "../src/types.js";

const CHARTS = charts as ChartPayload[];
const TERMS = new Set(
  (dictionary as DictionaryEntry[]).map((entry) => entry.term.toLowerCase()),
);

describe("highlight offset fidelity", () => {
  it("every recorded span covers a dictionary term, case-folded", () => {
    let checked = 0;
    for (const chart of CHARTS) {
      for (const note of chart.notes) {
        for (const span of note.spans) {
          expect(TERMS).toContain(spanSurface(note.text, span).toLowerCase());
          checked += 1;
        }
      }
    }
    expect(checked).toBeGreaterThan(0);
  });

  it("segments reassemble each note text exactly", () => {
    for (const chart of CHARTS) {
      for (const note of chart.notes) {
        const segments = segmentNote(note.text, note.spans);
        expect(segments.map((s) => s.text).join("")).toBe(note.text);
      }
    }
  });

  it("negated spans get a distinct style", () => {
    const spans = CHARTS.flatMap((c) => c.notes.flatMap((n) => n.spans));
    const negated = spans.filter((s) => s.negated);
    const plain = spans.filter((s) => !s.negated);
    expect(negated.length).toBeGreaterThan(0);
    expect(plain.length).toBeGreaterThan(0);
    expect(new Set(negated.map(spanClass)).size).toBe(1);
    expect(spanClass(negated[0]!)).not.toBe(spanClass(plain[0]!));
  });

  it("view model keeps notes in chronological order", () => {
    for (const chart of CHARTS) {
      const vm = chartViewModel(chart);
      const dates = vm.notes.map((n) => n.date);
      expect(dates).toEqual([...dates].sort());
    }
  });

  it("highlights-off payload renders the same text with no marks", () => {
    const off = noHighlights as ChartPayload;
    const on = CHARTS.find((c) => c.patient_id === off.patient_id)!;
    expect(off.notes.map((n) => n.text)).toEqual(on.notes.map((n) => n.text));
    for (const note of off.notes) {
      const segments = segmentNote(note.text, note.spans);
      expect(segments.every((s) => s.span === null)).toBe(true);
    }
  });

  it("rejects out-of-bounds and overlapping spans", () => {
    expect(() =>
      segmentNote("short", [
        { start: 2, end: 99, concept_id: "C1", negated: false },
      ]),
    ).toThrow(/out of bounds/);
    expect(() =>
      segmentNote("overlapping spans here", [
        { start: 0, end: 11, concept_id: "C1", negated: false },
        { start: 5, end: 17, concept_id: "C1", negated: false },
      ]),
    ).toThrow(/overlaps/);
  });

  it("rejects spans splitting a surrogate pair", () => {
    const text = "pain score \u{1F600} noted";
    expect(() =>
      segmentNote(text, [
        { start: 11, end: 12, concept_id: "C1", negated: false },
      ]),
    ).toThrow(/surrogate/);
  });
});
