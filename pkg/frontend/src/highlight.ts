/** Chart rendering: split note text into plain and highlighted segments
 * from server-supplied span offsets.  The client never re-runs term
 * matching — offsets are applied verbatim and only validated. */

import type { ChartPayload, HighlightSpan, NotePayload } from "./types.js";

export interface Segment {
  text: string;
  span: HighlightSpan | null;
}

export class SpanError extends Error {}

function isLowSurrogate(code: number | undefined): boolean {
  return code !== undefined && code >= 0xdc00 && code <= 0xdfff;
}

/** Validate one span against its note text: in bounds, non-empty, and
 * never splitting a surrogate pair. */
export function checkSpan(text: string, span: HighlightSpan): void {
  if (span.start < 0 || span.end > text.length || span.start >= span.end) {
    throw new SpanError(
      `span ${span.start}..${span.end} out of bounds for ${text.length}-char note`,
    );
  }
  if (
    isLowSurrogate(text.charCodeAt(span.start)) ||
    isLowSurrogate(text.charCodeAt(span.end))
  ) {
    throw new SpanError(
      `span ${span.start}..${span.end} splits a surrogate pair`,
    );
  }
}

/** The exact text a span covers. */
export function spanSurface(text: string, span: HighlightSpan): string {
  return text.slice(span.start, span.end);
}

/** CSS class for a highlight mark; negated mentions are styled distinctly. */
export function spanClass(span: HighlightSpan): string {
  return span.negated ? "highlight highlight--negated" : "highlight";
}

/** Split note text into ordered segments covering every character once. */
export function segmentNote(text: string, spans: HighlightSpan[]): Segment[] {
  const ordered = [...spans].sort((a, b) => a.start - b.start);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const span of ordered) {
    checkSpan(text, span);
    if (span.start < cursor) {
      throw new SpanError(
        `span ${span.start}..${span.end} overlaps the previous span`,
      );
    }
    if (span.start > cursor) {
      segments.push({ text: text.slice(cursor, span.start), span: null });
    }
    segments.push({ text: spanSurface(text, span), span });
    cursor = span.end;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), span: null });
  }
  return segments;
}

export interface NoteView {
  noteId: string;
  date: string;
  segments: Segment[];
}

export interface ChartViewModel {
  patientId: string;
  stratum: string;
  reviewWindow: { start: string; end: string } | null;
  highlightsEnabled: boolean;
  notes: NoteView[];
}

function assertChronological(notes: NotePayload[]): void {
  for (let i = 1; i < notes.length; i += 1) {
    const prev = notes[i - 1]!;
    const here = notes[i]!;
    if (here.date < prev.date) {
      throw new SpanError(
        `notes out of order: ${prev.note_id} (${prev.date}) before ${here.note_id} (${here.date})`,
      );
    }
  }
}

/** Build the renderable view of one chart payload. */
export function chartViewModel(chart: ChartPayload): ChartViewModel {
  assertChronological(chart.notes);
  return {
    patientId: chart.patient_id,
    stratum: chart.stratum,
    reviewWindow: chart.review_window,
    highlightsEnabled: chart.highlights_enabled,
    notes: chart.notes.map((note) => ({
      noteId: note.note_id,
      date: note.date,
      segments: segmentNote(note.text, note.spans),
    })),
  };
}
