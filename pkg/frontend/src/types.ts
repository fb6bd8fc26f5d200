/** Gateway payload shapes, mirrored from the HTTP API responses. */

export interface HighlightSpan {
  start: number;
  end: number;
  concept_id: string;
  negated: boolean;
}

export interface NotePayload {
  note_id: string;
  date: string;
  text: string;
  spans: HighlightSpan[];
}

export interface ChartPayload {
  patient_id: string;
  stratum: string;
  review_window: { start: string; end: string } | null;
  highlights_enabled: boolean;
  note_count: number;
  notes: NotePayload[];
}

export interface TrajectoryPoint {
  wave_index: number;
  s: number;
  k: number;
  point_estimate: number;
  lower: number;
  upper: number;
  verdict: string;
}

export interface StopStatus {
  verdict: string;
  wave_index: number;
  reason: string;
}

export interface SessionPayload {
  session_id: string;
  phase: string;
  successes: number;
  trials: number;
  reviewed: number;
  pool_total: number;
  savings: number;
  stop: StopStatus | null;
  config: Record<string, string>;
}

export interface AgreementPayload {
  n_double: number;
  observed_agreement?: number;
  expected_agreement?: number;
  kappa: number | null;
  passed: boolean | null;
}

export interface AssignmentPayload {
  patient_id: string;
  wave_index: number;
  stratum: string;
  review_window: { start: string; end: string };
  highlights_enabled: boolean;
}

export interface AnnotationRequest {
  patient_id: string;
  label: string;
  wave_index: number;
  annotator_id?: string;
  reason_code?: string;
  started_at?: string;
  submitted_at?: string;
  highlights_enabled?: boolean;
  timing_only?: boolean;
}

export interface DictionaryEntry {
  concept_id: string;
  term: string;
}
