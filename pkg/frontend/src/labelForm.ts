/** Label form state and client-side validation.  The form never mutates
 * anything locally — a valid form becomes a POST /annotations body. */

import type { AnnotationRequest } from "./types.js";

export const LABELS = ["positive", "negative", "unsure", "unannotatable"] as const;
export type Label = (typeof LABELS)[number];

/** Labels whose selection requires free-text justification. */
export const REASON_REQUIRED: readonly Label[] = ["positive", "unsure"];

export interface LabelFormState {
  label: Label | null;
  reasonCode: string;
}

export interface ValidationResult {
  valid: boolean;
  errors: string[];
}

export function validateLabelForm(state: LabelFormState): ValidationResult {
  const errors: string[] = [];
  if (state.label === null) {
    errors.push("choose a label");
  } else if (!LABELS.includes(state.label)) {
    errors.push(`unknown label ${String(state.label)}`);
  } else if (
    REASON_REQUIRED.includes(state.label) &&
    state.reasonCode.trim() === ""
  ) {
    errors.push(`label '${state.label}' requires a reason`);
  }
  return { valid: errors.length === 0, errors };
}

/** Submit stays disabled until the form validates. */
export function canSubmit(state: LabelFormState): boolean {
  return validateLabelForm(state).valid;
}

/** Client-side duration in minutes; null when timestamps are missing,
 * an error when the clock pair is inverted. */
export function durationMinutes(
  startedAt: string,
  submittedAt: string,
): number | null {
  if (!startedAt || !submittedAt) return null;
  const start = Date.parse(startedAt);
  const end = Date.parse(submittedAt);
  if (Number.isNaN(start) || Number.isNaN(end)) return null;
  const minutes = (end - start) / 60_000;
  if (minutes < 0) {
    throw new RangeError(`negative duration: ${startedAt} .. ${submittedAt}`);
  }
  return minutes;
}

/** Assemble the POST body for a validated form. */
export function toAnnotationRequest(
  state: LabelFormState,
  assignment: { patient_id: string; wave_index: number; highlights_enabled: boolean },
  startedAt: string,
  submittedAt: string,
): AnnotationRequest {
  const check = validateLabelForm(state);
  if (!check.valid) {
    throw new Error(`form invalid: ${check.errors.join("; ")}`);
  }
  return {
    patient_id: assignment.patient_id,
    wave_index: assignment.wave_index,
    label: state.label as Label,
    reason_code: state.reasonCode,
    started_at: startedAt,
    submitted_at: submittedAt,
    highlights_enabled: assignment.highlights_enabled,
  };
}
