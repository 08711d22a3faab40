import type { StateSnapshot, VocabPayload } from "./types.js";

export interface FormState {
  failure: boolean;
  semantic: string;
  instructionId: number | null;
}

export const EMPTY_FORM: FormState = { failure: false, semantic: "", instructionId: null };

/** A failure verdict needs a semantic description and a chosen instruction;
 * a correct verdict is complete on its own. */
export function formComplete(form: FormState): boolean {
  if (!form.failure) return true;
  return form.semantic.trim().length > 0 && form.instructionId !== null;
}

/** Submission window. Gated sessions accept interventions only while paused
 * at a decision; paced sessions accept them any time a decision is shown and
 * the period deadline has not passed (the server closes the window by
 * advancing, which clears at_decision). */
export function windowOpen(snap: StateSnapshot): boolean {
  if (!snap.at_decision || snap.decision === null) return false;
  if (snap.session.gated) return snap.session.status === "paused";
  return snap.session.status === "running" || snap.session.status === "paused";
}

export function canSubmit(snap: StateSnapshot, form: FormState, vocab: VocabPayload): boolean {
  if (!windowOpen(snap)) return false;
  if (!formComplete(form)) return false;
  if (form.failure) {
    // only ids that came back from the vocabulary endpoint may be sent
    if (!vocab.entries.some((e) => e.id === form.instructionId)) return false;
  }
  return true;
}

export interface InterventionPayload {
  failure: boolean;
  semantic: string;
  instruction_id: number | null;
}

export function buildPayload(form: FormState): InterventionPayload {
  if (!form.failure) {
    return { failure: false, semantic: form.semantic.trim(), instruction_id: null };
  }
  return { failure: true, semantic: form.semantic.trim(), instruction_id: form.instructionId };
}
