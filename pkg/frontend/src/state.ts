/**
 * UI state machine for the annotation workflow.
 *
 * Pure transitions over an immutable state object; the DOM layer renders
 * whatever this module says. Guarantees encoded here:
 *   - submit is enabled only when the client precheck passes
 *   - a rejected or failed submit never loses the draft or the highlights
 *   - selections always lie within the displayed question
 */

import type { Task, SubmitOutcome, RuleResult, Progress } from "./api.js";
import { precheck } from "./precheck.js";
import { addSelection, removeAt, type Span } from "./spans.js";

export type Phase = "loading" | "annotating" | "submitting" | "done";

export interface UiState {
  phase: Phase;
  task: Task | null;
  draft: string;
  spans: Span[];
  /** Failed-rule messages from the last server rejection, for inline display. */
  serverErrors: RuleResult[];
  /** Transport-level message, when the last submit never reached the server. */
  networkError: string | null;
  progress: Progress | null;
}

export function initialState(): UiState {
  return {
    phase: "loading",
    task: null,
    draft: "",
    spans: [],
    serverErrors: [],
    networkError: null,
    progress: null,
  };
}

export function canSubmit(state: UiState): boolean {
  return (
    state.phase === "annotating" &&
    state.task !== null &&
    precheck(state.draft, state.spans).ok
  );
}

export function precheckReasons(state: UiState): string[] {
  return precheck(state.draft, state.spans).reasons;
}

export function taskLoaded(state: UiState, task: Task | null): UiState {
  if (task === null) {
    return { ...state, phase: "done", task: null };
  }
  return {
    ...state,
    phase: "annotating",
    task,
    draft: "",
    spans: [],
    serverErrors: [],
    networkError: null,
  };
}

export function draftChanged(state: UiState, draft: string): UiState {
  return { ...state, draft };
}

export function highlighted(state: UiState, start: number, end: number): UiState {
  if (state.task === null) return state;
  const q = state.task.question;
  // selections outside the question element are ignored upstream; clamp as a
  // second line of defense so spans can never exceed the question
  return { ...state, spans: addSelection(q, state.spans, start, end) };
}

export function highlightRemoved(state: UiState, pos: number): UiState {
  return { ...state, spans: removeAt(state.spans, pos) };
}

export function highlightsCleared(state: UiState): UiState {
  return { ...state, spans: [] };
}

export function submitStarted(state: UiState): UiState {
  return { ...state, phase: "submitting", networkError: null };
}

export function submitFinished(state: UiState, outcome: SubmitOutcome): UiState {
  switch (outcome.kind) {
    case "accepted":
      // caller follows up with taskLoaded(next)
      return { ...state, phase: "loading", serverErrors: [], networkError: null };
    case "rejected":
      return {
        ...state,
        phase: "annotating",
        serverErrors: outcome.report.rules.filter((r) => !r.passed),
      };
    case "network-error":
      return { ...state, phase: "annotating", networkError: outcome.message };
    case "unavailable":
      return {
        ...state,
        phase: "annotating",
        networkError: `task unavailable (HTTP ${outcome.status})`,
      };
  }
}

export function progressUpdated(state: UiState, progress: Progress): UiState {
  return { ...state, progress };
}
