/**
 * Client-side prechecks: the two cheap gates enforced before submit is
 * enabled. Only the highlight (R1) and minimum-length (R2) rules run in the
 * browser; the subtler substring and template rules stay server-side so the
 * server remains the single source of truth.
 */

import type { Span } from "./spans.js";

export interface PrecheckResult {
  ok: boolean;
  reasons: string[];
}

/** Word count under the backend normalization (whitespace split, punctuation stripped). */
export function wordCount(text: string): number {
  return text
    .toLowerCase()
    .split(/\s+/)
    .map((w) => w.replace(/^[!-/:-@[-`{-~]+|[!-/:-@[-`{-~]+$/g, ""))
    .filter((w) => w.length > 0).length;
}

export const MIN_WORDS = 4;

export function precheck(draft: string, spans: Span[]): PrecheckResult {
  const reasons: string[] = [];
  if (spans.length === 0) {
    reasons.push("highlight at least one word in the question");
  }
  if (wordCount(draft) < MIN_WORDS) {
    reasons.push(`explanation needs at least ${MIN_WORDS} words`);
  }
  return { ok: reasons.length === 0, reasons };
}
