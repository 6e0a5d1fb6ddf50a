/**
 * Character-span utilities over the rendered question text.
 *
 * Spans are half-open [start, end) ranges, the same convention the backend
 * stores. Word boundaries are maximal runs of non-whitespace, matching the
 * backend's whitespace-split normalization, so snapped spans stay meaningful
 * when the server re-reads them.
 */

export type Span = [number, number];

function isSpace(ch: string): boolean {
  return /\s/.test(ch);
}

/**
 * Snap a raw selection outward to word boundaries.
 *
 * Returns null when the selection covers no word characters (e.g. pure
 * whitespace or an empty range).
 */
export function snapToWords(text: string, start: number, end: number): Span | null {
  start = Math.max(0, Math.min(start, text.length));
  end = Math.max(0, Math.min(end, text.length));
  if (start > end) [start, end] = [end, start];
  // shrink to the first/last word character inside the selection
  while (start < end && isSpace(text[start])) start++;
  while (end > start && isSpace(text[end - 1])) end--;
  if (start >= end) return null;
  // grow outward to the enclosing word runs
  while (start > 0 && !isSpace(text[start - 1])) start--;
  while (end < text.length && !isSpace(text[end])) end++;
  return [start, end];
}

/** Merge overlapping or touching spans into a sorted, disjoint list. */
export function mergeSpans(spans: Span[]): Span[] {
  const sorted = [...spans].sort((a, b) => a[0] - b[0]);
  const out: Span[] = [];
  for (const [s, e] of sorted) {
    const last = out[out.length - 1];
    if (last && s <= last[1]) {
      last[1] = Math.max(last[1], e);
    } else {
      out.push([s, e]);
    }
  }
  return out;
}

/** Add one raw selection to an existing span set (snap, then merge). */
export function addSelection(
  text: string,
  spans: Span[],
  start: number,
  end: number,
): Span[] {
  const snapped = snapToWords(text, start, end);
  if (snapped === null) return spans;
  return mergeSpans([...spans, snapped]);
}

/** Remove any span that intersects the clicked position. */
export function removeAt(spans: Span[], pos: number): Span[] {
  return spans.filter(([s, e]) => pos < s || pos >= e);
}

/**
 * The exact substrings the spans cover, joined by single spaces — the same
 * rendering the backend applies, so offsets round-trip to what the
 * annotator saw.
 */
export function selectedText(text: string, spans: Span[]): string {
  return spans.map(([s, e]) => text.slice(s, e)).join(" ");
}
