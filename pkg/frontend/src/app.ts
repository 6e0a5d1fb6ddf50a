/**
 * DOM wiring: renders UiState and forwards browser events to the state
 * machine. All logic lives in state.ts / spans.ts / precheck.ts, which are
 * covered by tests; this file stays a thin adapter.
 */

import { ApiClient } from "./api.js";
import {
  canSubmit, draftChanged, highlighted, highlightRemoved,
  highlightsCleared, initialState, precheckReasons, progressUpdated,
  submitFinished, submitStarted, taskLoaded, type UiState,
} from "./state.js";
import { selectedText } from "./spans.js";

const session =
  window.localStorage.getItem("annotate-session") ??
  `s-${Math.random().toString(36).slice(2, 10)}`;
window.localStorage.setItem("annotate-session", session);

const api = new ApiClient("", session);
let state: UiState = initialState();

const el = (id: string) => document.getElementById(id)!;

function render(): void {
  const question = el("question");
  const task = state.task;
  el("screen-task").hidden = state.phase === "done";
  el("screen-done").hidden = state.phase !== "done";

  if (state.progress) {
    const p = state.progress;
    el("progress").textContent =
      `${p.accepted} accepted · ${p.pending} pending · ${p.flagged} flagged`;
  }
  if (state.phase === "done") return;
  if (!task) return;

  // question with <mark> wrapping each highlighted span
  question.textContent = "";
  let cursor = 0;
  for (const [s, e] of state.spans) {
    question.append(task.question.slice(cursor, s));
    const mark = document.createElement("mark");
    mark.textContent = task.question.slice(s, e);
    question.append(mark);
    cursor = e;
  }
  question.append(task.question.slice(cursor));

  const choices = el("choices");
  choices.textContent = "";
  for (const choice of task.choices) {
    const li = document.createElement("li");
    li.textContent = choice + (choice === task.answer ? "  ✓ gold" : "");
    choices.append(li);
  }

  el("highlighted").textContent =
    state.spans.length > 0
      ? `highlighted: "${selectedText(task.question, state.spans)}"`
      : "nothing highlighted yet";

  const submit = el("submit") as HTMLButtonElement;
  submit.disabled = !canSubmit(state) || state.phase === "submitting";
  el("precheck").textContent = canSubmit(state)
    ? ""
    : precheckReasons(state).join("; ");

  const errors = el("server-errors");
  errors.textContent = "";
  for (const rule of state.serverErrors) {
    const li = document.createElement("li");
    li.textContent = `${rule.rule_id}: ${rule.reason}`;
    errors.append(li);
  }
  el("network-error").textContent = state.networkError ?? "";
}

function update(next: UiState): void {
  state = next;
  render();
}

async function refreshProgress(): Promise<void> {
  update(progressUpdated(state, await api.progress()));
}

async function loadNext(): Promise<void> {
  update(taskLoaded(state, await api.nextTask()));
  await refreshProgress();
}

function questionOffsets(): [number, number] | null {
  const sel = window.getSelection();
  if (!sel || sel.rangeCount === 0 || sel.isCollapsed) return null;
  const range = sel.getRangeAt(0);
  const question = el("question");
  if (!question.contains(range.commonAncestorContainer)) return null;
  // walk the text nodes to convert DOM offsets to question-string offsets
  const measure = (node: Node, offset: number): number => {
    let total = 0;
    const walker = document.createTreeWalker(question, NodeFilter.SHOW_TEXT);
    for (let t = walker.nextNode(); t; t = walker.nextNode()) {
      if (t === node) return total + offset;
      total += t.textContent!.length;
    }
    return total;
  };
  return [
    measure(range.startContainer, range.startOffset),
    measure(range.endContainer, range.endOffset),
  ];
}

function wire(): void {
  el("question").addEventListener("mouseup", () => {
    const offsets = questionOffsets();
    if (offsets) {
      update(highlighted(state, offsets[0], offsets[1]));
      window.getSelection()?.removeAllRanges();
    }
  });
  el("question").addEventListener("dblclick", (ev) => {
    const offsets = questionOffsets();
    if (!offsets) {
      // double-click on an existing mark clears it
      const target = ev.target as HTMLElement;
      if (target.tagName === "MARK" && state.task) {
        const pos = state.task.question.indexOf(target.textContent ?? "");
        if (pos >= 0) update(highlightRemoved(state, pos));
      }
    }
  });
  el("clear").addEventListener("click", () => update(highlightsCleared(state)));
  el("draft").addEventListener("input", (ev) => {
    update(draftChanged(state, (ev.target as HTMLTextAreaElement).value));
  });
  el("submit").addEventListener("click", async () => {
    if (!canSubmit(state) || !state.task) return;
    const task = state.task;
    update(submitStarted(state));
    const outcome = await api.submit(task.task_id, state.draft, state.spans);
    update(submitFinished(state, outcome));
    if (outcome.kind === "accepted") {
      (el("draft") as HTMLTextAreaElement).value = "";
      await loadNext();
    }
  });
}

wire();
void loadNext();
