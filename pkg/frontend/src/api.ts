/**
 * Typed client for the annotation service HTTP API.
 *
 * The fetch function is injectable so tests can run against a fake or a
 * locally spawned service.
 */

import type { Span } from "./spans.js";

export interface Task {
  task_id: string;
  question: string;
  choices: string[];
  answer: string | null;
}

export interface RuleResult {
  rule_id: string;
  passed: boolean;
  reason: string;
}

export interface ValidationReport {
  overall: boolean;
  rules: RuleResult[];
}

export interface Progress {
  pending: number;
  accepted: number;
  flagged: number;
}

export type SubmitOutcome =
  | { kind: "accepted"; report: ValidationReport }
  | { kind: "rejected"; report: ValidationReport }
  | { kind: "unavailable"; status: number }
  | { kind: "network-error"; message: string };

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string,
    private session: string,
    private fetchFn: FetchLike = fetch,
  ) {}

  /** Next leased task, or null when the queue is exhausted. */
  async nextTask(): Promise<Task | null> {
    const resp = await this.fetchFn(
      `${this.base}/api/tasks/next?session=${encodeURIComponent(this.session)}`,
    );
    if (resp.status === 204) return null;
    if (!resp.ok) throw new Error(`next-task failed: HTTP ${resp.status}`);
    return (await resp.json()) as Task;
  }

  async progress(): Promise<Progress> {
    const resp = await this.fetchFn(`${this.base}/api/progress`);
    if (!resp.ok) throw new Error(`progress failed: HTTP ${resp.status}`);
    return (await resp.json()) as Progress;
  }

  async submit(
    taskId: string,
    explanation: string,
    selected: Span[],
  ): Promise<SubmitOutcome> {
    let resp: Response;
    try {
      resp = await this.fetchFn(
        `${this.base}/api/tasks/${encodeURIComponent(taskId)}` +
          `?session=${encodeURIComponent(this.session)}`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ explanation, selected }),
        },
      );
    } catch (err) {
      return { kind: "network-error", message: String(err) };
    }
    if (resp.status === 200 || resp.status === 422) {
      const body = (await resp.json()) as { report?: ValidationReport };
      if (body.report) {
        return resp.status === 200
          ? { kind: "accepted", report: body.report }
          : { kind: "rejected", report: body.report };
      }
      return { kind: "unavailable", status: resp.status };
    }
    return { kind: "unavailable", status: resp.status };
  }
}
