/**
 * Drives the real annotation service over HTTP: spawns the Python backend,
 * submits through the same client the browser uses, and checks that
 * accepted annotations land in the store and read back through the
 * backend's own loader with the exact highlighted substrings.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { addSelection, selectedText, type Span } from "../src/spans.js";

const LAUNCHER = `
import json, sys, threading
from explainqa.corpus import Example
from explainqa.service import AnnotationService, make_server

examples = [
    Example(id=f"ui{i}",
            question=f"People enjoy doing what on warm sunny days {i}?",
            choices=("go outside", "hide", "sleep"), answer_index=0)
    for i in range(2)
]
service = AnnotationService(examples, sys.argv[1])
server = make_server(service, 0)
print(server.server_address[1], flush=True)
server.serve_forever()
`;

let proc: ChildProcess;
let base: string;
let store: string;

beforeAll(async () => {
  store = join(mkdtempSync(join(tmpdir(), "annotate-")), "store.jsonl");
  proc = spawn("python3", ["-c", LAUNCHER, store]);
  base = await new Promise<string>((resolve, reject) => {
    proc.stdout!.once("data", (d) =>
      resolve(`http://127.0.0.1:${String(d).trim()}`),
    );
    proc.once("error", reject);
    setTimeout(() => reject(new Error("service did not start")), 10_000);
  });
}, 15_000);

afterAll(() => {
  proc.kill();
});

describe("against the live service", () => {
  it("full annotate loop: reject, accept, store round-trip", async () => {
    const api = new ApiClient(base, "it-worker");
    const task = await api.nextTask();
    expect(task).not.toBeNull();
    const question = task!.question;

    // draft that passes the client prechecks but fails the server's
    // substring rule
    let spans: Span[] = [];
    const start = question.indexOf("warm sunny days");
    spans = addSelection(question, spans, start + 2, start + 12);
    expect(selectedText(question, spans)).toBe("warm sunny days");

    const rejected = await api.submit(
      task!.task_id,
      "People enjoy doing what",
      spans,
    );
    expect(rejected.kind).toBe("rejected");
    if (rejected.kind === "rejected") {
      const failed = rejected.report.rules.filter((r) => !r.passed);
      expect(failed.map((r) => r.rule_id)).toContain("R3");
    }

    const accepted = await api.submit(
      task!.task_id,
      "warm weather makes outdoor activities pleasant",
      spans,
    );
    expect(accepted.kind).toBe("accepted");

    const progress = await api.progress();
    expect(progress.accepted).toBe(1);

    // the stored record round-trips through the backend's own loader and
    // reproduces the exact substrings the annotator saw highlighted
    const readBack = spawnSync("python3", [
      "-c",
      `
import json, sys
from explainqa.corpus import Example, load_annotations
ann = load_annotations(sys.argv[1])[sys.argv[2]]
ex = Example(id=sys.argv[2], question=sys.argv[3],
             choices=("go outside", "hide", "sleep"), answer_index=0)
print(json.dumps({"explanation": ann.open_ended,
                  "selected_text": ann.selected_text(ex),
                  "spans": list(ann.selected_spans)}))
`,
      store,
      task!.task_id,
      question,
    ]);
    expect(readBack.status).toBe(0);
    const record = JSON.parse(String(readBack.stdout));
    expect(record.explanation).toBe(
      "warm weather makes outdoor activities pleasant",
    );
    expect(record.selected_text).toBe(selectedText(question, spans));
    expect(record.spans).toEqual(spans);
  }, 20_000);

  it("second session leases a different task", async () => {
    const api = new ApiClient(base, "other-worker");
    const task = await api.nextTask();
    expect(task).not.toBeNull();
    expect(task!.task_id).not.toBe("ui0");
  });
});
