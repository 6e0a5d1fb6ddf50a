"""Drive the annotation-collection service with a scripted worker.

Starts the HTTP service in a thread, leases tasks, submits a bad explanation
(rejected server-side with rule reasons), then a good one, and finally flags
an accepted annotation back into the queue.
"""

import json
import tempfile
import threading
import urllib.error
import urllib.request
from pathlib import Path

from explainqa import Example
from explainqa.service import AnnotationService, make_server

examples = [
    Example(id=f"d{i}",
            question=f"People enjoy doing what on warm sunny days {i}?",
            choices=("go outside", "hide", "sleep"), answer_index=0)
    for i in range(3)
]

store = Path(tempfile.mkdtemp()) / "store.jsonl"
service = AnnotationService(examples, store)
httpd = make_server(service)
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{httpd.server_address[1]}"
print(f"service on {base}, store at {store}\n")


def post(task_id, payload):
    req = urllib.request.Request(
        f"{base}/api/tasks/{task_id}?session=demo",
        data=json.dumps(payload).encode(), method="POST")
    try:
        with urllib.request.urlopen(req) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


with urllib.request.urlopen(f"{base}/api/tasks/next?session=demo") as r:
    task = json.loads(r.read())
print(f"leased task {task['task_id']}: {task['question']}")

status, body = post(task["task_id"], {"explanation": "outside",
                                      "selected": [[0, 6]]})
print(f"\nbad submission -> HTTP {status}")
for rule in body["report"]["rules"]:
    mark = "ok" if rule["passed"] else "FAIL"
    print(f"  {rule['rule_id']} [{mark:4}] {rule['reason']}")

status, body = post(task["task_id"], {
    "explanation": "warm weather makes outdoor activities pleasant",
    "selected": [[0, 12]]})
print(f"\ngood submission -> HTTP {status}, "
      f"overall={body['report']['overall']}")

with urllib.request.urlopen(f"{base}/api/progress") as r:
    print(f"progress: {json.loads(r.read())}")

n = service.flag_for_reannotation(lambda ann: True)
print(f"\nflagged {n} annotation(s) for re-annotation")
print(f"progress: {service.progress()}")

httpd.shutdown()
httpd.server_close()
