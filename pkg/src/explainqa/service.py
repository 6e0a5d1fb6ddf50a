"""Annotation-collection HTTP service.

Dispenses tasks under expiring per-session leases, applies the quality gates
server-side on submit, and persists accepted annotations to an append-only
JSONL store that the rest of the pipeline can consume directly. The store is
revalidated on load, so it only ever contains annotations that pass every
rule.

API (JSON bodies, UTF-8; session identified by a `session` query parameter):
  GET  /api/tasks/next?session=S   -> 200 task | 204 when exhausted
  POST /api/tasks/<id>?session=S   -> 200 report | 422 report | 404 | 409
  GET  /api/progress               -> {"pending": n, "accepted": n, "flagged": n}
Static assets, when configured, are served under /.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlparse, parse_qs

from .corpus import Annotation, Example, SpanError, annotation_record, load_annotations
from .quality import ValidationReport, validate_annotation

log = logging.getLogger(__name__)

PENDING = "pending"
ACCEPTED = "accepted"
FLAGGED = "flagged"


@dataclass
class AnnotationTask:
    example: Example
    status: str = PENDING


class AnnotationService:
    """Task queue, lease table, and persistent store behind the HTTP API."""

    def __init__(
        self,
        examples: list[Example],
        store_path: str | Path,
        lease_seconds: float = 15 * 60,
        rejected_path: str | Path | None = None,
        clock=time.monotonic,
    ):
        self._lock = threading.Lock()
        self._clock = clock
        self.lease_seconds = lease_seconds
        self.store_path = Path(store_path)
        self.rejected_path = (
            Path(rejected_path) if rejected_path is not None
            else self.store_path.with_suffix(".rejected.jsonl")
        )
        self.tasks: dict[str, AnnotationTask] = {
            ex.id: AnnotationTask(ex) for ex in examples
        }
        self.accepted: dict[str, Annotation] = {}
        # lease: task_id -> (session, expiry)
        self._leases: dict[str, tuple[str, float]] = {}
        self._load_store()

    def _load_store(self) -> None:
        if not self.store_path.exists():
            return
        for ex_id, ann in load_annotations(self.store_path).items():
            task = self.tasks.get(ex_id)
            if task is None:
                log.warning("stored annotation %r has no task, dropped", ex_id)
                continue
            report = validate_annotation(task.example, ann)
            if report.overall:
                self.accepted[ex_id] = ann
                task.status = ACCEPTED
            else:
                log.warning("stored annotation %r fails revalidation, dropped",
                            ex_id)

    def _lease_holder(self, task_id: str) -> str | None:
        lease = self._leases.get(task_id)
        if lease is None:
            return None
        session, expiry = lease
        if expiry <= self._clock():
            del self._leases[task_id]
            return None
        return session

    def next_task(self, session: str) -> AnnotationTask | None:
        """An available task for this session, renewing an existing lease."""
        with self._lock:
            now = self._clock()
            for task_id, (holder, expiry) in self._leases.items():
                if holder == session and expiry > now:
                    self._leases[task_id] = (session, now + self.lease_seconds)
                    return self.tasks[task_id]
            for task_id, task in self.tasks.items():
                if task.status == ACCEPTED:
                    continue
                if self._lease_holder(task_id) is not None:
                    continue
                self._leases[task_id] = (session, now + self.lease_seconds)
                return task
            return None

    def submit(
        self, task_id: str, annotation: Annotation, session: str
    ) -> tuple[int, ValidationReport | None]:
        """Validate and, on pass, persist one submission.

        Returns (http status, report or None for 404/409).
        """
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None:
                return 404, None
            holder = self._lease_holder(task_id)
            if holder != session:
                return 409, None
            try:
                annotation.check_spans(task.example)
            except SpanError:
                return 422, validate_annotation(
                    task.example,
                    Annotation(example_id=task_id, open_ended=annotation.open_ended,
                               selected_spans=()),
                )
            report = validate_annotation(task.example, annotation)
            if not report.overall:
                return 422, report
            self._append_record(self.store_path, annotation_record(annotation))
            self.accepted[task_id] = annotation
            task.status = ACCEPTED
            del self._leases[task_id]
            return 200, report

    def flag_for_reannotation(self, predicate) -> int:
        """Move matching accepted annotations aside; their tasks re-open."""
        with self._lock:
            flagged = [ex_id for ex_id, ann in self.accepted.items()
                       if predicate(ann)]
            for ex_id in flagged:
                ann = self.accepted.pop(ex_id)
                self._append_record(self.rejected_path, annotation_record(ann))
                self.tasks[ex_id].status = FLAGGED
            self._rewrite_store()
            return len(flagged)

    def progress(self) -> dict[str, int]:
        with self._lock:
            counts = {PENDING: 0, ACCEPTED: 0, FLAGGED: 0}
            for task in self.tasks.values():
                counts[task.status] += 1
            return counts

    @staticmethod
    def _append_record(path: Path, line: str) -> None:
        # one full line per write; flush+fsync so a crash never leaves a
        # readable partial record
        with open(path, "a", encoding="utf-8", newline="\n") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _rewrite_store(self) -> None:
        tmp = self.store_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            for ann in self.accepted.values():
                f.write(annotation_record(ann) + "\n")
        tmp.replace(self.store_path)


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService
    assets_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict | None) -> None:
        body = b"" if payload is None else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        if body:
            self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _session(self, parsed) -> str:
        qs = parse_qs(parsed.query)
        if "session" in qs:
            return qs["session"][0]
        return self.headers.get("X-Session", self.address_string())

    def do_GET(self):
        parsed = urlparse(self.path)
        if parsed.path == "/api/tasks/next":
            task = self.service.next_task(self._session(parsed))
            if task is None:
                self._send_json(204, None)
                return
            ex = task.example
            self._send_json(200, {
                "task_id": ex.id,
                "question": ex.question,
                "choices": list(ex.choices),
                "answer": ex.answer,
            })
            return
        if parsed.path == "/api/progress":
            self._send_json(200, self.service.progress())
            return
        if self.assets_dir is not None:
            self._serve_asset(parsed.path)
            return
        self._send_json(404, {"error": "not found"})

    def do_POST(self):
        parsed = urlparse(self.path)
        if not parsed.path.startswith("/api/tasks/"):
            self._send_json(404, {"error": "not found"})
            return
        task_id = parsed.path[len("/api/tasks/"):]
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            annotation = Annotation(
                example_id=task_id,
                open_ended=body["explanation"],
                selected_spans=tuple(
                    (int(s), int(e)) for s, e in body.get("selected", [])),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, SpanError):
            self._send_json(422, {"error": "malformed submission"})
            return
        status, report = self.service.submit(
            task_id, annotation, self._session(parsed))
        if report is None:
            self._send_json(status, {"error": "task unavailable"})
        else:
            self._send_json(status, {"report": report.to_dict()})

    def _serve_asset(self, path: str) -> None:
        rel = path.lstrip("/") or "index.html"
        target = (self.assets_dir / rel).resolve()
        if not str(target).startswith(str(self.assets_dir.resolve())) \
                or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        data = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def make_server(
    service: AnnotationService, port: int = 0,
    assets_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {
        "service": service,
        "assets_dir": Path(assets_dir) if assets_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(
    examples: list[Example], store_path: str | Path, port: int,
    lease_minutes: float = 15.0, assets_dir: str | Path | None = None,
) -> None:
    """Run the service until interrupted."""
    service = AnnotationService(
        examples, store_path, lease_seconds=lease_minutes * 60)
    server = make_server(service, port, assets_dir)
    log.info("annotation service on port %d", server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
