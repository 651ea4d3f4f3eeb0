"""HTTP service: annotation task handout, agreement, and stats export.

A thin JSON layer over the annotation store and the persisted pipeline
artifacts. Label submissions go through the store's own lock (single-writer
contract) and are flushed to a CSV next to the other run artifacts, so a
restarted server picks up where annotation left off.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import __version__
from .annotation import AnnotationStore, LabelClass
from .config import PipelineConfig
from .corpus import PostRecord, read_matched_jsonl
from .errors import ConfigError, ContractError, DomainError, ToxipipeError

LABELS_FILENAME = "annotation_labels.csv"


def _char_span(normalized: str, byte_offset: int, surface: str) -> tuple[int, int]:
    """Convert a UTF-8 byte offset into character start/end for display."""
    start = len(normalized.encode("utf-8")[:byte_offset].decode("utf-8"))
    end = min(start + len(surface), len(normalized))
    return start, end


class GatewayApp:
    """Request-independent state shared by all handler threads."""

    def __init__(self, config: PipelineConfig, *, static_dir: str | Path | None = None):
        self.config = config
        self.static_dir = Path(static_dir) if static_dir else None
        guideline = ""
        gp = config.paths.get("guideline")
        if gp is not None and gp.is_file():
            guideline = gp.read_text(encoding="utf-8")
        sc = config.server
        self.store = AnnotationStore(
            target_annotations=sc.target_annotations,
            lease_seconds=sc.lease_seconds,
            open_enrollment=sc.open_enrollment,
            guideline=guideline,
        )
        self.tasks_meta: dict[str, dict] = {}
        self._persist_lock = threading.Lock()
        self.labels_path = config.out_dir / LABELS_FILENAME

        matched_path = config.out_dir / "matched.jsonl"
        if matched_path.is_file():
            self.load_tasks(matched_path)
        if self.labels_path.is_file():
            self.store.load_labels_csv(self.labels_path)

    def load_tasks(self, matched_path: str | Path) -> int:
        matched = list(read_matched_jsonl(matched_path))
        n = self.store.load_tasks(mp.post for mp in matched)
        for mp in matched:
            highlights = []
            for m in mp.matched_terms:
                start, end = _char_span(mp.normalized_text, m.offset, m.surface)
                highlights.append(
                    {"seed": m.seed, "surface": m.surface, "start": start, "end": end}
                )
            self.tasks_meta[mp.post.post_id] = {
                "text": mp.normalized_text,
                "source": mp.post.source.value,
                "region": mp.post.region,
                "highlights": highlights,
            }
        return n

    def persist_labels(self) -> None:
        with self._persist_lock:
            self.config.out_dir.mkdir(parents=True, exist_ok=True)
            self.store.export_labels_csv(self.labels_path)

    def task_payload(self, post: PostRecord) -> dict:
        meta = self.tasks_meta.get(post.post_id, {})
        progress = self.store.progress()
        return {
            "post_id": post.post_id,
            "text": meta.get("text", post.text),
            "source": meta.get("source", post.source.value),
            "region": meta.get("region"),
            "highlights": meta.get("highlights", []),
            "queue": {
                "tasks": progress["tasks"],
                "fully_labeled": progress["fully_labeled"],
            },
        }

    def agreement_payload(self) -> dict:
        try:
            report = self.store.agreement()
        except DomainError as exc:
            return {"average": None, "pairs": [], "excluded_pairs": [],
                    "matrix": {}, "note": str(exc)}
        doc = report.to_json()
        matrix: dict[str, dict[str, float]] = {}
        for entry in doc["pairs"]:
            a, b = entry["annotators"]
            matrix.setdefault(a, {})[b] = entry["kappa"]
            matrix.setdefault(b, {})[a] = entry["kappa"]
        for name in matrix:
            matrix[name][name] = 1.0
        doc["matrix"] = {k: dict(sorted(v.items())) for k, v in sorted(matrix.items())}
        return doc

    def stats_payload(self, region: str | None = None) -> dict:
        path = self.config.out_dir / "export" / "stats.json"
        if not path.is_file():
            raise DomainError("no completed pipeline run; stats export is missing")
        stats = json.loads(path.read_text(encoding="utf-8"))
        if region is not None:
            rows = stats["region_rates"]["rows"]
            stats["region_rates"]["rows"] = {
                k: v for k, v in rows.items() if k == region
            }
        return stats

    def cohort_payload(self) -> dict:
        path = self.config.out_dir / "cohort_snapshot.json"
        if not path.is_file():
            raise DomainError("no completed pipeline run; cohort snapshot is missing")
        snapshot = json.loads(path.read_text(encoding="utf-8"))
        by_status: dict[str, int] = {}
        scores = []
        for m in snapshot.get("members", []):
            by_status[m["status"]] = by_status.get(m["status"], 0) + 1
            if m.get("bot_score") is not None:
                scores.append(m["bot_score"])
        timelines = snapshot.get("timelines", [])
        return {
            "members": len(snapshot.get("members", [])),
            "by_status": dict(sorted(by_status.items())),
            "timelines": len(timelines),
            "timeline_posts": sum(len(t.get("posts", [])) for t in timelines),
            "bot_scored": len(scores),
        }


class _ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


class GatewayHandler(BaseHTTPRequestHandler):
    app: GatewayApp  # set by make_server
    protocol_version = "HTTP/1.1"
    server_version = f"toxipipe/{__version__}"

    # -- plumbing

    def log_message(self, fmt, *args):  # quiet by default; tests read responses
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, doc: dict) -> None:
        body = json.dumps(doc, sort_keys=True).encode("utf-8")
        self._send(status, body, "application/json; charset=utf-8")

    def _send_error_doc(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": {"code": code, "message": message}})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise _ApiError(400, "bad_request", "body must be a JSON object")
        if not isinstance(doc, dict):
            raise _ApiError(400, "bad_request", "body must be a JSON object")
        return doc

    def _require(self, doc: dict, key: str) -> str:
        value = doc.get(key)
        if not isinstance(value, str) or not value:
            raise _ApiError(400, "bad_request", f"missing or empty field {key!r}")
        return value

    # -- dispatch

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _dispatch(self, method: str) -> None:
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        try:
            handler = self._route(method, url.path)
            if handler is None:
                raise _ApiError(404, "not_found", f"no route for {method} {url.path}")
            handler(query)
        except _ApiError as exc:
            self._send_error_doc(exc.status, exc.code, str(exc))
        except DomainError as exc:
            self._send_error_doc(409, "no_data", str(exc))
        except ToxipipeError as exc:
            self._send_error_doc(400, "bad_request", str(exc))
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._send_error_doc(500, "internal", f"{type(exc).__name__}: {exc}")

    def _route(self, method: str, path: str):
        routes = {
            ("GET", "/api/health"): self._health,
            ("GET", "/api/annotation/next"): self._annotation_next,
            ("POST", "/api/annotation/label"): self._annotation_label,
            ("GET", "/api/annotation/agreement"): self._annotation_agreement,
            ("GET", "/api/annotation/guideline"): self._annotation_guideline,
            ("GET", "/api/annotation/export"): self._annotation_export,
            ("GET", "/api/annotation/progress"): self._annotation_progress,
            ("GET", "/api/stats/aggregate"): self._stats_aggregate,
            ("GET", "/api/cohort/summary"): self._cohort_summary,
        }
        found = routes.get((method, path))
        if found is not None:
            return found
        if method == "GET" and not path.startswith("/api/"):
            return lambda query, p=path: self._static(p)
        return None

    # -- endpoints

    def _health(self, query):
        self._send_json(200, {"status": "ok", "version": __version__})

    def _annotation_next(self, query):
        annotator = query.get("annotator", "")
        if not annotator:
            raise _ApiError(400, "bad_request", "query parameter 'annotator' is required")
        try:
            post = self.app.store.next_task(annotator)
        except ContractError as exc:
            raise _ApiError(403, "unknown_annotator", str(exc))
        if post is None:
            self._send_json(200, {"done": True})
        else:
            self._send_json(200, self.app.task_payload(post))

    def _annotation_label(self, query):
        doc = self._read_body()
        post_id = self._require(doc, "post_id")
        annotator_id = self._require(doc, "annotator_id")
        label_raw = self._require(doc, "label")
        try:
            label = LabelClass(label_raw)
        except ValueError:
            raise _ApiError(400, "bad_label",
                            f"unknown label {label_raw!r}; expected one of "
                            + ", ".join(c.value for c in LabelClass))
        try:
            record = self.app.store.submit_label(post_id, annotator_id, label)
        except KeyError:
            raise _ApiError(404, "unknown_post", f"no task with post_id {post_id!r}")
        except ContractError as exc:
            raise _ApiError(403, "unknown_annotator", str(exc))
        self.app.persist_labels()
        self._send_json(200, {
            "stored": True,
            "post_id": record.post_id,
            "annotator_id": record.annotator_id,
            "label": record.label.value,
        })

    def _annotation_agreement(self, query):
        self._send_json(200, self.app.agreement_payload())

    def _annotation_guideline(self, query):
        body = self.app.store.guideline.encode("utf-8")
        self._send(200, body, "text/plain; charset=utf-8")

    def _annotation_export(self, query):
        records = [
            {
                "post_id": r.post_id,
                "annotator_id": r.annotator_id,
                "label": r.label.value,
            }
            for r in self.app.store.records()
        ]
        self._send_json(200, {"records": records})

    def _annotation_progress(self, query):
        self._send_json(200, self.app.store.progress())

    def _stats_aggregate(self, query):
        fmt = query.get("format", "json")
        region = query.get("region")
        if fmt == "json":
            self._send_json(200, self.app.stats_payload(region))
        elif fmt == "csv":
            from .pipeline import render_stats_csv

            body = render_stats_csv(self.app.stats_payload(), region)
            self._send(200, body.encode("utf-8"), "text/csv; charset=utf-8")
        else:
            raise _ApiError(400, "bad_request", f"unknown format {fmt!r}")

    def _cohort_summary(self, query):
        self._send_json(200, self.app.cohort_payload())

    def _static(self, path: str) -> None:
        root = self.app.static_dir
        if root is None:
            raise _ApiError(404, "not_found", "no static directory configured")
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root.resolve() not in target.parents and target != root.resolve():
            raise _ApiError(404, "not_found", "path escapes static root")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise _ApiError(404, "not_found", f"no such file: {rel}")
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), ctype)


def make_server(config: PipelineConfig, *, static_dir: str | Path | None = None,
                host: str | None = None, port: int | None = None) -> ThreadingHTTPServer:
    """Bind the service; ``port=0`` picks an ephemeral port (tests)."""
    app = GatewayApp(config, static_dir=static_dir)
    handler = type("BoundHandler", (GatewayHandler,), {"app": app})
    bind = (host or config.server.host,
            config.server.port if port is None else port)
    try:
        server = ThreadingHTTPServer(bind, handler)
    except OSError as exc:
        raise ConfigError(f"cannot bind {bind[0]}:{bind[1]}: {exc}") from None
    server.app = app  # type: ignore[attr-defined]
    return server


def serve_forever(server: ThreadingHTTPServer) -> None:
    """Run until interrupted; completes in-flight requests on shutdown."""
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
