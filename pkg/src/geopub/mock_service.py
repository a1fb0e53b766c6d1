"""In-memory reference implementation of the deposition protocol.

The service is a plain state machine behind :meth:`MockService.handle_request`
and can be driven three ways: directly, through the ``mock://`` in-process
transport, or over real HTTP via :class:`MockServer` (also installed as the
``geopub-mock`` command). All three share the same handler, so wire behaviour
is identical.

Faults can be injected per endpoint to exercise client retry behaviour.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field, asdict
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Mapping
from urllib.parse import parse_qs, urlsplit

import click

from . import repo_protocol
from .errors import BindError

logger = logging.getLogger(__name__)

MB = 1024 * 1024
GB = 1024 * MB


class ConnectionDropped(ConnectionError):
    """Raised by a Drop fault; transports surface it as a network failure."""


class FaultKind(Enum):
    DROP = "drop"
    HTTP500 = "http500"
    SLOW_START = "slow_start"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    delay_ms: int = 0

    @classmethod
    def drop(cls) -> "Fault":
        return cls(FaultKind.DROP)

    @classmethod
    def http500(cls) -> "Fault":
        return cls(FaultKind.HTTP500)

    @classmethod
    def slow_start(cls, delay_ms: int) -> "Fault":
        return cls(FaultKind.SLOW_START, delay_ms=delay_ms)


#: Endpoint matcher: an operation name ("create", "upload", "publish",
#: "make_public", "search", "get", "collaborators", "tags"), "*" for all, or
#: a predicate over (method, path).
EndpointMatcher = str | Callable[[str, str], bool]


@dataclass
class ServiceConfig:
    """Limits and capabilities of one mock backend."""

    per_file_limit: int = 250 * MB
    private_quota: int = 1 * GB
    collaborator_limit: int = 5
    can_search: bool = True
    doi_prefix: str = "10.5072/geopub"
    #: None accepts any non-empty token; a string demands that exact token.
    required_token: str | None = None

    def __post_init__(self):
        for name in ("per_file_limit", "private_quota", "collaborator_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def figshare_like(cls, **overrides) -> "ServiceConfig":
        return cls(can_search=True, **overrides)

    @classmethod
    def zenodo_like(cls, **overrides) -> "ServiceConfig":
        return cls(can_search=False, **overrides)


@dataclass
class _StoredFile:
    file_id: int
    name: str
    size: int
    sha256: str


@dataclass
class _DepositionRecord:
    id: int
    doi: str
    state: str = "draft"
    doi_active: bool = False
    title: str = ""
    description: str = ""
    tags: list[str] = field(default_factory=list)
    authors: list[dict] = field(default_factory=list)
    private_intent: bool = False
    files: list[_StoredFile] = field(default_factory=list)
    collaborators: list[str] = field(default_factory=list)

    def stored_bytes(self) -> int:
        return sum(f.size for f in self.files)

    def public_document(self) -> dict:
        return {
            "id": self.id,
            "doi": self.doi,
            "doi_active": self.doi_active,
            "state": self.state,
            "title": self.title,
            "description": self.description,
            "tags": list(self.tags),
            "authors": list(self.authors),
            "files": [asdict(f) for f in self.files],
            "collaborators": list(self.collaborators),
        }


_ID_PATH = re.compile(r"^/api/v1/depositions/(\d+)(?:/(.+))?$")

_SUBRESOURCE_OPS = {
    "files": "upload",
    "actions/publish": "publish",
    "actions/make_public": "make_public",
    "collaborators": "collaborators",
    "tags": "tags",
}


class MockService:
    """One backend instance: depositions, quotas, faults, request counter.

    All state mutations are serialized through a single lock; the handler is
    safe to call from any number of threads.
    """

    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        self.request_count = 0
        self._lock = threading.Lock()
        self._depositions: dict[int, _DepositionRecord] = {}
        self._next_id = 1
        self._faults: list[tuple[Fault, EndpointMatcher]] = []

    # -- wiring

    def register_inprocess(self, name: str) -> str:
        """Expose this service at ``mock://name``; returns that base URL."""
        return repo_protocol.register_inprocess_handler(name, self.handle_request)

    # -- test and operator conveniences

    def deposition_count(self) -> int:
        with self._lock:
            return len(self._depositions)

    def deposition_record(self, deposition_id: int) -> dict:
        """Read-only copy of one deposition's server-side state."""
        with self._lock:
            record = self._depositions.get(deposition_id)
            if record is None:
                raise KeyError(deposition_id)
            return record.public_document()

    def inject_fault(self, fault: Fault, on: EndpointMatcher = "*") -> None:
        """Make matching requests exhibit ``fault`` until faults are cleared."""
        with self._lock:
            self._faults.append((fault, on))

    def clear_faults(self) -> None:
        with self._lock:
            self._faults.clear()

    # -- persistence (optional snapshot for the standalone server)

    def save_snapshot(self, path: str | Path) -> None:
        with self._lock:
            state = {
                "next_id": self._next_id,
                "depositions": [
                    {**asdict(record)} for record in self._depositions.values()
                ],
            }
        Path(path).write_text(json.dumps(state, indent=2), encoding="utf-8")

    def load_snapshot(self, path: str | Path) -> None:
        state = json.loads(Path(path).read_text(encoding="utf-8"))
        with self._lock:
            self._next_id = state["next_id"]
            self._depositions = {}
            for raw in state["depositions"]:
                files = [_StoredFile(**f) for f in raw.pop("files")]
                self._depositions[raw["id"]] = _DepositionRecord(**raw, files=files)

    # -- request handling

    def handle_request(
        self, method: str, path: str, headers: Mapping[str, str], body: bytes
    ) -> tuple[int, dict]:
        """Serve one protocol request; returns (status, response document)."""
        parts = urlsplit(path)
        op, deposition_id = self._route(method, parts.path)

        with self._lock:
            self.request_count += 1
            fault = self._matching_fault(op, method, parts.path)

        if fault is not None:
            if fault.kind is FaultKind.SLOW_START:
                time.sleep(fault.delay_ms / 1000.0)
            elif fault.kind is FaultKind.DROP:
                raise ConnectionDropped(f"{method} {path}: dropped by injected fault")
            elif fault.kind is FaultKind.HTTP500:
                return 500, {"error": "internal"}

        if not self._authorized(headers):
            return 401, {"error": "auth"}
        if op is None:
            return 404, {"error": "not_found"}

        with self._lock:
            if op == "create":
                return self._create(body)
            if op == "search":
                return self._search(parse_qs(parts.query))
            record = self._depositions.get(deposition_id)
            if record is None:
                return 404, {"error": "not_found"}
            if op == "get":
                return 200, record.public_document()
            if op == "upload":
                return self._upload(record, headers, body)
            if op == "publish":
                return self._publish(record, body)
            if op == "make_public":
                return self._make_public(record)
            if op == "collaborators":
                return self._add_collaborator(record, body)
            if op == "tags":
                return self._append_tag(record, body)
        return 404, {"error": "not_found"}

    # -- endpoint implementations (caller holds the lock)

    def _create(self, body: bytes) -> tuple[int, dict]:
        document = _json_body(body)
        if document is None:
            return 400, {"error": "validation", "message": "request body is not JSON"}
        title = document.get("title", "")
        if not isinstance(title, str) or not title.strip():
            return 400, {"error": "validation", "message": "title must be non-empty"}
        deposition_id = self._next_id
        self._next_id += 1
        record = _DepositionRecord(
            id=deposition_id,
            doi=f"{self.config.doi_prefix}.{deposition_id}",
            title=title,
            description=str(document.get("description", "")),
            tags=[str(t) for t in document.get("tags", [])],
            authors=[
                {"name": a.get("name", ""), "id": a.get("id")}
                for a in document.get("authors", [])
            ],
            private_intent=bool(document.get("private", False)),
        )
        self._depositions[deposition_id] = record
        return 201, {
            "id": record.id,
            "doi": record.doi,
            "doi_active": False,
            "state": "draft",
        }

    def _upload(
        self, record: _DepositionRecord, headers: Mapping[str, str], body: bytes
    ) -> tuple[int, dict]:
        if record.state != "draft":
            return 400, {"error": "validation", "message": "deposition is not a draft"}
        name = _header(headers, "X-File-Name")
        declared = _header(headers, "X-File-SHA256")
        if not name:
            return 400, {"error": "validation", "message": "X-File-Name header required"}
        if any(f.name == name for f in record.files):
            return 400, {"error": "validation", "message": f"file {name!r} already uploaded"}
        actual = hashlib.sha256(body).hexdigest()
        if declared is None or declared.lower() != actual:
            return 422, {"error": "checksum"}
        size = len(body)
        if size > self.config.per_file_limit:
            return 413, {"error": "quota"}
        if record.private_intent and record.stored_bytes() + size > self.config.private_quota:
            return 413, {"error": "quota"}
        stored = _StoredFile(
            file_id=len(record.files) + 1, name=name, size=size, sha256=actual
        )
        record.files.append(stored)
        return 201, asdict(stored)

    def _publish(self, record: _DepositionRecord, body: bytes) -> tuple[int, dict]:
        if record.state != "draft":
            return 400, {"error": "validation", "message": "deposition is not a draft"}
        if not record.files:
            return 400, {"error": "validation", "message": "cannot publish without files"}
        document = _json_body(body) or {}
        private = bool(document.get("private", False))
        record.state = "private" if private else "public"
        record.doi_active = not private
        return 200, {
            "id": record.id,
            "doi": record.doi,
            "doi_active": record.doi_active,
            "state": record.state,
        }

    def _make_public(self, record: _DepositionRecord) -> tuple[int, dict]:
        if record.state != "private":
            return 400, {"error": "validation", "message": "deposition is not private"}
        record.state = "public"
        record.doi_active = True
        return 200, {
            "id": record.id,
            "doi": record.doi,
            "doi_active": True,
            "state": "public",
        }

    def _search(self, query: dict[str, list[str]]) -> tuple[int, dict]:
        if not self.config.can_search:
            return 501, {"error": "search_not_supported"}
        tags = query.get("tag")
        if not tags:
            return 400, {"error": "validation", "message": "tag query parameter required"}
        tag = tags[0]
        results = [
            {"id": r.id, "doi": r.doi, "title": r.title, "tags": list(r.tags)}
            for r in self._depositions.values()
            # Drafts are not published yet, so they are not findable.
            if r.state != "draft" and tag in r.tags
        ]
        return 200, {"results": results}

    def _add_collaborator(self, record: _DepositionRecord, body: bytes) -> tuple[int, dict]:
        if record.state != "private":
            return 400, {"error": "validation", "message": "deposition is not private"}
        document = _json_body(body)
        name = (document or {}).get("name")
        if not isinstance(name, str) or not name.strip():
            return 400, {"error": "validation", "message": "collaborator name required"}
        if name in record.collaborators:
            return 200, {"count": len(record.collaborators)}
        if len(record.collaborators) >= self.config.collaborator_limit:
            return 413, {"error": "quota"}
        record.collaborators.append(name)
        return 200, {"count": len(record.collaborators)}

    def _append_tag(self, record: _DepositionRecord, body: bytes) -> tuple[int, dict]:
        if record.state != "draft":
            return 400, {"error": "validation", "message": "deposition is not a draft"}
        document = _json_body(body)
        tag = (document or {}).get("tag")
        if not isinstance(tag, str) or not tag.strip():
            return 400, {"error": "validation", "message": "tag must be non-empty"}
        if tag not in record.tags:
            record.tags.append(tag)
        return 200, {"tags": list(record.tags)}

    # -- helpers

    def _route(self, method: str, path: str) -> tuple[str | None, int | None]:
        if path == "/api/v1/depositions":
            if method == "POST":
                return "create", None
            if method == "GET":
                return "search", None
            return None, None
        match = _ID_PATH.match(path)
        if match is None:
            return None, None
        deposition_id = int(match.group(1))
        subresource = match.group(2)
        if subresource is None:
            return ("get", deposition_id) if method == "GET" else (None, None)
        if method != "POST":
            return None, None
        op = _SUBRESOURCE_OPS.get(subresource)
        return (op, deposition_id) if op else (None, None)

    def _matching_fault(self, op: str | None, method: str, path: str) -> Fault | None:
        for fault, matcher in self._faults:
            if callable(matcher):
                if matcher(method, path):
                    return fault
            elif matcher == "*" or matcher == op:
                return fault
        return None

    def _authorized(self, headers: Mapping[str, str]) -> bool:
        value = _header(headers, "Authorization") or ""
        scheme, _, token = value.partition(" ")
        if scheme != "token" or not token.strip():
            return False
        if self.config.required_token is not None:
            return token.strip() == self.config.required_token
        return True


def _header(headers: Mapping[str, str], name: str) -> str | None:
    lowered = name.lower()
    for key, value in headers.items():
        if key.lower() == lowered:
            return value
    return None


def _json_body(body: bytes):
    if not body:
        return None
    try:
        document = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    return document if isinstance(document, dict) else None


# ---------------------------------------------------------------------------
# Standalone HTTP server


class MockServer:
    """Serves a :class:`MockService` over HTTP on a background thread."""

    def __init__(self, service: MockService, host: str = "127.0.0.1", port: int = 0):
        self.service = service
        self._serving = False
        handler = _make_handler(service)
        try:
            self._httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self.host, self.port = self._httpd.server_address[:2]

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._serving = True
        thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        thread.start()
        self._thread = thread

    def serve_forever(self) -> None:
        self._serving = True
        self._httpd.serve_forever()

    def stop(self) -> None:
        # shutdown() blocks forever unless the serve loop was entered.
        if self._serving:
            self._httpd.shutdown()
            self._serving = False
        self._httpd.server_close()


def _make_handler(service: MockService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            try:
                status, document = service.handle_request(
                    self.command, self.path, dict(self.headers.items()), body
                )
            except ConnectionDropped:
                # Close without responding; clients see a dropped connection.
                self.close_connection = True
                return
            payload = json.dumps(document).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        do_GET = _dispatch
        do_POST = _dispatch

        def log_message(self, fmt, *args):
            logger.debug("%s %s", self.address_string(), fmt % args)

    return Handler


@click.command()
@click.option("--port", type=int, default=8472, show_default=True, help="Listen port.")
@click.option(
    "--profile",
    type=click.Choice(["figshare-like", "zenodo-like"]),
    default="figshare-like",
    show_default=True,
    help="Capability profile to emulate.",
)
@click.option(
    "--snapshot",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="State file loaded at startup (if present) and written at shutdown.",
)
def main(port: int, profile: str, snapshot: Path | None) -> None:
    """Run a standalone mock repository service."""
    logging.basicConfig(level=logging.INFO)
    config = (
        ServiceConfig.figshare_like() if profile == "figshare-like" else ServiceConfig.zenodo_like()
    )
    service = MockService(config)
    if snapshot is not None and snapshot.exists():
        service.load_snapshot(snapshot)
        click.echo(f"loaded snapshot from {snapshot}", err=True)
    try:
        server = MockServer(service, port=port)
    except BindError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(1)
    click.echo(f"{profile} mock service listening on {server.base_url}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        if snapshot is not None:
            service.save_snapshot(snapshot)
            click.echo(f"snapshot written to {snapshot}", err=True)


if __name__ == "__main__":
    main()
