"""HTTP facade for the discovery store and the dead drop.

Endpoints::

    POST   /events              sanitised event JSON -> 201/200 {"eventId": ...}
    GET    /events?hash=<hex>   -> JSON array of sanitised events
    POST   /dead_drop           access request JSON  -> 201/200 {"requestId": ...}
    GET    /dead_drop?hash=<hex> -> JSON array of unexpired access requests
    DELETE /dead_drop           expire sweep         -> {"removed": n}

The two stores share a process but nothing else. No response names a
submitter, and request logging is disabled so pollers leave no trace.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable
from urllib.parse import parse_qs, urlsplit

from .deaddrop import AccessRequest, DeadDrop, RequestError
from .ni import DIGEST_PATTERN
from .sanitiser import SanitisedEvent, SanitisedEventError
from .store import DiscoveryStore, StoreConflictError

MIN_BODY = 64 * 1024


@dataclass(frozen=True)
class ServiceConfig:
    bind: str = "127.0.0.1:8080"
    journal: str | None = None
    sweep_interval: float = 60.0
    max_body: int = 1024 * 1024
    rate_limit: int = 600  # POST /events per client per window; 0 disables
    rate_window: float = 60.0

    def __post_init__(self) -> None:
        if self.sweep_interval <= 0:
            raise ValueError("sweep interval must be > 0")
        if self.max_body < MIN_BODY:
            raise ValueError(f"max body size must be >= {MIN_BODY} bytes")
        self.address  # validates bind

    @property
    def address(self) -> tuple[str, int]:
        host, sep, port = self.bind.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"bind must be host:port, got {self.bind!r}")
        return host or "0.0.0.0", int(port)


class _FixedWindow:
    """Per-client counters that are discarded wholesale each window."""

    def __init__(self, limit: int, window: float):
        self.limit, self.window = limit, window
        self._start = time.monotonic()
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def allow(self, client: str) -> bool:
        if self.limit <= 0:
            return True
        with self._lock:
            now = time.monotonic()
            if now - self._start >= self.window:
                self._start, self._counts = now, {}
            self._counts[client] = self._counts.get(client, 0) + 1
            return self._counts[client] <= self.limit


def _dump(payload: Any) -> bytes:
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


class DiscoveryHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: ServiceConfig, clock: Callable[[], datetime] | None = None):
        self.config = config
        self.store = DiscoveryStore(config.journal)
        self.dead_drop = DeadDrop(clock)
        self.limiter = _FixedWindow(config.rate_limit, config.rate_window)
        self._stop = threading.Event()
        self._sweeper = threading.Thread(target=self._sweep_loop, daemon=True)
        super().__init__(config.address, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def _sweep_loop(self) -> None:
        while not self._stop.wait(self.config.sweep_interval):
            self.dead_drop.expire_sweep()

    def serve_forever(self, poll_interval: float = 0.5) -> None:
        if not self._sweeper.is_alive():
            self._sweeper.start()
        super().serve_forever(poll_interval)

    def server_close(self) -> None:
        self._stop.set()
        super().server_close()


class _Handler(BaseHTTPRequestHandler):
    server: DiscoveryHTTPServer
    server_version = "discovery"
    sys_version = ""
    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args: Any) -> None:
        pass

    def _send(self, status: int, payload: Any) -> None:
        body = payload if isinstance(payload, bytes) else _dump(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send(status, {"error": message})

    def _body(self) -> bytes | None:
        length = self.headers.get("Content-Length")
        if length is None or not length.isdigit():
            self._error(HTTPStatus.LENGTH_REQUIRED, "Content-Length required")
            return None
        if int(length) > self.server.config.max_body:
            self.close_connection = True
            remaining = int(length)
            # drain modest overruns so the client reads the 413 instead of a reset
            if remaining <= 16 * self.server.config.max_body:
                while remaining > 0:
                    chunk = self.rfile.read(min(remaining, 65536))
                    if not chunk:
                        break
                    remaining -= len(chunk)
            self._error(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, "body too large")
            return None
        return self.rfile.read(int(length))

    def _digest_param(self) -> str | None:
        values = parse_qs(urlsplit(self.path).query).get("hash", [])
        digest = values[0].strip().lower() if len(values) == 1 else ""
        if not DIGEST_PATTERN.fullmatch(digest):
            self._error(HTTPStatus.BAD_REQUEST, "hash must be 64 hex characters")
            return None
        return digest

    def _route(self) -> str:
        return urlsplit(self.path).path.rstrip("/") or "/"

    def do_POST(self) -> None:
        route = self._route()
        if route not in ("/events", "/dead_drop"):
            return self._error(HTTPStatus.NOT_FOUND, "no such endpoint")
        if route == "/events" and not self.server.limiter.allow(self.client_address[0]):
            return self._error(HTTPStatus.TOO_MANY_REQUESTS, "rate limit exceeded")
        body = self._body()
        if body is None:
            return
        if route == "/events":
            try:
                event = SanitisedEvent.from_json(body)
                event_id, created = self.server.store.put_with_status(event)
            except SanitisedEventError as exc:
                return self._error(HTTPStatus.BAD_REQUEST, str(exc))
            except StoreConflictError as exc:
                return self._error(HTTPStatus.CONFLICT, str(exc))
            status = HTTPStatus.CREATED if created else HTTPStatus.OK
            return self._send(status, {"eventId": str(event_id)})
        try:
            request = AccessRequest.from_json(body)
            rid, created = self.server.dead_drop.post_request_with_status(request)
        except RequestError as exc:
            return self._error(HTTPStatus.BAD_REQUEST, str(exc))
        self._send(HTTPStatus.CREATED if created else HTTPStatus.OK, {"requestId": rid})

    def do_GET(self) -> None:
        route = self._route()
        if route not in ("/events", "/dead_drop"):
            return self._error(HTTPStatus.NOT_FOUND, "no such endpoint")
        digest = self._digest_param()
        if digest is None:
            return
        if route == "/events":
            found = [e.to_dict() for e in self.server.store.query_by_hash(digest)]
        else:
            found = [r.to_dict() for _, r in self.server.dead_drop.poll_requests(digest)]
        self._send(HTTPStatus.OK, found)

    def do_DELETE(self) -> None:
        if self._route() != "/dead_drop":
            return self._error(HTTPStatus.NOT_FOUND, "no such endpoint")
        self._send(HTTPStatus.OK, {"removed": self.server.dead_drop.expire_sweep()})


def make_server(config: ServiceConfig, clock: Callable[[], datetime] | None = None) -> DiscoveryHTTPServer:
    return DiscoveryHTTPServer(config, clock)


def serve(config: ServiceConfig) -> None:
    server = make_server(config)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
