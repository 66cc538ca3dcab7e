"""Minimal HTTP client for the discovery service (stdlib only)."""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from typing import Any
from urllib.parse import urlencode

from .deaddrop import AccessRequest
from .ni import NiUri, normalise_digest
from .sanitiser import SanitisedEvent


class ServiceError(RuntimeError):
    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class DiscoveryClient:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, method: str, path: str, body: bytes | None = None) -> tuple[int, Any]:
        req = urllib.request.Request(self.base_url + path, data=body, method=method)
        if body is not None:
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status, json.loads(resp.read() or b"null")
        except urllib.error.HTTPError as exc:
            try:
                message = json.loads(exc.read()).get("error", exc.reason)
            except (ValueError, AttributeError):
                message = str(exc.reason)
            raise ServiceError(exc.code, message) from None

    def post_event(self, e: SanitisedEvent | dict) -> tuple[int, str]:
        doc = e.to_dict() if isinstance(e, SanitisedEvent) else e
        status, payload = self._call("POST", "/events", json.dumps(doc).encode("utf-8"))
        return status, payload["eventId"]

    def query_by_hash(self, h: NiUri | str) -> list[SanitisedEvent]:
        digest = h.digest_hex if isinstance(h, NiUri) else normalise_digest(h)
        _, payload = self._call("GET", "/events?" + urlencode({"hash": digest}))
        return [SanitisedEvent.from_dict(d) for d in payload]

    def post_request(self, r: AccessRequest) -> tuple[int, str]:
        status, payload = self._call("POST", "/dead_drop", r.to_json(indent=None).encode("utf-8"))
        return status, payload["requestId"]

    def poll_requests(self, h: str) -> list[AccessRequest]:
        _, payload = self._call("GET", "/dead_drop?" + urlencode({"hash": normalise_digest(h)}))
        return [AccessRequest.from_dict(d) for d in payload]

    def expire_sweep(self) -> int:
        _, payload = self._call("DELETE", "/dead_drop")
        return payload["removed"]
