from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from anontrace.events import parse_event_xml
from anontrace.sanitiser import SanitisedEvent, SanitiserConfig
from anontrace.service import ServiceConfig, make_server

FIXTURES = Path(__file__).parent / "fixtures"
DEAD_DROP_URL = "https://discovery.epcat.de/dead_drop"

# ten-digit serial; see the comment in fixtures/shipping_event.xml
SSCC = "urn:epc:id:sscc:4023333.0222222222"
SSCC_DIGEST = "e5284a01b67b7756c0f51d10e7c74c6f277fea0e1f08ebe8f27fae25b04e695b"
PO = "urn:epc:id:gdti:0614141.00002.PO-123"
# plain hash; the receiving fixture had this digest truncated and is corrected here
PO_DIGEST = "2428dd1fddb2811d950320b732dda8f4be7312e02be14c2dfb8da9969085da38"
SOURCE = "urn:epc:id:pgln:4023333.00000"
# party digests are salted: sha256(party + PO); unsalted sha256(SOURCE) is f7e37337...
SOURCE_SALTED = "63ba4ead93f79fb67e68a277e85247988fb410ac0c2f00b87f802d75031b52f9"
DESTINATION = "urn:epc:id:pgln:0614141.00000"
DESTINATION_SALTED = "8d2cdc63d2e3d173174c9167ac4a857dfc0a0abba7cee54ef0e4b9a21156021b"

# deterministic replacement ids (the CBV 2.0 hash algorithm is not reproducible)
SHIPPING_EVENT_ID = "ni:///sha-256;af5d89c87dd6198e1641c2582f82875e6cf8e9039a5de253aec0bac1ccb2f3c8?ver=CBV2.0"
RECEIVING_EVENT_ID = "ni:///sha-256;b59dfe277a9b36d07f3ac9afc5048ad1c988363cd051be4e5bf99a0b96b37d59?ver=CBV2.0"


def load_fixture_event(name: str):
    return parse_event_xml((FIXTURES / name).read_bytes())[0]


def load_fixture_json(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


@pytest.fixture
def shipping_event():
    return load_fixture_event("shipping_event.xml")


@pytest.fixture
def receiving_event():
    return load_fixture_event("receiving_event.xml")


@pytest.fixture
def cfg():
    return SanitiserConfig(DEAD_DROP_URL)


@pytest.fixture
def published_pair():
    return [SanitisedEvent.from_dict(load_fixture_json(n))
            for n in ("shipping_sanitised.json", "receiving_sanitised.json")]


class FakeClock:
    def __init__(self, moment: datetime):
        self.moment = moment

    def __call__(self) -> datetime:
        return self.moment


@pytest.fixture
def clock():
    return FakeClock(datetime(2021, 7, 30, 12, 0, 0, tzinfo=timezone.utc))


def start_service(journal=None, clock=None, **kw):
    config = ServiceConfig(bind="127.0.0.1:0", journal=str(journal) if journal else None, **kw)
    server = make_server(config, clock)
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
    thread.start()
    return server, thread


def stop_service(server, thread) -> None:
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


@pytest.fixture
def service(tmp_path):
    server, thread = start_service(tmp_path / "journal.ndjson")
    yield server
    stop_service(server, thread)


class CaptureServer(ThreadingHTTPServer):
    """Records every raw request line, header block and body it receives."""

    daemon_threads = True

    def __init__(self, reply_status: int = 200, reply_body: bytes = b"[]"):
        self.captured: list[bytes] = []
        self.reply_status, self.reply_body = reply_status, reply_body
        super().__init__(("127.0.0.1", 0), _CaptureHandler)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"


class _CaptureHandler(BaseHTTPRequestHandler):
    server: CaptureServer

    def log_message(self, *args) -> None:
        pass

    def _handle(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        self.server.captured.append(self.requestline.encode() + b"\n" + bytes(self.headers) + body)
        self.send_response(self.server.reply_status)
        self.send_header("Content-Length", str(len(self.server.reply_body)))
        self.end_headers()
        self.wfile.write(self.server.reply_body)

    do_GET = do_POST = do_DELETE = _handle


@pytest.fixture
def capture_server():
    server = CaptureServer()
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def sanitise_all(events, cfg=None):
    from anontrace.sanitiser import sanitise
    cfg = cfg or SanitiserConfig(DEAD_DROP_URL)
    return [sanitise(e, cfg) for e in events]
