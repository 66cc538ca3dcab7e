"""A requester leaves a signed access request; the owner answers it.

Everything runs in-process: a discovery service on a random port, and a
tiny inbox server standing in for the requester's endpoint.
"""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, HTTPServer

from anontrace.client import DiscoveryClient
from anontrace.deaddrop import (
    AccessRequest,
    AuthDecision,
    AuthPolicy,
    Recipient,
    evaluate_auth,
    generate_private_key,
    request_id,
    respond,
    sign_request,
)
from anontrace.ni import ni_hash
from anontrace.service import ServiceConfig, make_server

EPC = "urn:epc:id:sscc:4023333.0222222222"
inbox: list[bytes] = []


class Inbox(BaseHTTPRequestHandler):
    def do_POST(self):
        inbox.append(self.rfile.read(int(self.headers["Content-Length"])))
        self.send_response(204)
        self.end_headers()

    def log_message(self, *args):
        pass


def background(server):
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


def main() -> None:
    service = background(make_server(ServiceConfig(bind="127.0.0.1:0")))
    requester_inbox = background(HTTPServer(("127.0.0.1", 0), Inbox))
    client = DiscoveryClient(service.url)

    # requester side: knows the EPC, hashes it locally, signs the request
    key = generate_private_key()
    request = sign_request(AccessRequest(
        requesting=ni_hash(EPC).digest_hex,
        recipient=Recipient(f"http://127.0.0.1:{requester_inbox.server_address[1]}/inbox"),
        valid_until=datetime.now(timezone.utc) + timedelta(hours=1),
    ), key, auth_id="auditor-17")
    status, rid = client.post_request(request)
    print(f"request posted: HTTP {status}, id {rid[:16]}...")

    # owner side: polls anonymously for its own items, checks the signature
    policy = AuthPolicy.allow_list([key])
    for r in client.poll_requests(ni_hash(EPC).digest_hex):
        decision = evaluate_auth(r, policy)
        print(f"owner sees {request_id(r)[:16]}...: {decision.value}")
        if decision is AuthDecision.GRANTED:
            result = respond(r, {"epc": EPC, "readPoint": "urn:epc:id:sgln:4023333.00002.0"}, policy)
            print(f"delivered: ok={result.ok} status={result.status}")

    print(f"requester inbox: {inbox[0].decode()}")
    service.shutdown()
    requester_inbox.shutdown()


if __name__ == "__main__":
    main()
