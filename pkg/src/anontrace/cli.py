"""Command-line entry point: ``anontrace <command> ...``.

Exit codes: 0 success, 1 error; ``verify`` returns 0 Complete, 2 Broken,
3 Unknown.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
from pathlib import Path
from typing import Sequence
from urllib.parse import urlparse

from . import chain, deaddrop, simulator
from .client import DiscoveryClient, ServiceError
from .events import EventParseError, EventSchemaError, load_events
from .ni import ni_hash, normalise_digest
from .sanitiser import InvalidEventError, SanitiserConfig, SaltSource, sanitise
from .service import ServiceConfig, serve
from .store import DiscoveryStore

DEFAULT_URL = "http://127.0.0.1:8080"
EXIT_OK, EXIT_ERROR, EXIT_BROKEN, EXIT_UNKNOWN = 0, 1, 2, 3
VERDICT_EXIT = {chain.COMPLETE: EXIT_OK, chain.BROKEN: EXIT_BROKEN, chain.UNKNOWN: EXIT_UNKNOWN}


class CLIError(RuntimeError):
    pass


def _emit(obj, out=None) -> None:
    out = out or sys.stdout
    out.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")


def _digest(args: argparse.Namespace) -> str:
    # raw EPCs are hashed here and never leave the process
    if getattr(args, "epc", None):
        return ni_hash(args.epc).digest_hex
    return normalise_digest(args.hash)


def _client(args: argparse.Namespace) -> DiscoveryClient:
    parsed = urlparse(args.url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise CLIError(f"--url must be an absolute http(s) URL, got {args.url!r}")
    return DiscoveryClient(args.url)


def _add_target(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--epc", help="raw EPC URI; hashed locally before any request")
    g.add_argument("--hash", help="hex digest or ni URI")


def _load_policy(spec: str) -> deaddrop.AuthPolicy:
    if spec == "accept-all":
        return deaddrop.AuthPolicy.accept_all()
    if spec == "deny-all":
        return deaddrop.AuthPolicy.deny_all()
    if spec.startswith("allow-list:"):
        lines = Path(spec.split(":", 1)[1]).read_text().split()
        return deaddrop.AuthPolicy.allow_list(lines)
    raise CLIError(f"unknown policy {spec!r} (accept-all, deny-all, allow-list:<file>)")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sanitise(args: argparse.Namespace) -> int:
    events = load_events(Path(args.events_file).read_bytes())
    cfg = SanitiserConfig(args.dead_drop_url, SaltSource(args.salt_source))
    for e in events:
        sys.stdout.write(sanitise(e, cfg).to_json(indent=None) + "\n")
    return EXIT_OK


def cmd_upload(args: argparse.Namespace) -> int:
    client = _client(args)
    for n, line in enumerate(Path(args.sanitised_file).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        status, event_id = client.post_event(json.loads(line))
        _emit({"line": n, "status": status, "eventId": event_id})
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    events = _client(args).query_by_hash(_digest(args))
    if args.format == "table":
        for e in events:
            print(f"{e.event_time}  {e.event_type:<13}  {e.biz_step}  {e.event_id}")
    else:
        for e in events:
            sys.stdout.write(e.to_json(indent=None) + "\n")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    store = DiscoveryStore.restore(args.journal) if args.journal else _client(args)
    verdict = chain.verify_chain(_digest(args), store, recurse=args.recurse)
    if args.format == "table":
        print(f"{verdict.status}  {verdict.item_digest}")
        for link in verdict.links:
            print(f"  {link.ship_event_id} -> {link.receive_event_id}")
        for gap in verdict.gaps:
            print(f"  gap: {gap.kind} {gap.event_id or ''} {gap.detail}")
        for digest, sub in verdict.component_verdicts.items():
            print(f"  component {digest}: {sub.status}")
    else:
        print(json.dumps(verdict.to_dict(), indent=2))
    return VERDICT_EXIT[verdict.status]


def cmd_request(args: argparse.Namespace) -> int:
    r = deaddrop.AccessRequest(
        requesting=_digest(args),
        recipient=deaddrop.Recipient(args.endpoint, args.protocol),
        valid_until=deaddrop.parse_valid_until(args.valid_until),
        auth={"id": args.auth_id} if args.auth_id else None,
    )
    if args.sign:
        key = deaddrop.load_private_key(Path(args.sign).read_bytes())
        r = deaddrop.sign_request(r, key, args.auth_id)
    status, rid = _client(args).post_request(r)
    _emit({"status": status, "requestId": rid})
    return EXIT_OK


def cmd_owner_poll(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    for r in _client(args).poll_requests(_digest(args)):
        # denied requests are ignored silently and left to expire
        if deaddrop.evaluate_auth(r, policy) is deaddrop.AuthDecision.GRANTED:
            _emit({"requestId": deaddrop.request_id(r), "request": r.to_dict()})
    return EXIT_OK


def cmd_owner_respond(args: argparse.Namespace) -> int:
    policy = _load_policy(args.policy)
    matches = [r for r in _client(args).poll_requests(_digest(args))
               if deaddrop.request_id(r) == args.request_id]
    if not matches:
        raise CLIError(f"no live request {args.request_id}")
    result = deaddrop.respond(matches[0], Path(args.payload).read_bytes(), policy,
                              retries=args.retries)
    _emit({"ok": result.ok, "attempts": result.attempts, "status": result.status,
           "error": result.error})
    return EXIT_OK if result.ok else EXIT_ERROR


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = (simulator.NetworkSpec.from_dict(json.loads(Path(args.spec).read_text()))
            if args.spec else simulator.default_spec())
    events = simulator.generate(spec)
    for fault in args.fault or []:
        kind, _, index = fault.partition(":")
        if not index.lstrip("-").isdigit():
            raise CLIError(f"fault must be KIND:INDEX, got {fault!r}")
        events = simulator.inject_fault(events, kind, int(index))
    paths = simulator.write_dataset(events, args.out, spec)
    _emit({"event_count": len(events), **{k: str(v) for k, v in paths.items()}})
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    serve(ServiceConfig(bind=args.bind, journal=args.journal,
                        sweep_interval=args.sweep_interval, max_body=args.max_body))
    return EXIT_OK


def cmd_keygen(args: argparse.Namespace) -> int:
    key = deaddrop.generate_private_key()
    Path(args.out).write_bytes(deaddrop.private_key_to_pem(key))
    os.chmod(args.out, 0o600)
    print(base64.b64encode(deaddrop.public_key_bytes(key)).decode("ascii"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anontrace", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--url", default=os.environ.get("ANONTRACE_URL", DEFAULT_URL),
                        help="discovery service base URL (env ANONTRACE_URL)")
    common.add_argument("--format", choices=("json", "table"), default="json")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sanitise", parents=[common], help="sanitise events to NDJSON")
    p.add_argument("events_file")
    p.add_argument("--dead-drop-url", default=DEFAULT_URL + "/dead_drop")
    p.add_argument("--salt-source", choices=[s.value for s in SaltSource],
                   default=SaltSource.BIZ_TRANSACTION_VALUE.value)
    p.set_defaults(handler=cmd_sanitise)

    p = sub.add_parser("upload", parents=[common], help="POST sanitised NDJSON to /events")
    p.add_argument("sanitised_file")
    p.set_defaults(handler=cmd_upload)

    p = sub.add_parser("query", parents=[common], help="look up events by item")
    _add_target(p)
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("verify", parents=[common], help="verify chain of custody")
    _add_target(p)
    p.add_argument("--recurse", action="store_true", help="also verify assembly components")
    p.add_argument("--journal", help="verify against a local NDJSON journal instead of --url")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("request", parents=[common], help="post an access request")
    _add_target(p)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--protocol", default="POST")
    p.add_argument("--valid-until", required=True, help="'YYYY-MM-DD HH:MM:SS' UTC")
    p.add_argument("--auth-id")
    p.add_argument("--sign", metavar="KEYFILE", help="Ed25519 PEM private key")
    p.set_defaults(handler=cmd_request)

    owner = sub.add_parser("owner", help="data-owner side of the dead drop")
    owner_sub = owner.add_subparsers(dest="owner_command", required=True)
    p = owner_sub.add_parser("poll", parents=[common], help="list granted requests")
    _add_target(p)
    p.add_argument("--policy", required=True, help="accept-all | deny-all | allow-list:<file>")
    p.set_defaults(handler=cmd_owner_poll)
    p = owner_sub.add_parser("respond", parents=[common], help="deliver data to a requester")
    _add_target(p)
    p.add_argument("--request-id", required=True)
    p.add_argument("--payload", required=True, help="JSON file with the data to send")
    p.add_argument("--policy", required=True)
    p.add_argument("--retries", type=int, default=0)
    p.set_defaults(handler=cmd_owner_respond)

    p = sub.add_parser("simulate", help="generate the example supply network")
    p.add_argument("--spec", help="NetworkSpec JSON (default: six-actor example)")
    p.add_argument("--out", required=True)
    p.add_argument("--fault", action="append", metavar="KIND:INDEX",
                   help=f"inject a fault; KIND in {', '.join(simulator.FAULT_KINDS)}")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("serve", help="run the discovery + dead-drop HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--journal")
    p.add_argument("--sweep-interval", type=float, default=60.0)
    p.add_argument("--max-body", type=int, default=1024 * 1024)
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("keygen", help="create an Ed25519 signing key")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_keygen)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (CLIError, ServiceError, EventParseError, EventSchemaError, InvalidEventError,
            deaddrop.RequestError, simulator.FaultError, ValueError, OSError) as exc:
        print(f"anontrace: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
