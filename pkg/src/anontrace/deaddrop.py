"""Anonymous access-request exchange ("dead drop").

Requesters post a request naming a hashed identifier, a reply endpoint and
optional credentials. Data owners poll by digest, decide locally, and reply
out of band straight to the requester. Requests the owner ignores simply
expire. The dead drop itself never sees a payload and keeps no record of who
polled.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .ni import DIGEST_PATTERN, normalise_digest

VALID_UNTIL_FORMAT = "%Y-%m-%d %H:%M:%S"


class RequestError(ValueError):
    """Malformed or already-expired access request."""


class AccessDeniedError(PermissionError):
    pass


class UnsupportedProtocolError(ValueError):
    pass


def parse_valid_until(text: str) -> datetime:
    """``YYYY-MM-DD HH:MM:SS``, interpreted as UTC."""
    try:
        return datetime.strptime(text, VALID_UNTIL_FORMAT).replace(tzinfo=timezone.utc)
    except (TypeError, ValueError):
        raise RequestError(f"valid_until must be 'YYYY-MM-DD HH:MM:SS': {text!r}") from None


def format_valid_until(moment: datetime) -> str:
    if moment.tzinfo is not None:
        moment = moment.astimezone(timezone.utc)
    return moment.strftime(VALID_UNTIL_FORMAT)


def _utc(moment: datetime) -> datetime:
    if moment.tzinfo is None:
        return moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


@dataclass(frozen=True)
class Recipient:
    endpoint: str
    protocol: str = "POST"  # POST, EMAIL, or any other transport name


@dataclass(frozen=True)
class AccessRequest:
    requesting: str
    recipient: Recipient
    valid_until: datetime
    auth: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.requesting, str) or not DIGEST_PATTERN.fullmatch(self.requesting):
            raise RequestError(f"requesting must be 64 lowercase hex chars: {self.requesting!r}")
        if not self.recipient.endpoint:
            raise RequestError("recipient endpoint must be non-empty")
        if not self.recipient.protocol:
            raise RequestError("recipient protocol must be non-empty")
        # second precision is all the wire form carries
        object.__setattr__(self, "valid_until", _utc(self.valid_until).replace(microsecond=0))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "requesting": self.requesting,
            "recipient": {"endpoint": self.recipient.endpoint, "protocol": self.recipient.protocol},
        }
        if self.auth is not None:
            d["auth"] = dict(self.auth)
        d["valid_until"] = format_valid_until(self.valid_until)
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Any) -> AccessRequest:
        if not isinstance(d, dict):
            raise RequestError("request must be a JSON object")
        unknown = set(d) - {"requesting", "recipient", "auth", "valid_until"}
        if unknown:
            raise RequestError(f"unknown request fields: {sorted(unknown)}")
        recipient = d.get("recipient")
        if not isinstance(recipient, dict) or not isinstance(recipient.get("endpoint"), str):
            raise RequestError("recipient.endpoint is required")
        protocol = recipient.get("protocol", "POST")
        if not isinstance(protocol, str):
            raise RequestError("recipient.protocol must be a string")
        auth = d.get("auth")
        if auth is not None and not isinstance(auth, dict):
            raise RequestError("auth must be an object")
        requesting = d.get("requesting")
        if not isinstance(requesting, str):
            raise RequestError("requesting is required")
        return cls(
            requesting=requesting,
            recipient=Recipient(recipient["endpoint"], protocol),
            valid_until=parse_valid_until(d.get("valid_until")),
            auth=auth,
        )

    @classmethod
    def from_json(cls, text: str | bytes) -> AccessRequest:
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise RequestError(f"malformed JSON: {exc}") from None


def canonical_request_bytes(r: AccessRequest) -> bytes:
    """Request JSON minus ``auth.signature``, keys sorted, compact, UTF-8."""
    d = r.to_dict()
    if "auth" in d:
        d["auth"] = {k: v for k, v in d["auth"].items() if k != "signature"}
    return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def request_id(r: AccessRequest) -> str:
    return hashlib.sha256(canonical_request_bytes(r)).hexdigest()


# ---------------------------------------------------------------------------
# dead drop store
# ---------------------------------------------------------------------------

class DeadDrop:
    """In-memory request board with read-time expiry.

    ``clock`` returns the current UTC time; every method also accepts an
    explicit ``now``.
    """

    def __init__(self, clock: Callable[[], datetime] | None = None):
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.Lock()
        self._requests: dict[str, tuple[int, AccessRequest]] = {}
        self._by_digest: dict[str, list[str]] = {}
        self._seq = 0

    def _now(self, now: datetime | None) -> datetime:
        return _utc(now if now is not None else self._clock())

    def __len__(self) -> int:
        return len(self._requests)

    def post_request(self, r: AccessRequest, now: datetime | None = None) -> str:
        return self.post_request_with_status(r, now)[0]

    def post_request_with_status(self, r: AccessRequest, now: datetime | None = None) -> tuple[str, bool]:
        if r.valid_until <= self._now(now):
            raise RequestError("request has already expired")
        rid = request_id(r)
        with self._lock:
            if rid in self._requests:
                return rid, False
            self._seq += 1
            self._requests[rid] = (self._seq, r)
            self._by_digest.setdefault(r.requesting, []).append(rid)
        return rid, True

    def poll_requests(self, h: str, now: datetime | None = None) -> list[tuple[str, AccessRequest]]:
        """Unexpired requests for digest ``h``, oldest first, as (id, request)."""
        digest = normalise_digest(h)
        moment = self._now(now)
        with self._lock:
            found = [(rid, self._requests[rid]) for rid in self._by_digest.get(digest, ())]
        found.sort(key=lambda item: item[1][0])
        return [(rid, r) for rid, (_, r) in found if r.valid_until > moment]

    def expire_sweep(self, now: datetime | None = None) -> int:
        """Permanently delete expired requests; returns how many were removed."""
        moment = self._now(now)
        with self._lock:
            doomed = [rid for rid, (_, r) in self._requests.items() if r.valid_until <= moment]
        removed = 0
        for rid in doomed:
            # one request per lock acquisition so polls are never held up long
            with self._lock:
                entry = self._requests.pop(rid, None)
                if entry is None:
                    continue
                ids = self._by_digest.get(entry[1].requesting, [])
                if rid in ids:
                    ids.remove(rid)
                if not ids:
                    self._by_digest.pop(entry[1].requesting, None)
                removed += 1
        return removed

    def snapshot(self) -> list[tuple[str, AccessRequest]]:
        """All stored requests including expired-but-unswept ones."""
        with self._lock:
            items = sorted(self._requests.items(), key=lambda kv: kv[1][0])
        return [(rid, r) for rid, (_, r) in items]


# ---------------------------------------------------------------------------
# authorisation
# ---------------------------------------------------------------------------

class AuthDecision(str, enum.Enum):
    GRANTED = "Granted"
    DENIED = "Denied"


class AuthMode(str, enum.Enum):
    ACCEPT_ALL = "AcceptAll"
    DENY_ALL = "DenyAll"
    SIGNATURE_ALLOW_LIST = "SignatureAllowList"


@dataclass(frozen=True)
class AuthPolicy:
    mode: AuthMode
    allowed_keys: frozenset[bytes] = field(default_factory=frozenset)

    @classmethod
    def accept_all(cls) -> AuthPolicy:
        return cls(AuthMode.ACCEPT_ALL)

    @classmethod
    def deny_all(cls) -> AuthPolicy:
        return cls(AuthMode.DENY_ALL)

    @classmethod
    def allow_list(cls, keys) -> AuthPolicy:
        return cls(AuthMode.SIGNATURE_ALLOW_LIST, frozenset(public_key_bytes(k) for k in keys))


def public_key_bytes(key: Ed25519PublicKey | Ed25519PrivateKey | bytes | str) -> bytes:
    """Raw 32-byte public key from a key object, raw bytes, or base64 text."""
    if isinstance(key, Ed25519PrivateKey):
        key = key.public_key()
    if isinstance(key, Ed25519PublicKey):
        return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    if isinstance(key, str):
        key = base64.b64decode(key.strip(), validate=True)
    if len(key) != 32:
        raise ValueError("Ed25519 public keys are 32 bytes")
    return bytes(key)


def sign_request(r: AccessRequest, private_key: Ed25519PrivateKey, auth_id: str | None = None) -> AccessRequest:
    """Return ``r`` with ``auth.public_key`` and ``auth.signature`` filled in."""
    auth = dict(r.auth or {})
    auth.pop("signature", None)
    if auth_id is not None:
        auth["id"] = auth_id
    auth.setdefault("id", "anonymous")
    auth["public_key"] = base64.b64encode(public_key_bytes(private_key)).decode("ascii")
    unsigned = AccessRequest(r.requesting, r.recipient, r.valid_until, auth)
    signature = private_key.sign(canonical_request_bytes(unsigned))
    auth["signature"] = base64.b64encode(signature).decode("ascii")
    return AccessRequest(r.requesting, r.recipient, r.valid_until, auth)


def evaluate_auth(r: AccessRequest, policy: AuthPolicy) -> AuthDecision:
    """Never raises: anything unverifiable is denied."""
    if policy.mode is AuthMode.ACCEPT_ALL:
        return AuthDecision.GRANTED
    if policy.mode is not AuthMode.SIGNATURE_ALLOW_LIST:
        return AuthDecision.DENIED
    try:
        auth = r.auth or {}
        key = public_key_bytes(auth["public_key"])
        if key not in policy.allowed_keys:
            return AuthDecision.DENIED
        signature = base64.b64decode(auth["signature"], validate=True)
        Ed25519PublicKey.from_public_bytes(key).verify(signature, canonical_request_bytes(r))
        return AuthDecision.GRANTED
    except (InvalidSignature, KeyError, TypeError, ValueError, AttributeError):
        return AuthDecision.DENIED


def generate_private_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def private_key_to_pem(key: Ed25519PrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def load_private_key(pem: bytes) -> Ed25519PrivateKey:
    key = serialization.load_pem_private_key(pem, password=None)
    if not isinstance(key, Ed25519PrivateKey):
        raise ValueError("expected an Ed25519 private key")
    return key


# ---------------------------------------------------------------------------
# owner-side delivery
# ---------------------------------------------------------------------------

Transport = Callable[[str, bytes], None]


@dataclass(frozen=True)
class DeliveryResult:
    ok: bool
    attempts: int
    status: int | None = None
    error: str | None = None


def _payload_bytes(payload: Any) -> bytes:
    if isinstance(payload, bytes):
        return payload
    if isinstance(payload, str):
        return payload.encode("utf-8")
    return json.dumps(payload, ensure_ascii=False).encode("utf-8")


def http_post(endpoint: str, body: bytes, timeout: float = 10.0) -> int:
    req = urllib.request.Request(
        endpoint, data=body, method="POST", headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.status


def respond(
    r: AccessRequest,
    payload: Any,
    policy: AuthPolicy,
    transports: Mapping[str, Transport] | None = None,
    retries: int = 0,
    timeout: float = 10.0,
) -> DeliveryResult:
    """Send ``payload`` (any subset of the clear event) to the requester.

    Runs entirely on the owner's side. Refuses with :class:`AccessDeniedError`
    unless ``policy`` grants the request.
    """
    if evaluate_auth(r, policy) is not AuthDecision.GRANTED:
        raise AccessDeniedError("request is not authorised under the given policy")
    body = _payload_bytes(payload)
    protocol = r.recipient.protocol
    transports = transports or {}
    if protocol in transports:
        send = transports[protocol]
    elif protocol.upper() == "POST":
        send = None
    else:
        raise UnsupportedProtocolError(f"no transport configured for protocol {protocol!r}")

    attempts, last_error, status = 0, None, None
    for attempt in range(retries + 1):
        attempts += 1
        try:
            if send is None:
                status = http_post(r.recipient.endpoint, body, timeout)
            else:
                send(r.recipient.endpoint, body)
            return DeliveryResult(True, attempts, status)
        except urllib.error.HTTPError as exc:
            status, last_error = exc.code, f"HTTP {exc.code}"
        except Exception as exc:  # transport failures are reported, not raised
            last_error = f"{type(exc).__name__}: {exc}"
        if attempt < retries:
            time.sleep(min(0.1 * 2 ** attempt, 2.0))
    return DeliveryResult(False, attempts, status, last_error)
