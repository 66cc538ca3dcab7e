"""Named-information (``ni:``) hash URIs over SHA-256.

Digests are rendered as lowercase hex rather than RFC 6920's base64url so the
values can be reproduced with ``echo -n "<value>" | sha256sum``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

ALGORITHM = "sha-256"

# Canonical rendered form. Anything written by this package matches it.
NI_PATTERN = re.compile(r"ni:///sha-256;[0-9a-f]{64}(\?.+)?")
DIGEST_PATTERN = re.compile(r"[0-9a-f]{64}")

# Lenient input form: two or three slashes, any hex case.
_PARSE_PATTERN = re.compile(
    r"ni:///?(?P<alg>[A-Za-z0-9-]+);(?P<digest>[0-9A-Fa-f]{64})(?:\?(?P<query>.+))?"
)


@dataclass(frozen=True)
class NiUri:
    digest_hex: str
    query_suffix: str | None = None
    algorithm: str = ALGORITHM

    def __post_init__(self) -> None:
        if self.algorithm != ALGORITHM:
            raise ValueError(f"unsupported hash algorithm: {self.algorithm!r}")
        if not DIGEST_PATTERN.fullmatch(self.digest_hex):
            raise ValueError(f"digest must be 64 lowercase hex chars: {self.digest_hex!r}")
        if self.query_suffix == "":
            raise ValueError("query suffix must be absent or non-empty")

    def __str__(self) -> str:
        base = f"ni:///{self.algorithm};{self.digest_hex}"
        return f"{base}?{self.query_suffix}" if self.query_suffix else base

    @classmethod
    def parse(cls, text: str) -> NiUri:
        """Parse ``ni:///sha-256;<hex>[?query]``.

        The two-slash variant ``ni://sha-256;...`` and uppercase hex are
        accepted and normalised.
        """
        m = _PARSE_PATTERN.fullmatch(text)
        if m is None:
            raise ValueError(f"not an ni URI: {text!r}")
        return cls(
            digest_hex=m["digest"].lower(),
            query_suffix=m["query"],
            algorithm=m["alg"].lower(),
        )

    def with_suffix(self, query_suffix: str | None) -> NiUri:
        return NiUri(self.digest_hex, query_suffix, self.algorithm)

    @property
    def type_uri(self) -> str | None:
        """Value of a ``type=`` suffix, if present."""
        if self.query_suffix and self.query_suffix.startswith("type="):
            return self.query_suffix[len("type="):]
        return None


def sha256_hex(value: str) -> str:
    return hashlib.sha256(value.encode("utf-8")).hexdigest()


def ni_hash(value: str) -> NiUri:
    """Hash the exact UTF-8 bytes of ``value`` (no trailing newline)."""
    if not value:
        raise ValueError("cannot hash an empty value")
    return NiUri(sha256_hex(value))


def salted_hash(value: str, salt: str) -> NiUri:
    """Hash ``value`` with ``salt`` appended before hashing."""
    if not value:
        raise ValueError("cannot hash an empty value")
    if not salt:
        raise ValueError("salt must be non-empty")
    return NiUri(sha256_hex(value + salt))


def normalise_digest(text: str) -> str:
    """Accept a bare hex digest (any case) or an ni URI; return lowercase hex."""
    if text.startswith("ni:"):
        return NiUri.parse(text).digest_hex
    lowered = text.strip().lower()
    if not DIGEST_PATTERN.fullmatch(lowered):
        raise ValueError(f"malformed digest: {text!r}")
    return lowered
