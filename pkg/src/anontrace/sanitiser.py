"""Reduce clear-text events to their public, hashed discovery projection.

Every attribute of an :class:`~anontrace.events.Event` falls in one of four
buckets:

* ``CLEAR``: copied verbatim (event type, time, action, business step and
  the *type* URIs of sources, destinations and transactions);
* ``HASH_PLAIN``: high-entropy identifiers (EPCs, transaction references);
* ``HASH_SALTED``: low-entropy party identifiers, hashed with a secret that
  both trading partners share, by default the transaction reference;
* ``DROP``: everything else.
"""

from __future__ import annotations

import enum
import json
import re
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping
from urllib.parse import urlparse

from .events import ASSEMBLY_EVENT, Event, parse_timestamp, validate
from .ni import NI_PATTERN, NiUri, ni_hash, salted_hash

EVENT_ID_VERSION = "ver=CBV2.0"


class Classification(str, enum.Enum):
    CLEAR = "Clear"
    HASH_PLAIN = "HashPlain"
    HASH_SALTED = "HashSalted"
    DROP = "Drop"


class SaltSource(str, enum.Enum):
    NONE = "None"
    BIZ_TRANSACTION_VALUE = "BizTransactionValue"


class InvalidEventError(ValueError):
    """Raised when an event with validation errors is sanitised."""

    def __init__(self, errors):
        self.errors = tuple(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


class SanitisedEventError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class SaltFallbackWarning(UserWarning):
    """A salted attribute was hashed without salt because no salt was derivable."""


C, HP, HS, D = (Classification.CLEAR, Classification.HASH_PLAIN,
                Classification.HASH_SALTED, Classification.DROP)

DEFAULT_CLASSIFICATION: dict[str, Classification] = {
    "eventType": C,
    "eventTime": C,
    "action": C,
    "bizStep": C,
    "sourceList[*].type": C,
    "destinationList[*].type": C,
    "bizTransactionList[*].type": C,
    "epcList[*]": HP,
    "inputEPCList[*]": HP,
    "outputEPCList[*]": HP,
    "bizTransactionList[*].value": HP,
    "sourceList[*].value": HS,
    "destinationList[*].value": HS,
    "recordTime": D,
    "eventTimeZoneOffset": D,
    "disposition": D,
    "readPoint": D,
    "extensions[*]": D,
}

# Which buckets each path may be moved into by an override.
_PERMITTED: dict[str, frozenset[Classification]] = {}
for _path, _cls in DEFAULT_CLASSIFICATION.items():
    if _path in ("eventType", "eventTime", "action", "bizStep"):
        _PERMITTED[_path] = frozenset({C})
    elif _path.endswith(".type"):
        _PERMITTED[_path] = frozenset({C, D})
    elif _cls in (HP, HS):
        _PERMITTED[_path] = frozenset({HP, HS, D})
    else:
        _PERMITTED[_path] = frozenset({D})

_INDEX = re.compile(r"\[\d+\]")


def _generic(path: str) -> str:
    return _INDEX.sub("[*]", path)


@dataclass(frozen=True)
class SanitiserConfig:
    dead_drop_url: str
    salt_source: SaltSource = SaltSource.BIZ_TRANSACTION_VALUE
    classification_overrides: Mapping[str, Classification] = field(default_factory=dict)

    def __post_init__(self) -> None:
        parsed = urlparse(self.dead_drop_url)
        if not parsed.scheme or not parsed.netloc:
            raise ValueError(f"dead_drop_url must be absolute: {self.dead_drop_url!r}")
        object.__setattr__(self, "salt_source", SaltSource(self.salt_source))
        overrides = {}
        for path, cls in self.classification_overrides.items():
            generic = _generic(path)
            if generic not in DEFAULT_CLASSIFICATION:
                raise KeyError(f"unknown attribute path: {path!r}")
            cls = Classification(cls)
            if cls not in _PERMITTED[generic]:
                raise ValueError(f"{path!r} cannot be classified as {cls.value}")
            overrides[generic] = cls
        object.__setattr__(self, "classification_overrides", overrides)


def classify(path: str, cfg: SanitiserConfig | None = None) -> Classification:
    """Bucket for an attribute path such as ``"bizStep"`` or ``"epcList[3]"``."""
    generic = _generic(path)
    if generic not in DEFAULT_CLASSIFICATION:
        raise KeyError(f"unknown attribute path: {path!r}")
    if cfg is not None and generic in cfg.classification_overrides:
        return cfg.classification_overrides[generic]
    return DEFAULT_CLASSIFICATION[generic]


def attribute_paths(e: Event) -> Iterator[tuple[str, str]]:
    """Yield every (concrete path, clear value) of ``e``."""
    yield "eventType", e.event_type
    yield "eventTime", e.event_time
    if e.record_time is not None:
        yield "recordTime", e.record_time
    yield "eventTimeZoneOffset", e.event_time_zone_offset
    for name, values in (("epcList", e.epc_list), ("inputEPCList", e.input_epcs),
                         ("outputEPCList", e.output_epcs)):
        for i, v in enumerate(values):
            yield f"{name}[{i}]", v
    yield "action", e.action
    yield "bizStep", e.biz_step
    if e.disposition is not None:
        yield "disposition", e.disposition
    if e.read_point is not None:
        yield "readPoint", e.read_point
    for name, pairs in (("bizTransactionList", e.biz_transactions),
                        ("sourceList", e.sources), ("destinationList", e.destinations)):
        for i, (kind, value) in enumerate(pairs):
            yield f"{name}[{i}].type", kind
            yield f"{name}[{i}].value", value
    for i, (key, value) in enumerate(e.extensions):
        yield f"extensions[{i}]", f"{key}={value}"


def derive_salt(e: Event, cfg: SanitiserConfig) -> str | None:
    if cfg.salt_source is SaltSource.NONE or not e.biz_transactions:
        return None
    return sorted(e.biz_transactions)[0][1]


def _require_valid(e: Event) -> None:
    report = validate(e)
    if report.errors:
        raise InvalidEventError(report.errors)


def event_id_preimage(e: Event) -> str:
    """Sorted ``path=value`` lines of every non-dropped attribute."""
    pairs = sorted(
        (path, value) for path, value in attribute_paths(e) if classify(path) is not D
    )
    return "\n".join(f"{path}={value}" for path, value in pairs)


def compute_event_id(e: Event) -> NiUri:
    _require_valid(e)
    return ni_hash(event_id_preimage(e)).with_suffix(EVENT_ID_VERSION)


@dataclass(frozen=True)
class SanitisedEvent:
    request_event_data_at: str
    event_type: str
    event_id: NiUri
    event_time: str
    action: str
    biz_step: str
    epc_list: tuple[NiUri, ...] = ()
    input_epcs: tuple[NiUri, ...] = ()
    output_epcs: tuple[NiUri, ...] = ()
    source_list: tuple[NiUri, ...] = ()
    destination_list: tuple[NiUri, ...] = ()
    biz_transaction_list: tuple[NiUri, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "request_event_data_at": self.request_event_data_at,
            "eventType": self.event_type,
            "eventId": str(self.event_id),
            "eventTime": self.event_time,
            "action": self.action,
            "epcList": [str(n) for n in self.epc_list],
        }
        if self.event_type == ASSEMBLY_EVENT:
            d["inputEPCList"] = [str(n) for n in self.input_epcs]
            d["outputEPCList"] = [str(n) for n in self.output_epcs]
        d["bizStep"] = self.biz_step
        d["sourceList"] = [str(n) for n in self.source_list]
        d["destinationList"] = [str(n) for n in self.destination_list]
        d["bizTransactionList"] = [str(n) for n in self.biz_transaction_list]
        return d

    def to_json(self, indent: int | None = 2) -> str:
        if indent is None:
            return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    @classmethod
    def from_dict(cls, d: Any) -> SanitisedEvent:
        """Strictly decode the public JSON form; every hash must be canonical."""
        if not isinstance(d, dict):
            raise SanitisedEventError("$", "expected a JSON object")
        scalars = ("request_event_data_at", "eventType", "eventId", "eventTime", "action", "bizStep")
        lists = ("epcList", "inputEPCList", "outputEPCList", "sourceList",
                 "destinationList", "bizTransactionList")
        for key in d:
            if key not in scalars and key not in lists:
                raise SanitisedEventError(key, "field not permitted in a sanitised event")
        for key in scalars:
            if not isinstance(d.get(key), str) or not d[key]:
                raise SanitisedEventError(key, "missing or not a non-empty string")

        def ni(value: Any, path: str) -> NiUri:
            if not isinstance(value, str) or not NI_PATTERN.fullmatch(value):
                raise SanitisedEventError(path, "not a canonical ni:///sha-256 URI")
            return NiUri.parse(value)

        def ni_list(key: str) -> tuple[NiUri, ...]:
            items = d.get(key, [])
            if not isinstance(items, list):
                raise SanitisedEventError(key, "expected a list")
            return tuple(ni(v, f"{key}[{i}]") for i, v in enumerate(items))

        try:
            parse_timestamp(d["eventTime"])
        except ValueError as exc:
            raise SanitisedEventError("eventTime", str(exc)) from None
        if d["eventType"] != ASSEMBLY_EVENT and (d.get("inputEPCList") or d.get("outputEPCList")):
            raise SanitisedEventError("inputEPCList", "only AssemblyEvent carries input/output EPCs")
        return cls(
            request_event_data_at=d["request_event_data_at"],
            event_type=d["eventType"],
            event_id=ni(d["eventId"], "eventId"),
            event_time=d["eventTime"],
            action=d["action"],
            biz_step=d["bizStep"],
            epc_list=ni_list("epcList"),
            input_epcs=ni_list("inputEPCList"),
            output_epcs=ni_list("outputEPCList"),
            source_list=ni_list("sourceList"),
            destination_list=ni_list("destinationList"),
            biz_transaction_list=ni_list("bizTransactionList"),
        )

    @classmethod
    def from_json(cls, text: str | bytes) -> SanitisedEvent:
        try:
            doc = json.loads(text)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise SanitisedEventError("$", f"malformed JSON: {exc}") from None
        return cls.from_dict(doc)

    @property
    def instant(self):
        return parse_timestamp(self.event_time)

    def item_digests(self) -> set[str]:
        return {n.digest_hex for n in self.epc_list + self.input_epcs + self.output_epcs}

    def digests(self) -> set[str]:
        """Every searchable digest: items, parties and transactions."""
        return self.item_digests() | {
            n.digest_hex for n in self.source_list + self.destination_list + self.biz_transaction_list
        }


def sanitise(e: Event, cfg: SanitiserConfig) -> SanitisedEvent:
    _require_valid(e)
    salt = derive_salt(e, cfg)
    fell_back = False

    def hashed(path: str, value: str) -> NiUri | None:
        nonlocal fell_back
        cls = classify(path, cfg)
        if cls is D:
            return None
        if cls is HS:
            if salt is not None:
                return salted_hash(value, salt)
            fell_back = True
        return ni_hash(value)

    def epcs(name: str, values: tuple[str, ...]) -> tuple[NiUri, ...]:
        out = (hashed(f"{name}[{i}]", v) for i, v in enumerate(values))
        return tuple(n for n in out if n is not None)

    def typed(name: str, pairs: tuple[tuple[str, str], ...]) -> tuple[NiUri, ...]:
        out = []
        for i, (kind, value) in enumerate(pairs):
            digest = hashed(f"{name}[{i}].value", value)
            if digest is None:
                continue
            if classify(f"{name}[{i}].type", cfg) is C:
                digest = digest.with_suffix(f"type={kind}")
            out.append(digest)
        return tuple(out)

    result = SanitisedEvent(
        request_event_data_at=cfg.dead_drop_url,
        event_type=e.event_type,
        event_id=compute_event_id(e),
        event_time=e.event_time,
        action=e.action,
        biz_step=e.biz_step,
        epc_list=epcs("epcList", e.epc_list),
        input_epcs=epcs("inputEPCList", e.input_epcs),
        output_epcs=epcs("outputEPCList", e.output_epcs),
        source_list=typed("sourceList", e.sources),
        destination_list=typed("destinationList", e.destinations),
        biz_transaction_list=typed("bizTransactionList", e.biz_transactions),
    )
    if fell_back:
        warnings.warn(
            "no transaction available as salt; party identifiers hashed unsalted",
            SaltFallbackWarning,
            stacklevel=2,
        )
    return result
