"""Clear-text EPCIS events: data model, XML/JSON codecs and validation.

Only the EPCIS 1.2 subset used by the traceability fixtures is modelled:
``ObjectEvent`` plus an ``AssemblyEvent`` that consumes component EPCs
(``inputEPCList``) and produces product EPCs (``outputEPCList``).
Unrecognised child elements of an event are kept as ``extensions`` so that
the sanitiser can drop them explicitly.
"""

from __future__ import annotations

import io
import json
import re
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

OBJECT_EVENT = "ObjectEvent"
ASSEMBLY_EVENT = "AssemblyEvent"
EVENT_TYPES = (OBJECT_EVENT, ASSEMBLY_EVENT)
ACTIONS = ("ADD", "OBSERVE", "DELETE")

Pair = tuple[str, str]


class EventParseError(ValueError):
    """Input could not be decoded. ``line``/``column`` are set for XML."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class EventSchemaError(ValueError):
    """JSON event input violates the expected schema at ``path``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class SkippedEventWarning(UserWarning):
    """An unsupported event element was skipped during XML parsing."""


@dataclass(frozen=True)
class Event:
    event_type: str
    event_time: str
    event_time_zone_offset: str
    action: str
    biz_step: str
    epc_list: tuple[str, ...] = ()
    input_epcs: tuple[str, ...] = ()
    output_epcs: tuple[str, ...] = ()
    record_time: str | None = None
    disposition: str | None = None
    read_point: str | None = None
    biz_transactions: tuple[Pair, ...] = ()
    sources: tuple[Pair, ...] = ()
    destinations: tuple[Pair, ...] = ()
    extensions: tuple[Pair, ...] = ()

    @property
    def instant(self) -> datetime:
        return parse_timestamp(self.event_time)

    def all_epcs(self) -> tuple[str, ...]:
        return self.epc_list + self.input_epcs + self.output_epcs

    def replace(self, **changes: Any) -> Event:
        return replace(self, **changes)


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Pair, ...] = ()
    warnings: tuple[Pair, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

_TS_PATTERN = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?(Z|[+-]\d{2}:\d{2})"
)
_OFFSET_PATTERN = re.compile(r"([+-])(\d{2}):(\d{2})")


def _parse_offset(text: str) -> timezone:
    if text == "Z":
        return timezone.utc
    m = _OFFSET_PATTERN.fullmatch(text)
    if m is None:
        raise ValueError(f"malformed UTC offset: {text!r}")
    sign = -1 if m[1] == "-" else 1
    hours, minutes = int(m[2]), int(m[3])
    if hours > 23 or minutes > 59:
        raise ValueError(f"UTC offset out of range: {text!r}")
    return timezone(sign * timedelta(hours=hours, minutes=minutes))


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp that carries an explicit UTC offset."""
    m = _TS_PATTERN.fullmatch(text)
    if m is None:
        raise ValueError(f"malformed timestamp: {text!r}")
    frac = (m[7] or "0").ljust(6, "0")[:6]
    return datetime(
        int(m[1]), int(m[2]), int(m[3]), int(m[4]), int(m[5]), int(m[6]),
        int(frac), tzinfo=_parse_offset(m[8]),
    )


def timestamp_offset(text: str) -> str:
    """Return the offset suffix embedded in ``text`` ("Z" becomes "+00:00")."""
    m = _TS_PATTERN.fullmatch(text)
    if m is None:
        raise ValueError(f"malformed timestamp: {text!r}")
    return "+00:00" if m[8] == "Z" else m[8]


def format_timestamp(moment: datetime, offset: str) -> str:
    """Render ``moment`` in ``offset`` with millisecond precision."""
    local = moment.astimezone(_parse_offset(offset))
    return local.strftime("%Y-%m-%dT%H:%M:%S.") + f"{local.microsecond // 1000:03d}" + offset


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate(e: Event) -> ValidationReport:
    errors: list[Pair] = []
    warns: list[Pair] = []

    if e.event_type not in EVENT_TYPES:
        errors.append(("eventType", f"unsupported event type {e.event_type!r}"))
    elif e.event_type == OBJECT_EVENT:
        if not e.epc_list:
            errors.append(("epcList", "ObjectEvent requires at least one EPC"))
        if e.input_epcs or e.output_epcs:
            errors.append(("inputEPCList", "ObjectEvent cannot carry input/output EPCs"))
    else:
        if not e.output_epcs:
            errors.append(("outputEPCList", "AssemblyEvent requires at least one output EPC"))
        if not e.input_epcs:
            warns.append(("inputEPCList", "AssemblyEvent without components"))

    embedded = None
    try:
        parse_timestamp(e.event_time)
        embedded = timestamp_offset(e.event_time)
        if not re.search(r"\.\d{3}(Z|[+-])", e.event_time):
            warns.append(("eventTime", "expected millisecond precision"))
    except ValueError as exc:
        errors.append(("eventTime", str(exc)))

    try:
        _parse_offset(e.event_time_zone_offset)
        if not _OFFSET_PATTERN.fullmatch(e.event_time_zone_offset):
            raise ValueError(f"offset must be ±hh:mm: {e.event_time_zone_offset!r}")
        if embedded is not None and embedded != e.event_time_zone_offset:
            errors.append((
                "eventTimeZoneOffset",
                f"{e.event_time_zone_offset} does not match eventTime offset {embedded}",
            ))
    except ValueError as exc:
        errors.append(("eventTimeZoneOffset", str(exc)))

    if e.record_time is not None:
        try:
            parse_timestamp(e.record_time)
        except ValueError as exc:
            errors.append(("recordTime", str(exc)))

    if e.action not in ACTIONS:
        errors.append(("action", f"unsupported action {e.action!r}"))
    if not e.biz_step:
        errors.append(("bizStep", "must be non-empty"))

    for name, values in (
        ("epcList", e.epc_list), ("inputEPCList", e.input_epcs), ("outputEPCList", e.output_epcs),
    ):
        for i, v in enumerate(values):
            if not isinstance(v, str) or not v:
                errors.append((f"{name}[{i}]", "EPC must be a non-empty string"))

    for name, pairs in (
        ("bizTransactionList", e.biz_transactions),
        ("sourceList", e.sources),
        ("destinationList", e.destinations),
    ):
        for i, (kind, value) in enumerate(pairs):
            if not kind:
                errors.append((f"{name}[{i}].type", "type URI must be non-empty"))
            if not value:
                errors.append((f"{name}[{i}].value", "value must be non-empty"))

    if e.read_point is not None and not e.read_point:
        errors.append(("readPoint", "location must be non-empty"))

    return ValidationReport(tuple(errors), tuple(warns))


# ---------------------------------------------------------------------------
# XML
# ---------------------------------------------------------------------------

_KNOWN_ELEMENTS = {
    "eventTime", "recordTime", "eventTimeZoneOffset", "epcList", "inputEPCList",
    "outputEPCList", "action", "bizStep", "disposition", "readPoint",
    "bizTransactionList", "sourceList", "destinationList", "extension",
}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if isinstance(tag, str) else ""


def _text(el: ET.Element | None) -> str:
    if el is None or el.text is None:
        return ""
    return el.text.strip()


class _Names:
    """Maps Clark-notation tags back to ``prefix:local`` qualified names."""

    def __init__(self) -> None:
        self.prefixes: dict[str, str] = {}

    def add(self, prefix: str, uri: str) -> None:
        if prefix:
            self.prefixes.setdefault(uri, prefix)

    def qname(self, tag: str) -> str:
        if tag.startswith("{"):
            uri, local = tag[1:].split("}", 1)
            prefix = self.prefixes.get(uri)
            return f"{prefix}:{local}" if prefix else local
        return tag


def _flatten(el: ET.Element, names: _Names, prefix: str = "") -> list[Pair]:
    key = prefix + names.qname(el.tag)
    children = list(el)
    if not children:
        return [(key, _text(el))]
    out: list[Pair] = []
    for child in children:
        out.extend(_flatten(child, names, key + "/"))
    return out


def _pairs(el: ET.Element, item: str) -> list[Pair]:
    return [
        (child.get("type", ""), _text(child))
        for child in el
        if _local(child.tag) == item
    ]


def _event_from_element(el: ET.Element, names: _Names) -> Event:
    kind = _local(el.tag)
    fields: dict[str, Any] = {
        "event_type": kind,
        "event_time": "",
        "event_time_zone_offset": "",
        "action": "",
        "biz_step": "",
    }
    tx: list[Pair] = []
    src: list[Pair] = []
    dst: list[Pair] = []
    ext: list[Pair] = []

    def visit(children: Iterable[ET.Element], inside_extension: bool) -> None:
        for child in children:
            name = _local(child.tag)
            if name not in _KNOWN_ELEMENTS:
                ext.extend(_flatten(child, names))
            elif name == "eventTime":
                fields["event_time"] = _text(child)
            elif name == "recordTime":
                fields["record_time"] = _text(child)
            elif name == "eventTimeZoneOffset":
                fields["event_time_zone_offset"] = _text(child)
            elif name in ("epcList", "inputEPCList", "outputEPCList"):
                target = {"epcList": "epc_list", "inputEPCList": "input_epcs",
                          "outputEPCList": "output_epcs"}[name]
                fields[target] = tuple(_text(c) for c in child if _local(c.tag) == "epc")
            elif name == "action":
                fields["action"] = _text(child)
            elif name == "bizStep":
                fields["biz_step"] = _text(child)
            elif name == "disposition":
                fields["disposition"] = _text(child)
            elif name == "readPoint":
                fields["read_point"] = _text(child.find("id")) or _text(child)
            elif name == "bizTransactionList":
                tx.extend(_pairs(child, "bizTransaction"))
            elif name == "sourceList":
                src.extend(_pairs(child, "source"))
            elif name == "destinationList":
                dst.extend(_pairs(child, "destination"))
            elif name == "extension":
                if inside_extension:
                    ext.extend(_flatten(child, names))
                else:
                    visit(child, True)

    visit(el, False)
    return Event(
        **fields,
        biz_transactions=tuple(tx),
        sources=tuple(src),
        destinations=tuple(dst),
        extensions=tuple(ext),
    )


def parse_event_xml(data: bytes | str) -> list[Event]:
    """Parse events in document order.

    Accepts a full EPCIS document, a bare ``EventList`` or a single event
    element. Unsupported event elements are skipped with a
    :class:`SkippedEventWarning`.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    names = _Names()
    root: ET.Element | None = None
    try:
        for kind, payload in ET.iterparse(io.BytesIO(data), events=("start-ns", "start")):
            if kind == "start-ns":
                names.add(*payload)
            elif root is None:
                root = payload
    except ET.ParseError as exc:
        line, column = exc.position
        reason = re.sub(r": line \d+, column \d+$", "", str(exc))
        raise EventParseError(f"malformed XML: {reason}", line, column) from None
    except (ValueError, LookupError) as exc:
        raise EventParseError(f"undecodable XML input: {exc}") from None
    assert root is not None

    if _local(root.tag) == "EventList":
        candidates = list(root)
    else:
        lists = [el for el in root.iter() if _local(el.tag) == "EventList"]
        if lists:
            candidates = [child for lst in lists for child in lst]
        else:
            candidates = [root] if _local(root.tag).endswith("Event") else []

    events: list[Event] = []
    for el in candidates:
        if _local(el.tag) in EVENT_TYPES:
            events.append(_event_from_element(el, names))
        else:
            warnings.warn(
                f"skipping unsupported event element <{_local(el.tag)}>",
                SkippedEventWarning,
                stacklevel=2,
            )
    return events


def _ext_namespace(prefix: str) -> str:
    return f"urn:anontrace:ext:{prefix}"


def _write_extensions(ext: Sequence[Pair], indent: str) -> list[str]:
    """Rebuild nested elements from slash-joined extension keys."""
    lines: list[str] = []
    open_path: list[str] = []
    for key, value in ext:
        parts = key.split("/")
        head, leaf = parts[:-1], parts[-1]
        common = 0
        while common < min(len(open_path), len(head)) and open_path[common] == head[common]:
            common += 1
        for depth in range(len(open_path) - 1, common - 1, -1):
            lines.append(f"{indent}{'  ' * depth}</{open_path[depth]}>")
        open_path = open_path[:common]
        for depth in range(common, len(head)):
            lines.append(f"{indent}{'  ' * depth}<{head[depth]}>")
            open_path.append(head[depth])
        pad = indent + "  " * len(open_path)
        lines.append(f"{pad}<{leaf}>{escape(value)}</{leaf}>")
    for depth in range(len(open_path) - 1, -1, -1):
        lines.append(f"{indent}{'  ' * depth}</{open_path[depth]}>")
    return lines


def _event_to_xml(e: Event, indent: str = "      ") -> list[str]:
    i1, i2, i3 = indent + "  ", indent + "    ", indent + "      "
    out = [f"{indent}<{e.event_type}>", f"{i1}<eventTime>{escape(e.event_time)}</eventTime>"]
    if e.record_time is not None:
        out.append(f"{i1}<recordTime>{escape(e.record_time)}</recordTime>")
    out.append(f"{i1}<eventTimeZoneOffset>{escape(e.event_time_zone_offset)}</eventTimeZoneOffset>")
    for tag, values in (("epcList", e.epc_list), ("inputEPCList", e.input_epcs),
                        ("outputEPCList", e.output_epcs)):
        if values:
            out.append(f"{i1}<{tag}>")
            out.extend(f"{i2}<epc>{escape(v)}</epc>" for v in values)
            out.append(f"{i1}</{tag}>")
    out.append(f"{i1}<action>{escape(e.action)}</action>")
    out.append(f"{i1}<bizStep>{escape(e.biz_step)}</bizStep>")
    if e.disposition is not None:
        out.append(f"{i1}<disposition>{escape(e.disposition)}</disposition>")
    if e.read_point is not None:
        out += [f"{i1}<readPoint>", f"{i2}<id>{escape(e.read_point)}</id>", f"{i1}</readPoint>"]
    if e.biz_transactions:
        out.append(f"{i1}<bizTransactionList>")
        out.extend(
            f"{i2}<bizTransaction type={quoteattr(t)}>{escape(v)}</bizTransaction>"
            for t, v in e.biz_transactions
        )
        out.append(f"{i1}</bizTransactionList>")
    if e.sources or e.destinations:
        out.append(f"{i1}<extension>")
        for tag, item, pairs in (("sourceList", "source", e.sources),
                                 ("destinationList", "destination", e.destinations)):
            if pairs:
                out.append(f"{i2}<{tag}>")
                out.extend(f"{i3}<{item} type={quoteattr(t)}>{escape(v)}</{item}>" for t, v in pairs)
                out.append(f"{i2}</{tag}>")
        out.append(f"{i1}</extension>")
    out.extend(_write_extensions(e.extensions, i1))
    out.append(f"{indent}</{e.event_type}>")
    return out


def serialize_xml(events: Sequence[Event], namespaces: dict[str, str] | None = None) -> bytes:
    """Render an EPCIS 1.2 document. Extension prefixes without a known
    namespace are bound to a placeholder URN."""
    namespaces = dict(namespaces or {})
    for e in events:
        for key, _ in e.extensions:
            for part in key.split("/"):
                if ":" in part:
                    prefix = part.split(":", 1)[0]
                    namespaces.setdefault(prefix, _ext_namespace(prefix))
    decls = "".join(f" xmlns:{p}={quoteattr(u)}" for p, u in sorted(namespaces.items()))
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<epcis:EPCISDocument xmlns:epcis="urn:epcglobal:epcis:xsd:1"{decls} schemaVersion="1.2">',
        "  <EPCISBody>",
    ]
    if events:
        lines.append("    <EventList>")
        for e in events:
            lines.extend(_event_to_xml(e))
        lines.append("    </EventList>")
    else:
        lines.append("    <EventList/>")
    lines += ["  </EPCISBody>", "</epcis:EPCISDocument>", ""]
    return "\n".join(lines).encode("utf-8")


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

_PAIR_KEYS = {
    "bizTransactionList": "bizTransaction",
    "sourceList": "source",
    "destinationList": "destination",
}


def event_to_dict(e: Event) -> dict[str, Any]:
    d: dict[str, Any] = {"eventType": e.event_type, "eventTime": e.event_time}
    if e.record_time is not None:
        d["recordTime"] = e.record_time
    d["eventTimeZoneOffset"] = e.event_time_zone_offset
    d["epcList"] = list(e.epc_list)
    if e.event_type == ASSEMBLY_EVENT or e.input_epcs or e.output_epcs:
        d["inputEPCList"] = list(e.input_epcs)
        d["outputEPCList"] = list(e.output_epcs)
    d["action"] = e.action
    d["bizStep"] = e.biz_step
    if e.disposition is not None:
        d["disposition"] = e.disposition
    if e.read_point is not None:
        d["readPoint"] = e.read_point
    for name, pairs in (("bizTransactionList", e.biz_transactions),
                        ("sourceList", e.sources), ("destinationList", e.destinations)):
        d[name] = [{"type": t, _PAIR_KEYS[name]: v} for t, v in pairs]
    if e.extensions:
        d["extensions"] = [{"key": k, "value": v} for k, v in e.extensions]
    return d


def _expect(value: Any, kind: type, path: str) -> Any:
    if not isinstance(value, kind):
        raise EventSchemaError(path, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _str_list(value: Any, path: str) -> tuple[str, ...]:
    items = _expect(value, list, path)
    return tuple(_expect(v, str, f"{path}[{i}]") for i, v in enumerate(items))


def event_from_dict(d: Any, path: str = "$") -> Event:
    d = _expect(d, dict, path)
    required = ("eventType", "eventTime", "eventTimeZoneOffset", "action", "bizStep")
    for key in required:
        if key not in d:
            raise EventSchemaError(f"{path}.{key}", "missing required field")
    known = set(required) | {
        "recordTime", "epcList", "inputEPCList", "outputEPCList", "disposition",
        "readPoint", "bizTransactionList", "sourceList", "destinationList", "extensions",
    }
    for key in d:
        if key not in known:
            raise EventSchemaError(f"{path}.{key}", "unknown field")

    def opt_str(key: str) -> str | None:
        return None if d.get(key) is None else _expect(d[key], str, f"{path}.{key}")

    def pairs(key: str) -> tuple[Pair, ...]:
        items = _expect(d.get(key, []), list, f"{path}.{key}")
        out = []
        for i, item in enumerate(items):
            p = f"{path}.{key}[{i}]"
            item = _expect(item, dict, p)
            inner = _PAIR_KEYS[key]
            if set(item) != {"type", inner}:
                raise EventSchemaError(p, f"expected keys 'type' and {inner!r}")
            out.append((_expect(item["type"], str, f"{p}.type"),
                        _expect(item[inner], str, f"{p}.{inner}")))
        return tuple(out)

    ext_items = _expect(d.get("extensions", []), list, f"{path}.extensions")
    ext = []
    for i, item in enumerate(ext_items):
        p = f"{path}.extensions[{i}]"
        item = _expect(item, dict, p)
        if set(item) != {"key", "value"}:
            raise EventSchemaError(p, "expected keys 'key' and 'value'")
        ext.append((_expect(item["key"], str, f"{p}.key"), _expect(item["value"], str, f"{p}.value")))

    return Event(
        event_type=_expect(d["eventType"], str, f"{path}.eventType"),
        event_time=_expect(d["eventTime"], str, f"{path}.eventTime"),
        event_time_zone_offset=_expect(d["eventTimeZoneOffset"], str, f"{path}.eventTimeZoneOffset"),
        action=_expect(d["action"], str, f"{path}.action"),
        biz_step=_expect(d["bizStep"], str, f"{path}.bizStep"),
        epc_list=_str_list(d.get("epcList", []), f"{path}.epcList"),
        input_epcs=_str_list(d.get("inputEPCList", []), f"{path}.inputEPCList"),
        output_epcs=_str_list(d.get("outputEPCList", []), f"{path}.outputEPCList"),
        record_time=opt_str("recordTime"),
        disposition=opt_str("disposition"),
        read_point=opt_str("readPoint"),
        biz_transactions=pairs("bizTransactionList"),
        sources=pairs("sourceList"),
        destinations=pairs("destinationList"),
        extensions=tuple(ext),
    )


def serialize_json(events: Sequence[Event], indent: int | None = 2) -> bytes:
    return json.dumps([event_to_dict(e) for e in events], indent=indent,
                      ensure_ascii=False).encode("utf-8")


def serialize_ndjson(events: Sequence[Event]) -> bytes:
    return b"".join(
        json.dumps(event_to_dict(e), ensure_ascii=False, separators=(",", ":")).encode("utf-8") + b"\n"
        for e in events
    )


def parse_event_json(data: bytes | str) -> list[Event]:
    """Parse a JSON array of events (or ``{"eventList": [...]}``)."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EventParseError(f"malformed JSON: {exc}") from None
    path = "$"
    if isinstance(doc, dict) and "eventList" in doc:
        doc, path = doc["eventList"], "$.eventList"
    items = _expect(doc, list, path)
    return [event_from_dict(item, f"{path}[{i}]") for i, item in enumerate(items)]


def parse_event_ndjson(data: bytes | str) -> list[Event]:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EventParseError(f"undecodable NDJSON input: {exc}") from None
    events = []
    for n, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventParseError(f"line {n}: malformed JSON: {exc}") from None
        events.append(event_from_dict(doc, f"line {n}"))
    return events


def load_events(data: bytes) -> list[Event]:
    """Decode XML, a JSON array, or NDJSON, detected from the first byte."""
    head = data.lstrip()[:1]
    if head == b"<":
        return parse_event_xml(data)
    if head == b"[":
        return parse_event_json(data)
    stripped = data.lstrip()
    if stripped.startswith(b'{"eventList"'):
        return parse_event_json(data)
    return parse_event_ndjson(data)
