"""Append-only discovery store of sanitised events, indexed by digest.

The journal is newline-delimited compact JSON, one sanitised event per line,
in insertion order. Submission metadata (``origin``, ``received_at``) lives
in memory only and is never returned by a query.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .ni import NiUri, normalise_digest
from .sanitiser import SanitisedEvent, SanitisedEventError


class StoreConflictError(ValueError):
    """A different event is already stored under the same event id."""


class JournalError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"journal line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class StoreRecord:
    event: SanitisedEvent
    received_at: datetime
    origin: str | None = None


class DiscoveryStore:
    """Thread-safe; writes are serialised and a query never observes a
    partially indexed event."""

    def __init__(self, journal: str | os.PathLike | None = None):
        self._lock = threading.Lock()
        self._records: dict[str, StoreRecord] = {}
        self._index: dict[str, frozenset[str]] = {}
        self._journal = Path(journal) if journal is not None else None
        if self._journal is not None and self._journal.exists():
            for event in _read_journal(self._journal):
                self._insert(event, origin=None)

    def __len__(self) -> int:
        return len(self._records)

    def put(self, e: SanitisedEvent, origin: str | None = None) -> NiUri:
        """Store ``e`` and return its event id. Idempotent for identical events."""
        return self.put_with_status(e, origin)[0]

    def put_with_status(self, e: SanitisedEvent, origin: str | None = None) -> tuple[NiUri, bool]:
        """Like :meth:`put`, also reporting whether the event was new."""
        if not isinstance(e, SanitisedEvent):
            raise TypeError("expected a SanitisedEvent")
        # round-trip through the strict decoder so malformed values are rejected
        e = SanitisedEvent.from_dict(e.to_dict())
        key = str(e.event_id)
        line = e.to_json(indent=None)
        with self._lock:
            existing = self._records.get(key)
            if existing is not None:
                if existing.event.to_json(indent=None) != line:
                    raise StoreConflictError(f"event id {key} already bound to different content")
                return e.event_id, False
            if self._journal is not None:
                with open(self._journal, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
            self._insert(e, origin)
        return e.event_id, True

    def _insert(self, e: SanitisedEvent, origin: str | None) -> None:
        key = str(e.event_id)
        self._records[key] = StoreRecord(e, datetime.now(timezone.utc), origin)
        for digest in e.digests():
            # replace rather than mutate: readers holding the old set stay consistent
            self._index[digest] = self._index.get(digest, frozenset()) | {key}

    def query_by_hash(self, h: NiUri | str) -> list[SanitisedEvent]:
        """Events mentioning digest ``h`` in an item, party or transaction list,
        ordered by (event time, event id)."""
        digest = h.digest_hex if isinstance(h, NiUri) else normalise_digest(h)
        with self._lock:
            events = [self._records[k].event for k in self._index.get(digest, ())]
        return sorted(events, key=lambda ev: (ev.instant, str(ev.event_id)))

    def events(self) -> list[SanitisedEvent]:
        with self._lock:
            return [r.event for r in self._records.values()]

    def snapshot(self, path: str | os.PathLike) -> None:
        """Write every event, in insertion order, as an NDJSON journal."""
        tmp = Path(path).with_suffix(Path(path).suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for e in self.events():
                fh.write(e.to_json(indent=None) + "\n")
        os.replace(tmp, path)

    @classmethod
    def restore(cls, path: str | os.PathLike) -> DiscoveryStore:
        store = cls()
        for e in _read_journal(Path(path)):
            store._insert(e, origin=None)
        return store

    @classmethod
    def from_events(cls, events: Iterable[SanitisedEvent]) -> DiscoveryStore:
        store = cls()
        for e in events:
            store.put(e)
        return store


def _read_journal(path: Path) -> list[SanitisedEvent]:
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        last = data.count(b"\n") + 1
        raise JournalError(last, "truncated record (no trailing newline)")
    events = []
    for n, raw in enumerate(data.split(b"\n")[:-1] if data else [], start=1):
        try:
            events.append(SanitisedEvent.from_dict(json.loads(raw)))
        except (json.JSONDecodeError, UnicodeDecodeError, SanitisedEventError) as exc:
            raise JournalError(n, str(exc)) from None
    return events
