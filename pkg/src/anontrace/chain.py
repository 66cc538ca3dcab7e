"""Chain-of-custody verification over sanitised events only.

Given the digest of an item, the history of events mentioning it is fetched
from a discovery store and every shipping event is paired with a receiving
event carrying the same item, source, destination and transaction digests.
Assembly events lead on to the component digests they consumed.

Party digests are salted with the transaction reference, so party digests
from two different hops normally cannot be compared. Hop-to-hop continuity
is therefore only checked where consecutive hops share a transaction (or
neither has one); otherwise it is reported as unverifiable (``None``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Protocol, Sequence

from .events import ASSEMBLY_EVENT
from .ni import NiUri, normalise_digest
from .sanitiser import SanitisedEvent

COMPLETE, BROKEN, UNKNOWN = "Complete", "Broken", "Unknown"

_PARTY_TYPES = ("possessing_party", "owning_party")


@dataclass(frozen=True)
class BizStepVocabulary:
    shipping: frozenset[str] = frozenset({
        "urn:epcglobal:cbv:bizstep:shipping",
        "urn:epcglobal:cbv:bizstep:departing",
        "https://ns.gs1.org/cbv/BizStep-shipping",
        "https://ns.gs1.org/cbv/BizStep-departing",
    })
    receiving: frozenset[str] = frozenset({
        "urn:epcglobal:cbv:bizstep:receiving",
        "urn:epcglobal:cbv:bizstep:accepting",
        "urn:epcglobal:cbv:bizstep:arriving",
        "https://ns.gs1.org/cbv/BizStep-receiving",
        "https://ns.gs1.org/cbv/BizStep-accepting",
        "https://ns.gs1.org/cbv/BizStep-arriving",
    })
    commissioning: frozenset[str] = frozenset({
        "urn:epcglobal:cbv:bizstep:commissioning",
        "https://ns.gs1.org/cbv/BizStep-commissioning",
    })


DEFAULT_VOCABULARY = BizStepVocabulary()


class EventSource(Protocol):
    def query_by_hash(self, h: NiUri | str) -> list[SanitisedEvent]: ...


@dataclass(frozen=True)
class CustodyLink:
    ship_event_id: NiUri
    receive_event_id: NiUri
    item_digest: str
    from_party_digest: str | None
    to_party_digest: str | None
    transaction_digest: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "shipEventId": str(self.ship_event_id),
            "receiveEventId": str(self.receive_event_id),
            "itemDigest": self.item_digest,
            "fromPartyDigest": self.from_party_digest,
            "toPartyDigest": self.to_party_digest,
            "transactionDigest": self.transaction_digest,
        }


@dataclass(frozen=True)
class Gap:
    kind: str  # unmatched_shipping | unmatched_receiving | missing_origin | discontinuity
    event_id: str | None
    detail: str

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "eventId": self.event_id, "detail": self.detail}


@dataclass(frozen=True)
class ChainVerdict:
    status: str
    item_digest: str
    links: tuple[CustodyLink, ...] = ()
    origin_event_id: str | None = None
    terminal_event_id: str | None = None
    gaps: tuple[Gap, ...] = ()
    conditions: dict[str, bool | None] = field(default_factory=dict)
    component_verdicts: dict[str, ChainVerdict] = field(default_factory=dict)
    reason: str | None = None

    @property
    def gap(self) -> Gap | None:
        return self.gaps[0] if self.gaps else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "itemDigest": self.item_digest,
            "originEventId": self.origin_event_id,
            "terminalEventId": self.terminal_event_id,
            "conditions": dict(self.conditions),
            "links": [link.to_dict() for link in self.links],
            "gaps": [g.to_dict() for g in self.gaps],
            "reason": self.reason,
            "componentVerdicts": {d: v.to_dict() for d, v in self.component_verdicts.items()},
        }


def _typed(nis: Iterable[NiUri]) -> set[tuple[str, str | None]]:
    return {(n.digest_hex, n.query_suffix) for n in nis}


def _pick_party(shared: set[tuple[str, str | None]]) -> str | None:
    if not shared:
        return None
    ranked = sorted(shared, key=lambda p: (not any(t in (p[1] or "") for t in _PARTY_TYPES), p))
    return ranked[0][0]


def fetch_history(h: NiUri | str, store: EventSource) -> list[SanitisedEvent]:
    """Events carrying ``h`` as an item (not as a party or transaction)."""
    digest = h.digest_hex if isinstance(h, NiUri) else normalise_digest(h)
    events = [e for e in store.query_by_hash(digest) if digest in e.item_digests()]
    return sorted(events, key=lambda e: (e.instant, str(e.event_id)))


def _link(ship: SanitisedEvent, receive: SanitisedEvent) -> CustodyLink | None:
    """Return the link if ``receive`` can close ``ship``, else None."""
    items = ship.item_digests() & receive.item_digests()
    if not items or receive.instant < ship.instant:
        return None
    sources = _typed(ship.source_list) & _typed(receive.source_list)
    destinations = _typed(ship.destination_list) & _typed(receive.destination_list)
    if not sources or not destinations:
        return None
    tx_ship, tx_recv = _typed(ship.biz_transaction_list), _typed(receive.biz_transaction_list)
    shared_tx = tx_ship & tx_recv
    if tx_ship and tx_recv and not shared_tx:
        return None
    return CustodyLink(
        ship_event_id=ship.event_id,
        receive_event_id=receive.event_id,
        item_digest=sorted(items)[0],
        from_party_digest=_pick_party(sources),
        to_party_digest=_pick_party(destinations),
        transaction_digest=min(shared_tx)[0] if shared_tx else None,
    )


def match_pairs(
    events: Sequence[SanitisedEvent],
    vocabulary: BizStepVocabulary = DEFAULT_VOCABULARY,
) -> tuple[list[CustodyLink], list[SanitisedEvent]]:
    """Pair shipping with receiving events, earliest first.

    Events are swept in time order (shipping before receiving on ties). Each
    receiving event closes the earliest open compatible shipping event,
    preferring one with a shared transaction digest. Returns the links and
    the shipping/receiving events left unpaired.
    """
    def key(e: SanitisedEvent):
        return (e.instant, 0 if e.biz_step in vocabulary.shipping else 1, str(e.event_id))

    open_ships: list[SanitisedEvent] = []
    links: list[CustodyLink] = []
    unmatched: list[SanitisedEvent] = []
    for e in sorted(events, key=key):
        if e.biz_step in vocabulary.shipping:
            open_ships.append(e)
        elif e.biz_step in vocabulary.receiving:
            candidates = [(s, _link(s, e)) for s in open_ships]
            candidates = [(s, link) for s, link in candidates if link is not None]
            if not candidates:
                unmatched.append(e)
                continue
            # stable sort keeps earliest-first within each preference class
            candidates.sort(key=lambda c: c[1].transaction_digest is None)
            ship, link = candidates[0]
            open_ships.remove(ship)
            links.append(link)
    unmatched.extend(open_ships)
    unmatched.sort(key=key)
    return links, unmatched


def _continuity(links: Sequence[CustodyLink]) -> tuple[bool | None, list[Gap]]:
    verdict: bool | None = True
    gaps: list[Gap] = []
    for a, b in zip(links, links[1:]):
        if a.to_party_digest is None or b.from_party_digest is None:
            continue
        if a.transaction_digest != b.transaction_digest:
            # different salts: party digests are not comparable across these hops
            if verdict is True:
                verdict = None
            continue
        if a.to_party_digest != b.from_party_digest:
            verdict = False
            gaps.append(Gap(
                "discontinuity", str(b.ship_event_id),
                f"receiver of {a.receive_event_id} is not the shipper of {b.ship_event_id}",
            ))
    return verdict, gaps


def verify_chain(
    h: NiUri | str,
    store: EventSource,
    recurse: bool = False,
    vocabulary: BizStepVocabulary = DEFAULT_VOCABULARY,
    _seen: frozenset[str] = frozenset(),
) -> ChainVerdict:
    digest = h.digest_hex if isinstance(h, NiUri) else normalise_digest(h)
    history = fetch_history(digest, store)
    if not history:
        return ChainVerdict(UNKNOWN, digest, reason="no events found")

    first = history[0]
    has_origin = first.biz_step in vocabulary.commissioning or (
        first.event_type == ASSEMBLY_EVENT and digest in {n.digest_hex for n in first.output_epcs}
    )
    links, unmatched = match_pairs(history, vocabulary)
    links.sort(key=lambda link: _position(history, link.ship_event_id))
    continuity, gaps = _continuity(links)

    all_gaps: list[Gap] = []
    if not has_origin:
        all_gaps.append(Gap("missing_origin", str(first.event_id),
                            "earliest event is neither commissioning nor assembly"))
    for e in unmatched:
        kind = "unmatched_shipping" if e.biz_step in vocabulary.shipping else "unmatched_receiving"
        all_gaps.append(Gap(kind, str(e.event_id), f"{e.biz_step} at {e.event_time} has no counterpart"))
    all_gaps.extend(gaps)

    components: dict[str, ChainVerdict] = {}
    if recurse:
        seen = _seen | {digest}
        for e in history:
            if e.event_type == ASSEMBLY_EVENT and digest in {n.digest_hex for n in e.output_epcs}:
                for n in e.input_epcs:
                    if n.digest_hex not in seen and n.digest_hex not in components:
                        components[n.digest_hex] = verify_chain(
                            n.digest_hex, store, True, vocabulary, seen
                        )

    return ChainVerdict(
        status=BROKEN if all_gaps else COMPLETE,
        item_digest=digest,
        links=tuple(links),
        origin_event_id=str(first.event_id) if has_origin else None,
        terminal_event_id=str(history[-1].event_id),
        gaps=tuple(all_gaps),
        conditions={"origin": has_origin, "all_matched": not unmatched, "continuity": continuity},
        component_verdicts=components,
    )


def _position(history: Sequence[SanitisedEvent], event_id: NiUri) -> int:
    for i, e in enumerate(history):
        if e.event_id == event_id:
            return i
    return len(history)
