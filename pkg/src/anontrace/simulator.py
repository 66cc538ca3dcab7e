"""Deterministic generator for a six-actor electronics supply network.

Suppliers ship components to a manufacturer, who assembles products and
ships them to retailers; at end of life a reseller takes the product back.
Each ship/receive pair shares one purchase-order reference, which doubles as
the salt for the party identifiers of that hop.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Any, Sequence

from .chain import DEFAULT_VOCABULARY
from .events import (
    ASSEMBLY_EVENT,
    OBJECT_EVENT,
    Event,
    format_timestamp,
    parse_timestamp,
    serialize_ndjson,
    serialize_xml,
)

ROLES = ("supplier", "manufacturer", "retailer", "reseller")
POSSESSING_PARTY = "urn:epcglobal:cbv:sdt:possessing_party"
PO = "urn:epcglobal:cbv:btt:po"
BIZSTEP = "urn:epcglobal:cbv:bizstep:"
DISP = "urn:epcglobal:cbv:disp:"


class FaultError(ValueError):
    pass


@dataclass(frozen=True)
class Actor:
    name: str
    party: str  # PGLN URI, e.g. urn:epc:id:pgln:4012345.00001
    role: str
    offset: str = "+01:00"

    @property
    def company(self) -> str:
        return self.party.rsplit(":", 1)[-1].split(".", 1)[0]

    @property
    def location(self) -> str:
        return f"urn:epc:id:sgln:{self.company}.00001.0"


DEFAULT_ACTORS = (
    Actor("Supplier A", "urn:epc:id:pgln:4012345.00000", "supplier", "+01:00"),
    Actor("Supplier B", "urn:epc:id:pgln:4023333.00000", "supplier", "+02:00"),
    Actor("Manufacturer C", "urn:epc:id:pgln:0614141.00000", "manufacturer", "+01:00"),
    Actor("Retailer D", "urn:epc:id:pgln:4000001.00000", "retailer", "+00:00"),
    Actor("Retailer E", "urn:epc:id:pgln:4000002.00000", "retailer", "+01:00"),
    Actor("Reseller F", "urn:epc:id:pgln:4000003.00000", "reseller", "+01:00"),
)


@dataclass(frozen=True)
class NetworkSpec:
    seed: int = 0
    actors: tuple[Actor, ...] = DEFAULT_ACTORS
    product_count: int = 1
    components_per_product: int = 2
    include_return_leg: bool = True
    start: str = "2022-03-01T08:00:00.000+01:00"

    def by_role(self, role: str) -> list[Actor]:
        return [a for a in self.actors if a.role == role]

    def check(self) -> None:
        parties = [a.party for a in self.actors]
        if len(set(parties)) != len(parties):
            raise ValueError("actor party URIs must be unique")
        for a in self.actors:
            if a.role not in ROLES:
                raise ValueError(f"unknown role {a.role!r} for {a.name}")
        if self.product_count < 0:
            raise ValueError("product_count must be >= 0")
        if self.components_per_product < 1:
            raise ValueError("components_per_product must be >= 1")
        if self.product_count:
            for role in ("supplier", "manufacturer", "retailer"):
                if not self.by_role(role):
                    raise ValueError(f"network needs at least one {role}")
            if len(self.by_role("manufacturer")) != 1:
                raise ValueError("network needs exactly one manufacturer")
            if self.include_return_leg and not self.by_role("reseller"):
                raise ValueError("return leg requires a reseller")
        parse_timestamp(self.start)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "actors": [vars(a).copy() for a in self.actors],
            "product_count": self.product_count,
            "components_per_product": self.components_per_product,
            "include_return_leg": self.include_return_leg,
            "start": self.start,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> NetworkSpec:
        d = dict(d)
        if "actors" in d:
            d["actors"] = tuple(Actor(**a) for a in d["actors"])
        return cls(**d)


def default_spec(seed: int = 2022, **overrides: Any) -> NetworkSpec:
    return NetworkSpec(seed=seed, **overrides)


@dataclass
class _Clock:
    rng: random.Random
    moment: Any

    def tick(self) -> Any:
        self.moment += timedelta(hours=self.rng.randint(1, 36), minutes=self.rng.randint(1, 59))
        return self.moment


@dataclass
class _Builder:
    spec: NetworkSpec
    rng: random.Random
    clock: _Clock
    events: list[Event] = field(default_factory=list)
    serials: set[int] = field(default_factory=set)

    def serial(self) -> int:
        while True:
            n = self.rng.randrange(10**9, 10**10)
            if n not in self.serials:
                self.serials.add(n)
                return n

    def stamp(self, actor: Actor) -> dict[str, str]:
        moment = self.clock.tick()
        recorded = moment + timedelta(seconds=self.rng.randint(1, 600))
        return {
            "event_time": format_timestamp(moment, actor.offset),
            "record_time": format_timestamp(recorded, actor.offset),
            "event_time_zone_offset": actor.offset,
        }

    def commission(self, actor: Actor, epc: str) -> None:
        self.events.append(Event(
            event_type=OBJECT_EVENT, action="ADD", biz_step=BIZSTEP + "commissioning",
            epc_list=(epc,), disposition=DISP + "active", read_point=actor.location,
            **self.stamp(actor),
        ))

    def hop(self, sender: Actor, receiver: Actor, epc: str) -> None:
        po = f"urn:epc:id:gdti:{receiver.company}.00002.PO-{self.rng.randrange(10**5, 10**6)}"
        common = {
            "epc_list": (epc,),
            "action": "OBSERVE",
            "biz_transactions": ((PO, po),),
            "sources": ((POSSESSING_PARTY, sender.party),),
            "destinations": ((POSSESSING_PARTY, receiver.party),),
        }
        self.events.append(Event(
            event_type=OBJECT_EVENT, biz_step=BIZSTEP + "shipping",
            disposition=DISP + "in_transit", read_point=sender.location,
            extensions=(("example:carrierRef", f"CR-{self.rng.randrange(10**7, 10**8)}"),),
            **common, **self.stamp(sender),
        ))
        self.events.append(Event(
            event_type=OBJECT_EVENT, biz_step=BIZSTEP + "receiving",
            disposition=DISP + "in_progress", read_point=receiver.location,
            **common, **self.stamp(receiver),
        ))

    def assemble(self, actor: Actor, inputs: Sequence[str], output: str) -> None:
        self.events.append(Event(
            event_type=ASSEMBLY_EVENT, action="ADD", biz_step=BIZSTEP + "assembling",
            input_epcs=tuple(inputs), output_epcs=(output,),
            disposition=DISP + "active", read_point=actor.location,
            **self.stamp(actor),
        ))


def sgtin(company: str, item_ref: int, serial: int) -> str:
    return f"urn:epc:id:sgtin:{company}.{item_ref:06d}.{serial}"


def generate(spec: NetworkSpec) -> list[Event]:
    """Clear-text events for the network, in generation order.

    Per component: commissioning, shipping, receiving. Per product: one
    assembly, a hop to a retailer and optionally a hop to the reseller.
    """
    spec.check()
    rng = random.Random(spec.seed)
    b = _Builder(spec, rng, _Clock(rng, parse_timestamp(spec.start)))
    if spec.product_count == 0:
        return []
    suppliers = spec.by_role("supplier")
    manufacturer = spec.by_role("manufacturer")[0]
    retailers = spec.by_role("retailer")
    resellers = spec.by_role("reseller")
    k = spec.components_per_product

    for p in range(spec.product_count):
        components = []
        for c in range(k):
            supplier = suppliers[(p * k + c) % len(suppliers)]
            epc = sgtin(supplier.company, 10 + c, b.serial())
            b.commission(supplier, epc)
            b.hop(supplier, manufacturer, epc)
            components.append(epc)
        product = sgtin(manufacturer.company, 1, b.serial())
        b.assemble(manufacturer, components, product)
        retailer = retailers[p % len(retailers)]
        b.hop(manufacturer, retailer, product)
        if spec.include_return_leg:
            b.hop(retailer, resellers[p % len(resellers)], product)
    return b.events


def product_epcs(events: Sequence[Event]) -> list[str]:
    """Output EPCs of every assembly event, in order."""
    return [epc for e in events if e.event_type == ASSEMBLY_EVENT for epc in e.output_epcs]


FAULT_KINDS = ("DropShip", "DropReceive", "TamperEpc")


def inject_fault(events: Sequence[Event], kind: str, index: int) -> list[Event]:
    """Remove or corrupt ``events[index]``, which must fit ``kind``."""
    if kind not in FAULT_KINDS:
        raise FaultError(f"unknown fault kind {kind!r}")
    if not 0 <= index < len(events):
        raise FaultError(f"no event at index {index}")
    target = events[index]
    out = list(events)
    if kind == "DropShip":
        if target.biz_step not in DEFAULT_VOCABULARY.shipping:
            raise FaultError(f"event {index} is not a shipping event")
        del out[index]
    elif kind == "DropReceive":
        if target.biz_step not in DEFAULT_VOCABULARY.receiving:
            raise FaultError(f"event {index} is not a receiving event")
        del out[index]
    else:
        if target.epc_list:
            field_name, values = "epc_list", target.epc_list
        elif target.output_epcs:
            field_name, values = "output_epcs", target.output_epcs
        else:
            raise FaultError(f"event {index} has no EPC to tamper with")
        epc = values[0]
        last = "1" if epc[-1] != "1" else "2"
        out[index] = target.replace(**{field_name: (epc[:-1] + last,) + values[1:]})
    return out


def write_dataset(events: Sequence[Event], out_dir: str | Path, spec: NetworkSpec | None = None) -> dict[str, Path]:
    """Write ``events.xml``, ``events.ndjson`` and a ``simulation.log`` summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "xml": out / "events.xml",
        "ndjson": out / "events.ndjson",
        "log": out / "simulation.log",
    }
    paths["xml"].write_bytes(serialize_xml(events))
    paths["ndjson"].write_bytes(serialize_ndjson(events))
    log = {
        "event_count": len(events),
        "seed": spec.seed if spec else None,
        "products": product_epcs(events),
    }
    paths["log"].write_text(json.dumps(log, indent=2) + "\n", encoding="utf-8")
    return paths
