"""Simulate the six-actor network, publish sanitised events, verify custody.

Then drop one receiving event and watch the verdict turn Broken.
"""

from __future__ import annotations

from anontrace import simulator
from anontrace.chain import verify_chain
from anontrace.ni import ni_hash
from anontrace.sanitiser import SanitiserConfig, sanitise
from anontrace.store import DiscoveryStore

CFG = SanitiserConfig("https://discovery.example/dead_drop")


def publish(events):
    return DiscoveryStore.from_events(sanitise(e, CFG) for e in events)


def show(verdict, indent="") -> None:
    print(f"{indent}{verdict.status:<8} {verdict.item_digest[:16]}... "
          f"links={len(verdict.links)} conditions={verdict.conditions}")
    for gap in verdict.gaps:
        print(f"{indent}  gap: {gap.kind}: {gap.detail}")
    for sub in verdict.component_verdicts.values():
        show(sub, indent + "  ")


def main() -> None:
    spec = simulator.default_spec()
    events = simulator.generate(spec)
    (product,) = simulator.product_epcs(events)
    print(f"{len(events)} events generated, product {product}")

    store = publish(events)
    show(verify_chain(ni_hash(product), store, recurse=True))

    last_receive = max(i for i, e in enumerate(events) if e.biz_step.endswith("receiving"))
    faulty = simulator.inject_fault(events, "DropReceive", last_receive)
    print(f"\nwithout event {last_receive} ({events[last_receive].biz_step}):")
    show(verify_chain(ni_hash(product), publish(faulty), recurse=True))


if __name__ == "__main__":
    main()
