"""Why party identifiers are salted.

Company prefixes are public and few, so anyone can hash every plausible
party identifier and look the digests up. Salting with the transaction
reference, which only the two trading partners know, defeats this.
"""

from __future__ import annotations

import warnings

from anontrace import simulator
from anontrace.audit import dictionary_attack
from anontrace.sanitiser import SaltFallbackWarning, SaltSource, SanitiserConfig, sanitise


def party_digests(events, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaltFallbackWarning)
        out = [sanitise(e, cfg) for e in events]
    return {n.digest_hex for s in out for n in s.source_list + s.destination_list}


def main() -> None:
    events = simulator.generate(simulator.default_spec(product_count=5))
    # a sample of the 7-digit prefix space plus the real ones; a full sweep is
    # only 10^7 hashes and works the same way
    prefixes = set(range(0, 10**7, 1000)) | {a.party.split(":")[-1].split(".")[0] for a in simulator.DEFAULT_ACTORS}
    dictionary = [f"urn:epc:id:pgln:{int(n):07d}.00000" for n in prefixes]
    print(f"dictionary size: {len(dictionary)}")

    for label, cfg in (
        ("unsalted", SanitiserConfig("https://d.example/dd", SaltSource.NONE)),
        ("salted", SanitiserConfig("https://d.example/dd")),
    ):
        result = dictionary_attack(party_digests(events, cfg), dictionary)
        print(f"{label:>8}: {len(result.recovered)}/{result.targets} party digests recovered")
        for value in sorted(set(result.recovered.values()))[:3]:
            print(f"          e.g. {value}")


if __name__ == "__main__":
    main()
