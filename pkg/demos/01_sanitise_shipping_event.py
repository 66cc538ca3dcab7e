"""Sanitise a single EPCIS shipping event and show what survives.

Run: python demos/01_sanitise_shipping_event.py
"""

from __future__ import annotations

from anontrace.events import parse_event_xml
from anontrace.sanitiser import SanitiserConfig, attribute_paths, classify, sanitise

SHIPPING_EVENT = b"""<ObjectEvent>
  <eventTime>2021-04-28T00:00:00.000+02:00</eventTime>
  <eventTimeZoneOffset>+02:00</eventTimeZoneOffset>
  <epcList><epc>urn:epc:id:sscc:4023333.0222222222</epc></epcList>
  <action>OBSERVE</action>
  <bizStep>urn:epcglobal:cbv:bizstep:shipping</bizStep>
  <disposition>urn:epcglobal:cbv:disp:in_transit</disposition>
  <readPoint><id>urn:epc:id:sgln:4023333.00002.0</id></readPoint>
  <bizTransactionList>
    <bizTransaction type="urn:epcglobal:cbv:btt:po">urn:epc:id:gdti:0614141.00002.PO-123</bizTransaction>
  </bizTransactionList>
  <extension>
    <sourceList>
      <source type="urn:epcglobal:cbv:sdt:possessing_party">urn:epc:id:pgln:4023333.00000</source>
    </sourceList>
    <destinationList>
      <destination type="urn:epcglobal:cbv:sdt:possessing_party">urn:epc:id:pgln:0614141.00000</destination>
    </destinationList>
  </extension>
</ObjectEvent>"""


def main() -> None:
    (event,) = parse_event_xml(SHIPPING_EVENT)
    print("clear-text attributes and their buckets:")
    for path, value in attribute_paths(event):
        print(f"  {classify(path).value:<11} {path:<28} {value}")

    public = sanitise(event, SanitiserConfig("https://discovery.epcat.de/dead_drop"))
    print("\npublished to discovery:")
    print(public.to_json())
    # the item digest can be reproduced with: echo -n "<epc>" | sha256sum


if __name__ == "__main__":
    main()
