from __future__ import annotations

import json
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from anontrace.events import (
    ASSEMBLY_EVENT,
    EventParseError,
    EventSchemaError,
    SkippedEventWarning,
    event_from_dict,
    event_to_dict,
    load_events,
    parse_event_json,
    parse_event_ndjson,
    parse_event_xml,
    parse_timestamp,
    serialize_json,
    serialize_ndjson,
    serialize_xml,
    validate,
)
from conftest import FIXTURES, PO, SOURCE, SSCC
from strategies import events


def test_shipping_fixture_fields(shipping_event):
    e = shipping_event
    assert e.event_type == "ObjectEvent"
    assert e.event_time == "2021-04-28T00:00:00.000+02:00"
    assert e.event_time_zone_offset == "+02:00"
    assert e.epc_list == (SSCC,)
    assert e.action == "OBSERVE"
    assert e.biz_step == "urn:epcglobal:cbv:bizstep:shipping"
    assert e.disposition == "urn:epcglobal:cbv:disp:in_transit"
    assert e.read_point == "urn:epc:id:sgln:4023333.00002.0"
    assert e.biz_transactions == (("urn:epcglobal:cbv:btt:po", PO),)
    assert e.sources == (("urn:epcglobal:cbv:sdt:possessing_party", SOURCE),)
    assert validate(e).ok and not validate(e).errors


def test_receiving_fixture_is_receiving(receiving_event):
    assert receiving_event.biz_step.endswith("receiving")
    assert receiving_event.epc_list == (SSCC,)


def test_event_list_wrapper_and_extensions():
    xml = b"""<?xml version="1.0"?>
<epcis:EPCISDocument xmlns:epcis="urn:epcglobal:epcis:xsd:1" xmlns:example="http://ns.example.com/epcis">
  <EPCISBody><EventList>
    <ObjectEvent>
      <eventTime>2021-04-28T00:00:00.000+02:00</eventTime>
      <eventTimeZoneOffset>+02:00</eventTimeZoneOffset>
      <epcList><epc>urn:epc:id:sgtin:1.2.3</epc></epcList>
      <action>ADD</action>
      <bizStep>urn:epcglobal:cbv:bizstep:commissioning</bizStep>
      <example:myField1>secret</example:myField1>
      <example:nested><example:inner>x</example:inner></example:nested>
    </ObjectEvent>
  </EventList></EPCISBody>
</epcis:EPCISDocument>"""
    (e,) = parse_event_xml(xml)
    assert ("example:myField1", "secret") in e.extensions
    assert ("example:nested/example:inner", "x") in e.extensions


def test_unknown_event_type_skipped_with_warning():
    xml = b"<EventList><TransformationEvent/><ObjectEvent>" \
          b"<eventTime>2021-01-01T00:00:00.000Z</eventTime><eventTimeZoneOffset>+00:00</eventTimeZoneOffset>" \
          b"<epcList><epc>urn:x:1</epc></epcList><action>ADD</action><bizStep>urn:b</bizStep></ObjectEvent></EventList>"
    with pytest.warns(SkippedEventWarning):
        out = parse_event_xml(xml)
    assert len(out) == 1


def test_malformed_xml_reports_position():
    with pytest.raises(EventParseError) as info:
        parse_event_xml(b"<ObjectEvent>\n  <eventTime>oops</ObjectEvent>")
    assert info.value.line == 2


def test_assembly_round_trip():
    e = event_from_dict({
        "eventType": ASSEMBLY_EVENT, "eventTime": "2022-01-01T10:00:00.000+01:00",
        "eventTimeZoneOffset": "+01:00", "action": "ADD", "bizStep": "urn:epcglobal:cbv:bizstep:assembling",
        "inputEPCList": ["urn:a:1", "urn:a:2"], "outputEPCList": ["urn:p:1"],
    })
    assert validate(e).ok
    assert parse_event_xml(serialize_xml([e])) == [e]
    assert parse_event_json(serialize_json([e])) == [e]


def test_validation_errors(shipping_event):
    bad = shipping_event.replace(epc_list=(), event_time_zone_offset="+05:00")
    paths = {p for p, _ in validate(bad).errors}
    assert {"epcList", "eventTimeZoneOffset"} <= paths
    assert not validate(shipping_event.replace(event_time="yesterday")).ok
    assert not validate(shipping_event.replace(action="MOVE")).ok
    no_output = shipping_event.replace(event_type=ASSEMBLY_EVENT, epc_list=())
    assert "outputEPCList" in {p for p, _ in validate(no_output).errors}


def test_timestamp_z_suffix():
    assert parse_timestamp("2021-04-28T00:00:00.000Z").utcoffset().total_seconds() == 0
    with pytest.raises(ValueError):
        parse_timestamp("2021-04-28T00:00:00")


def test_json_is_strict():
    with pytest.raises(EventSchemaError):
        event_from_dict({"eventType": "ObjectEvent"})
    with pytest.raises(EventSchemaError):
        parse_event_json(json.dumps([{"eventType": "ObjectEvent", "bogus": 1}]))


def test_load_events_detects_format(shipping_event):
    for blob in (serialize_xml([shipping_event]), serialize_json([shipping_event]),
                 serialize_ndjson([shipping_event])):
        assert load_events(blob) == [shipping_event]


def test_empty_list_serialisation():
    assert parse_event_xml(serialize_xml([])) == []
    assert parse_event_ndjson(serialize_ndjson([])) == []


@settings(max_examples=150, deadline=None)
@given(st.lists(events(), max_size=3))
def test_xml_and_json_round_trip(evs):
    assert parse_event_xml(serialize_xml(evs)) == evs
    assert parse_event_json(serialize_json(evs)) == evs
    assert parse_event_ndjson(serialize_ndjson(evs)) == evs
    assert [event_from_dict(event_to_dict(e)) for e in evs] == evs


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400) | st.text(max_size=400).map(str.encode))
def test_parser_is_total(blob):
    # arbitrary input yields events or a typed error, never anything else
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for parse in (parse_event_xml, parse_event_json, parse_event_ndjson, load_events):
            try:
                parse(blob)
            except (EventParseError, EventSchemaError):
                pass


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2000))
def test_truncated_fixture_is_total(n):
    blob = (FIXTURES / "shipping_event.xml").read_bytes()[:n]
    try:
        parse_event_xml(blob)
    except (EventParseError, EventSchemaError):
        pass
