from __future__ import annotations

import http.client
import json
from datetime import timedelta

import pytest

from anontrace.client import DiscoveryClient, ServiceError
from anontrace.deaddrop import AccessRequest
from anontrace.service import ServiceConfig
from conftest import FIXTURES, SSCC_DIGEST, start_service, stop_service


def raw(server, method, path, body=None, headers=None):
    host, port = server.server_address[:2]
    conn = http.client.HTTPConnection(host, port, timeout=5)
    try:
        conn.request(method, path, body=body, headers=headers or {})
        resp = conn.getresponse()
        return resp.status, resp.read(), dict(resp.getheaders())
    finally:
        conn.close()


def test_post_then_get(service, published_pair):
    client = DiscoveryClient(service.url)
    for e in published_pair:
        assert client.post_event(e) == (201, str(e.event_id))
    assert client.post_event(published_pair[0])[0] == 200
    assert client.query_by_hash(SSCC_DIGEST) == published_pair
    assert client.query_by_hash(SSCC_DIGEST.upper()) == published_pair
    assert client.query_by_hash("0" * 64) == []


def test_rejects_bad_bodies(service, published_pair):
    doc = published_pair[0].to_dict()
    doc["readPoint"] = "urn:epc:id:sgln:1.2.3"
    status, body, _ = raw(service, "POST", "/events", json.dumps(doc))
    assert status == 400 and b"readPoint" in body
    assert raw(service, "POST", "/events", b"{nope")[0] == 400
    assert raw(service, "GET", "/events?hash=xyz")[0] == 400
    assert raw(service, "GET", "/events")[0] == 400
    assert raw(service, "GET", "/nowhere?hash=" + SSCC_DIGEST)[0] == 404


def test_conflict(service, published_pair):
    a, b = published_pair
    DiscoveryClient(service.url).post_event(a)
    forged = {**b.to_dict(), "eventId": str(a.event_id)}
    assert raw(service, "POST", "/events", json.dumps(forged))[0] == 409


def test_body_limit(service):
    big = b"x" * (service.config.max_body + 1)
    status, _, _ = raw(service, "POST", "/events", big)
    assert status == 413


def test_no_identifying_headers(service):
    _, _, headers = raw(service, "GET", "/events?hash=" + SSCC_DIGEST)
    assert headers["Server"].strip() == "discovery"


def test_restart_is_byte_identical(tmp_path, published_pair):
    journal = tmp_path / "j.ndjson"
    server, thread = start_service(journal)
    try:
        for e in published_pair:
            DiscoveryClient(server.url).post_event(e)
        before = raw(server, "GET", "/events?hash=" + SSCC_DIGEST)[1]
    finally:
        stop_service(server, thread)
    server, thread = start_service(journal)
    try:
        after = raw(server, "GET", "/events?hash=" + SSCC_DIGEST)[1]
    finally:
        stop_service(server, thread)
    assert before == after and json.loads(after)


def test_dead_drop_endpoints(tmp_path, clock):
    server, thread = start_service(clock=clock)
    try:
        client = DiscoveryClient(server.url)
        r = AccessRequest.from_json((FIXTURES / "access_request.json").read_text())
        status, rid = client.post_request(r)
        assert status == 201
        assert client.post_request(r) == (200, rid)
        assert client.poll_requests(r.requesting) == [r]
        clock.moment = r.valid_until + timedelta(seconds=1)
        assert client.poll_requests(r.requesting) == []
        assert client.expire_sweep() == 1
        with pytest.raises(ServiceError) as info:
            client.post_request(r)
        assert info.value.status == 400
    finally:
        stop_service(server, thread)


def test_rate_limit(tmp_path, published_pair):
    server, thread = start_service(rate_limit=2)
    try:
        body = published_pair[0].to_json()
        codes = [raw(server, "POST", "/events", body)[0] for _ in range(3)]
        assert codes == [201, 200, 429]
    finally:
        stop_service(server, thread)


@pytest.mark.parametrize("kw", [{"sweep_interval": 0}, {"max_body": 10}, {"bind": "nohost"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ServiceConfig(**kw)
