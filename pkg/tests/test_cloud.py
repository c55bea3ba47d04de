import pytest

from seccost.catalogue import FakeResourceSource
from seccost.channel import ChannelConfig, Mode, open_channel
from seccost.cloud import (
    AccessControlList,
    LocalCloud,
    ServiceRegistration,
    ServiceRegistry,
    authorise,
    orchestrate,
    register,
)
from seccost.framing import Frame, decode_kv, encode_kv
from seccost.model import ComponentId
from seccost.tracer import Tracer

C1 = ComponentId("C1", ("127.0.0.1", 5601))
FW = ComponentId("IoT-Framework", ("127.0.0.1", 5600))


def reg(provider=C1, t=0, service="temperature"):
    return ServiceRegistration(service, provider, t)


def test_register_and_search():
    r = ServiceRegistry()
    register(r, reg())
    assert r.search("temperature") == [C1]
    register(r, reg(t=99))
    assert len(r) == 1 and r.search("temperature") == [C1]
    assert r.search("humidity") == []


def test_search_deterministic_with_several_providers():
    r = ServiceRegistry()
    other = ComponentId("C9", ("127.0.0.1", 5609))
    register(r, reg())
    register(r, reg(other))
    register(r, reg(t=5))
    assert r.search("temperature") == [C1, other] == r.search("temperature")


def test_authorise():
    acl = AccessControlList([("C2", "temperature")])
    assert authorise(acl, "C2", "temperature")
    assert not authorise(acl, "C1", "temperature")
    assert not authorise(AccessControlList(), "C2", "temperature")


def fw_tracer():
    return Tracer(FW, FakeResourceSource())


def test_orchestrate_success():
    r, tr = ServiceRegistry(), fw_tracer()
    register(r, reg())
    reply = orchestrate(r, AccessControlList([("C2", "temperature")]), "C2", "temperature", interaction="x", tracer=tr)
    assert reply.message_type == "ORCH_RESPONSE"
    assert decode_kv(reply.payload) == {"provider": "C1", "endpoint": "127.0.0.1:5601"}
    names = [t.task.name for t in tr.traces]
    assert names == ["authorise", "lookup"]
    a, l = tr.traces.for_interaction("x")
    assert a.start_monotonic_ns < l.start_monotonic_ns


def test_orchestrate_unauthorised_skips_lookup():
    r, tr = ServiceRegistry(), fw_tracer()
    register(r, reg())
    reply = orchestrate(r, AccessControlList(), "C2", "temperature", interaction="x", tracer=tr)
    assert (reply.message_type, reply.payload) == ("ERROR", b"not authorised")
    assert [t.task.name for t in tr.traces] == ["authorise"]


def test_orchestrate_no_provider():
    tr = fw_tracer()
    reply = orchestrate(ServiceRegistry(), AccessControlList([("C2", "temperature")]), "C2", "temperature",
                        interaction="x", tracer=tr)
    assert (reply.message_type, reply.payload) == ("ERROR", b"no provider")
    assert [t.task.name for t in tr.traces] == ["authorise", "lookup"]


@pytest.mark.parametrize("mode", [Mode.INSECURE, Mode.SECURE])
def test_local_cloud_over_loopback(mode):
    cfg = ChannelConfig(mode, bytes(32) if mode is Mode.SECURE else None)
    tr = fw_tracer()
    with LocalCloud(cfg, AccessControlList([("C2", "temperature")]), tracer=tr).start() as cloud:
        with open_channel(cfg, cloud.address, sender="C1", interaction="x") as ch:
            ok = ch.request(Frame("REGISTER", "x", "C1",
                                  encode_kv({"service": "temperature", "provider": "C1", "endpoint": "127.0.0.1:5601"})))
            assert ok.message_type == "REGISTER_OK"
            bad = ch.request(Frame("REGISTER", "x", "C1", encode_kv({"service": "temperature", "provider": "C1",
                                                                     "endpoint": "localhost:http"})))
            assert bad.message_type == "ERROR" and b"malformed" in bad.payload
            stray = ch.request(Frame("MEASURE_REQUEST", "x", "C1"))
            assert stray.message_type == "ERROR"
        with open_channel(cfg, cloud.address, sender="C2", interaction="y") as ch:
            orch = ch.request(Frame("ORCH_REQUEST", "y", "C2", encode_kv({"consumer": "C2", "service": "temperature"})))
            denied = ch.request(Frame("ORCH_REQUEST", "y", "C2", encode_kv({"consumer": "C1", "service": "temperature"})))
        assert orch.message_type == "ORCH_RESPONSE" and denied.payload == b"not authorised"
    # One authorise per ORCH_REQUEST whatever the outcome.
    use_case = lambda iid: [t.task.name for t in tr.traces.for_interaction(iid) if t.task.name not in
                            ("handshake", "encrypt", "decrypt")]
    assert use_case("y") == ["authorise", "lookup", "authorise"]
    assert use_case("x") == ["register", "register"]
