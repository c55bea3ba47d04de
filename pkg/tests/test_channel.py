import os
import random
import socket
import struct
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seccost.catalogue import FakeResourceSource
from seccost.channel import (
    AEAD_OVERHEAD,
    AuthenticationError,
    ChannelConfig,
    HandshakeError,
    Mode,
    SecureSession,
    accept_channel,
    open_channel,
)
from seccost.framing import MESSAGE_TYPES, Frame, FrameDecoder, FrameError, peek_header
from seccost.model import ComponentId
from seccost.monitor import ProxyBinding, RecordSink, spawn_proxy
from seccost.tracer import Tracer

PSK = bytes(range(32))


# -- framing ---------------------------------------------------------------------


def test_message_types_closed():
    assert MESSAGE_TYPES == {"REGISTER", "REGISTER_OK", "ORCH_REQUEST", "ORCH_RESPONSE", "MEASURE_REQUEST",
                             "MEASURE_RESPONSE", "HELLO", "HELLO_OK", "ERROR"}
    with pytest.raises(FrameError):
        Frame("PING", "iid", "C1")


def test_frame_round_trip_and_prefix():
    f = Frame("MEASURE_RESPONSE", "abc123", "C1", b"25.3")
    wire = f.encode()
    (length,) = struct.unpack("!I", wire[:4])
    assert length == len(wire) - 4 == len(f.body())
    assert f.size == len(wire)
    assert Frame.decode(wire[4:]) == f
    assert peek_header(wire[4:]) == {"type": "MEASURE_RESPONSE", "interaction": "abc123", "sender": "C1",
                                     "encrypted": "0"}


def test_frame_decode_rejects_garbage():
    for body in (b"no terminator", b"type=NOPE\n\n", b"\xff\xfe\n\n"):
        with pytest.raises(FrameError):
            Frame.decode(body)
    assert peek_header(b"\x00\x01binary") is None


@settings(max_examples=50, deadline=None)
@given(st.lists(st.binary(max_size=300), min_size=1, max_size=20), st.integers(1, 50))
def test_decoder_splits_any_chunking(payloads, chunk):
    frames = [Frame("ERROR", f"i{n}", "C2", p).encode() for n, p in enumerate(payloads)]
    stream = b"".join(frames)
    dec, got = FrameDecoder(), []
    for i in range(0, len(stream), chunk):
        got.extend(dec.feed(stream[i:i + chunk]))
    assert got == frames and dec.pending == 0


# -- sessions ----------------------------------------------------------------------


def pair(psk_client=PSK, psk_server=PSK):
    cn, sn = os.urandom(16), os.urandom(16)
    return SecureSession(psk_client, cn, sn, "client"), SecureSession(psk_server, cn, sn, "server")


def test_seal_round_trip_thousand_payloads():
    client, server = pair()
    rng = random.Random(7)
    for _ in range(1000):
        p = rng.randbytes(rng.randrange(0, 2048))
        aad = rng.randbytes(rng.randrange(0, 40))
        wire = client.seal(p, aad)
        assert len(wire) - len(p) == AEAD_OVERHEAD == 28
        assert server.unseal(wire, aad) == p


def test_large_payload_round_trip():
    client, server = pair()
    p = os.urandom(64 * 1024)
    assert client.unseal(server.seal(p)) == p


def test_bit_flip_rejected():
    client, server = pair()
    wire = bytearray(client.seal(b"25.3", b"hdr"))
    for pos in (0, 12, len(wire) - 1):
        tampered = bytearray(wire)
        tampered[pos] ^= 0x01
        with pytest.raises(AuthenticationError):
            server.unseal(bytes(tampered), b"hdr")
    with pytest.raises(AuthenticationError):
        server.unseal(bytes(wire), b"other header")


def test_directional_keys_and_proof():
    client, server = pair()
    with pytest.raises(AuthenticationError):
        client.unseal(client.seal(b"x"))
    assert client.verify_proof(server.proof())
    bad_client, bad_server = pair(psk_client=os.urandom(32))
    assert not bad_client.verify_proof(bad_server.proof())


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(Mode.SECURE)
    with pytest.raises(ValueError):
        ChannelConfig(Mode.SECURE, b"short")
    assert ChannelConfig(Mode.INSECURE).overhead == 0
    assert ChannelConfig(Mode.SECURE, PSK).overhead == AEAD_OVERHEAD


# -- channels over loopback --------------------------------------------------------


class EchoServer:
    """Accepts connections and echoes every frame back through its channel."""

    def __init__(self, config, tracer=None):
        self.config = config
        self.tracer = tracer
        self.listener = socket.create_server(("127.0.0.1", 0))
        self.address = self.listener.getsockname()
        self.errors = []
        threading.Thread(target=self._serve, daemon=True).start()

    def _serve(self):
        while True:
            try:
                sock, _ = self.listener.accept()
            except OSError:
                return
            threading.Thread(target=self._handle, args=(sock,), daemon=True).start()

    def _handle(self, sock):
        try:
            ch = accept_channel(sock, self.config, sender="C1", tracer=self.tracer)
            if ch is None:
                sock.close()
                return
            while (frame := ch.recv()) is not None:
                ch.send(Frame("MEASURE_RESPONSE", frame.interaction, "C1", frame.payload))
        except Exception as exc:  # recorded for assertions
            self.errors.append(exc)
            sock.close()

    def close(self):
        self.listener.close()


def tracer_for(name):
    return Tracer(ComponentId(name, ("127.0.0.1", 7000 + len(name))), FakeResourceSource())


@pytest.mark.parametrize("mode", [Mode.INSECURE, Mode.SECURE])
def test_echo_over_channel(mode):
    cfg = ChannelConfig(mode, PSK if mode is Mode.SECURE else None)
    server_tracer, client_tracer = tracer_for("C1"), tracer_for("C2")
    srv = EchoServer(cfg, server_tracer)
    try:
        with open_channel(cfg, srv.address, sender="C2", interaction="iid", tracer=client_tracer) as ch:
            for p in (b"", b"25.3", os.urandom(5000)):
                reply = ch.request(Frame("MEASURE_REQUEST", "iid", "C2", p))
                assert reply.payload == p and reply.encrypted == cfg.secure
    finally:
        srv.close()
    sec = [t.task.name for t in list(client_tracer.traces) + list(server_tracer.traces)
           if t.category.value == "security-related"]
    if mode is Mode.INSECURE:
        assert sec == []
    else:
        assert sorted(sec) == sorted(["handshake"] * 2 + ["encrypt"] * 6 + ["decrypt"] * 6)
        enc = [t for t in client_tracer.traces if t.task.name == "encrypt"]
        assert all(t.wire_bytes == AEAD_OVERHEAD for t in enc)


def test_wrong_psk_refused_without_payload_frames():
    sink = RecordSink()
    srv = EchoServer(ChannelConfig(Mode.SECURE, PSK))
    proxy = spawn_proxy(ProxyBinding(("127.0.0.1", 0), srv.address, "C1"), sink)
    try:
        with pytest.raises(HandshakeError):
            open_channel(ChannelConfig(Mode.SECURE, os.urandom(32)), proxy.address, sender="C2", interaction="iid")
    finally:
        proxy.stop()
        srv.close()
    assert [r.message_type for r in sink.records] == ["HELLO", "HELLO_OK"]


def test_plain_request_on_secure_server_refused():
    srv = EchoServer(ChannelConfig(Mode.SECURE, PSK))
    try:
        with open_channel(ChannelConfig(Mode.INSECURE), srv.address, sender="C2", interaction="iid") as ch:
            reply = ch.request(Frame("MEASURE_REQUEST", "iid", "C2"))
            assert reply.message_type == "ERROR" and not reply.encrypted
            assert ch.recv() is None
    finally:
        srv.close()


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=64 * 1024))
def test_seal_unseal_identity_property(p):
    client, server = pair()
    assert server.unseal(client.seal(p)) == p
