"""Secure (S) and insecure (I) channels between components.

The secure channel is application-layer AEAD over a pre-shared key:

* the client sends ``HELLO`` carrying a random 16-byte nonce;
* the server answers ``HELLO_OK`` with its own nonce and a key-confirmation
  MAC, so a client holding the wrong key refuses before sending any payload;
* both sides derive direction-specific ChaCha20-Poly1305 keys with HKDF over
  the two nonces;
* each payload is sealed as ``nonce(12) || ciphertext || tag(16)`` with the
  cleartext frame header as associated data.

The insecure channel passes frames through untouched.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import socket
from dataclasses import dataclass, replace
from enum import Enum

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .framing import Frame, FrameError, read_frame, write_frame

__all__ = [
    "Mode",
    "ChannelConfig",
    "ChannelError",
    "HandshakeError",
    "AuthenticationError",
    "AEAD_NONCE",
    "AEAD_TAG",
    "AEAD_OVERHEAD",
    "HANDSHAKE_NONCE",
    "SecureSession",
    "Channel",
    "open_channel",
    "accept_channel",
]

AEAD_NONCE = 12
AEAD_TAG = 16
AEAD_OVERHEAD = AEAD_NONCE + AEAD_TAG
HANDSHAKE_NONCE = 16
PSK_BYTES = 32
_INFO = b"seccost channel v1"


class Mode(str, Enum):
    INSECURE = "I"
    SECURE = "S"


@dataclass(frozen=True)
class ChannelConfig:
    mode: Mode = Mode.INSECURE
    psk: bytes | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.SECURE:
            if self.psk is None or len(self.psk) != PSK_BYTES:
                raise ValueError(f"secure channel needs a {PSK_BYTES}-byte pre-shared key")

    @property
    def secure(self) -> bool:
        return self.mode is Mode.SECURE

    @property
    def overhead(self) -> int:
        return AEAD_OVERHEAD if self.secure else 0


class ChannelError(ConnectionError):
    pass


class HandshakeError(ChannelError):
    pass


class AuthenticationError(ChannelError):
    pass


class SecureSession:
    """Keys for one established secure channel, from one side's viewpoint."""

    def __init__(self, psk: bytes, client_nonce: bytes, server_nonce: bytes, role: str):
        if role not in ("client", "server"):
            raise ValueError(f"role must be 'client' or 'server', got {role!r}")
        okm = HKDF(
            algorithm=hashes.SHA256(),
            length=96,
            salt=client_nonce + server_nonce,
            info=_INFO,
        ).derive(psk)
        c2s, s2c, self._confirm = okm[:32], okm[32:64], okm[64:]
        send, recv = (c2s, s2c) if role == "client" else (s2c, c2s)
        self._send = ChaCha20Poly1305(send)
        self._recv = ChaCha20Poly1305(recv)
        self._transcript = client_nonce + server_nonce
        self.role = role

    def proof(self) -> bytes:
        return hmac.new(self._confirm, b"HELLO_OK" + self._transcript, hashlib.sha256).digest()

    def verify_proof(self, proof: bytes) -> bool:
        return hmac.compare_digest(self.proof(), proof)

    def seal(self, payload: bytes, aad: bytes = b"") -> bytes:
        nonce = os.urandom(AEAD_NONCE)
        return nonce + self._send.encrypt(nonce, payload, aad)

    def unseal(self, wire: bytes, aad: bytes = b"") -> bytes:
        if len(wire) < AEAD_OVERHEAD:
            raise AuthenticationError("sealed payload shorter than the AEAD overhead")
        try:
            return self._recv.decrypt(wire[:AEAD_NONCE], wire[AEAD_NONCE:], aad)
        except InvalidTag:
            raise AuthenticationError("payload failed authentication") from None


class Channel:
    """A connected socket speaking frames, sealed or not.

    ``tracer`` (optional) receives one ``encrypt`` task per sealed frame and
    one ``decrypt`` task per unsealed frame.  The ``encrypt`` task is charged
    the AEAD overhead bytes.
    """

    def __init__(self, sock: socket.socket, config: ChannelConfig, *, tracer=None, session: SecureSession | None = None):
        if config.secure and session is None:
            raise ValueError("secure channel needs an established session")
        self.sock = sock
        self.config = config
        self.tracer = tracer
        self.session = session

    @property
    def overhead(self) -> int:
        return self.config.overhead

    def seal(self, payload: bytes, aad: bytes = b"", interaction: str | None = None) -> bytes:
        if not self.config.secure:
            return payload
        if self.tracer is None or interaction is None:
            return self.session.seal(payload, aad)
        with self.tracer.task(interaction, "encrypt") as t:
            sealed = self.session.seal(payload, aad)
            t.wire_bytes = AEAD_OVERHEAD
        return sealed

    def unseal(self, wire: bytes, aad: bytes = b"", interaction: str | None = None) -> bytes:
        if not self.config.secure:
            return wire
        if self.tracer is None or interaction is None:
            return self.session.unseal(wire, aad)
        with self.tracer.task(interaction, "decrypt"):
            return self.session.unseal(wire, aad)

    def send(self, frame: Frame) -> int:
        """Send ``frame``; returns the bytes put on the wire."""
        frame = replace(frame, encrypted=self.config.secure)
        header = frame.header_bytes()
        payload = self.seal(frame.payload, header, frame.interaction)
        return write_frame(self.sock, header + payload)

    def send_plain(self, frame: Frame) -> int:
        return write_frame(self.sock, replace(frame, encrypted=False).body())

    def recv(self) -> Frame | None:
        """Next frame with its payload opened; ``None`` on clean close.

        Cleartext ``ERROR`` frames are accepted on a secure channel because
        the peer may be unable to seal (e.g. it failed to authenticate us).
        """
        body = read_frame(self.sock)
        if body is None:
            return None
        frame = Frame.decode(body)
        if not self.config.secure:
            if frame.encrypted:
                raise ChannelError("sealed frame on an insecure channel")
            return frame
        if not frame.encrypted:
            if frame.message_type == "ERROR":
                return frame
            raise ChannelError(f"cleartext {frame.message_type} frame on a secure channel")
        try:
            payload = self.unseal(frame.payload, frame.header_bytes(), frame.interaction)
        except AuthenticationError as exc:
            exc.interaction = frame.interaction
            raise
        return replace(frame, payload=payload)

    def request(self, frame: Frame) -> Frame:
        self.send(frame)
        reply = self.recv()
        if reply is None:
            raise ChannelError(f"peer closed the connection after {frame.message_type}")
        return reply

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _connect(peer: tuple[str, int], timeout: float) -> socket.socket:
    sock = socket.create_connection(peer, timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def open_channel(
    config: ChannelConfig,
    peer: tuple[str, int],
    *,
    sender: str,
    interaction: str,
    tracer=None,
    timeout: float = 10.0,
) -> Channel:
    """Client side: connect to ``peer`` and, on S, run the handshake."""
    sock = _connect(peer, timeout)
    if not config.secure:
        return Channel(sock, config, tracer=tracer)
    try:
        client_nonce = os.urandom(HANDSHAKE_NONCE)
        write_frame(sock, Frame("HELLO", interaction, sender, client_nonce).body())
        body = read_frame(sock)
        if body is None:
            raise HandshakeError("peer closed during handshake")
        reply = Frame.decode(body)
        if reply.message_type != "HELLO_OK":
            raise HandshakeError(f"handshake refused: {reply.payload.decode('utf-8', 'replace')}")

        def finish():
            if len(reply.payload) != HANDSHAKE_NONCE + 32:
                raise HandshakeError("malformed HELLO_OK")
            server_nonce, proof = reply.payload[:HANDSHAKE_NONCE], reply.payload[HANDSHAKE_NONCE:]
            session = SecureSession(config.psk, client_nonce, server_nonce, "client")
            if not session.verify_proof(proof):
                raise HandshakeError("server failed key confirmation (pre-shared key mismatch?)")
            return session

        if tracer is None:
            session = finish()
        else:
            with tracer.task(interaction, "handshake"):
                session = finish()
    except (HandshakeError, FrameError, OSError):
        sock.close()
        raise
    return Channel(sock, config, tracer=tracer, session=session)


def accept_channel(sock: socket.socket, config: ChannelConfig, *, sender: str, tracer=None) -> Channel | None:
    """Server side of :func:`open_channel` for an accepted socket.

    Returns ``None`` if the peer closed before completing the handshake or
    was refused (an ``ERROR`` frame has then been sent).
    """
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    if not config.secure:
        return Channel(sock, config, tracer=tracer)
    body = read_frame(sock)
    if body is None:
        return None
    try:
        hello = Frame.decode(body)
    except FrameError:
        return None
    if hello.message_type != "HELLO" or len(hello.payload) != HANDSHAKE_NONCE:
        refusal = Frame("ERROR", hello.interaction, sender, b"secure channel requires HELLO handshake")
        write_frame(sock, refusal.body())
        return None

    def respond():
        server_nonce = os.urandom(HANDSHAKE_NONCE)
        session = SecureSession(config.psk, hello.payload, server_nonce, "server")
        return session, Frame("HELLO_OK", hello.interaction, sender, server_nonce + session.proof())

    if tracer is None:
        session, reply = respond()
    else:
        with tracer.task(hello.interaction, "handshake"):
            session, reply = respond()
    write_frame(sock, reply.body())
    return Channel(sock, config, tracer=tracer, session=session)
