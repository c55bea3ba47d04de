"""Length-prefixed frames exchanged between components.

Layout::

    [4 bytes  big-endian length of everything that follows]
    [header   "key=value" lines, terminated by an empty line]
    [payload  message body, cleartext or sealed]

The header is always cleartext so the monitor can correlate frames without
keys.  Its keys are ``type``, ``interaction``, ``sender`` and ``encrypted``,
in that order.  ``encrypted`` is a single digit, so a frame's size does not
depend on the channel mode except through the sealed payload.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

from .model import validate_interaction_id

__all__ = [
    "MESSAGE_TYPES",
    "PREFIX",
    "MAX_BODY",
    "Frame",
    "FrameError",
    "FrameDecoder",
    "recv_exact",
    "read_frame",
    "write_frame",
    "peek_header",
    "encode_kv",
    "decode_kv",
]

MESSAGE_TYPES = frozenset(
    {
        "REGISTER",
        "REGISTER_OK",
        "ORCH_REQUEST",
        "ORCH_RESPONSE",
        "MEASURE_REQUEST",
        "MEASURE_RESPONSE",
        "HELLO",
        "HELLO_OK",
        "ERROR",
    }
)

PREFIX = struct.Struct("!I")
MAX_BODY = 16 * 1024 * 1024
_HEADER_END = b"\n\n"


class FrameError(ValueError):
    pass


def encode_kv(pairs: dict[str, str]) -> bytes:
    lines = []
    for k, v in pairs.items():
        k, v = str(k), str(v)
        if not k or "=" in k or "\n" in k or "\n" in v:
            raise FrameError(f"cannot encode {k!r}={v!r}")
        lines.append(f"{k}={v}")
    return "\n".join(lines).encode("utf-8")


def decode_kv(data: bytes) -> dict[str, str]:
    out = {}
    for line in data.decode("utf-8").split("\n"):
        if not line:
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise FrameError(f"malformed key-value line {line!r}")
        out[k] = v
    return out


@dataclass(frozen=True)
class Frame:
    message_type: str
    interaction: str
    sender: str
    payload: bytes = b""
    encrypted: bool = False

    def __post_init__(self):
        if self.message_type not in MESSAGE_TYPES:
            raise FrameError(f"unknown message type {self.message_type!r}")
        validate_interaction_id(self.interaction)
        if not self.sender or any(ch.isspace() for ch in self.sender):
            raise FrameError(f"bad sender name {self.sender!r}")

    def header_bytes(self) -> bytes:
        return (
            encode_kv(
                {
                    "type": self.message_type,
                    "interaction": self.interaction,
                    "sender": self.sender,
                    "encrypted": "1" if self.encrypted else "0",
                }
            )
            + _HEADER_END
        )

    def body(self) -> bytes:
        return self.header_bytes() + self.payload

    def encode(self) -> bytes:
        body = self.body()
        if len(body) > MAX_BODY:
            raise FrameError(f"frame body too large: {len(body)} bytes")
        return PREFIX.pack(len(body)) + body

    @property
    def size(self) -> int:
        return PREFIX.size + len(self.header_bytes()) + len(self.payload)

    @classmethod
    def decode(cls, body: bytes) -> "Frame":
        header, sep, payload = body.partition(_HEADER_END)
        if not sep:
            raise FrameError("frame header is not terminated")
        try:
            kv = decode_kv(header)
            return cls(
                kv["type"],
                kv["interaction"],
                kv["sender"],
                payload,
                kv["encrypted"] == "1",
            )
        except (KeyError, UnicodeDecodeError, ValueError) as exc:
            raise FrameError(f"malformed frame header: {exc}") from exc


def peek_header(body: bytes) -> dict[str, str] | None:
    """Best-effort header parse; ``None`` if the body is not one of ours."""
    header, sep, _ = body.partition(_HEADER_END)
    if not sep:
        return None
    try:
        kv = decode_kv(header)
    except (UnicodeDecodeError, FrameError):
        return None
    return kv if "type" in kv else None


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError(f"connection closed after {len(buf)} of {n} bytes")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one frame body; ``None`` on a clean close between frames."""
    first = sock.recv(PREFIX.size)
    if not first:
        return None
    prefix = first if len(first) == PREFIX.size else first + recv_exact(sock, PREFIX.size - len(first))
    (length,) = PREFIX.unpack(prefix)
    if length > MAX_BODY:
        raise FrameError(f"frame body too large: {length} bytes")
    return recv_exact(sock, length)


def write_frame(sock: socket.socket, body: bytes) -> int:
    data = PREFIX.pack(len(body)) + body
    sock.sendall(data)
    return len(data)


class FrameDecoder:
    """Incremental splitter of a byte stream into whole frames.

    ``feed`` returns the complete frames (prefix included) finished by the
    new data.  ``pending`` is the number of buffered bytes of an unfinished
    frame.
    """

    def __init__(self):
        self._buf = bytearray()

    @property
    def pending(self) -> int:
        return len(self._buf)

    def expected(self) -> int | None:
        if len(self._buf) < PREFIX.size:
            return None
        return PREFIX.size + PREFIX.unpack_from(self._buf)[0]

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        frames = []
        while len(self._buf) >= PREFIX.size:
            total = PREFIX.size + PREFIX.unpack_from(self._buf)[0]
            if len(self._buf) < total:
                break
            frames.append(bytes(self._buf[:total]))
            del self._buf[:total]
        return frames
