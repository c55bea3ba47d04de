"""Component monitoring by transparent, frame-aware forwarding proxies.

Each monitored component is reached through a proxy listening on the
component's advertised endpoint.  Bytes are forwarded unmodified as soon as
they arrive; the proxy splits each direction into frames on the side and emits
one :class:`MessageRecord` per complete frame.
"""

from __future__ import annotations

import logging
import math
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .framing import FrameDecoder, PREFIX, peek_header
from .model import iso_to_ms, ms_to_iso

__all__ = [
    "MessageRecord",
    "PartialFrame",
    "RecordSink",
    "ProxyBinding",
    "ProxyStartupError",
    "Proxy",
    "spawn_proxy",
    "stop_proxy",
    "packet_cost",
]

log = logging.getLogger(__name__)

Endpoint = tuple[str, int]


def _fmt(ep: Endpoint) -> str:
    return f"{ep[0]}:{ep[1]}"


def _parse(text: str) -> Endpoint:
    ip, _, port = text.rpartition(":")
    return ip, int(port)


@dataclass(frozen=True)
class MessageRecord:
    timestamp: int  # UTC ms
    sender: Endpoint
    receiver: Endpoint
    byte_count: int
    interaction: str
    message_type: str
    encrypted: bool
    # Component names, taken from the frame header and the proxy binding.
    sender_component: str = ""
    receiver_component: str = ""

    def to_line(self) -> str:
        return "\t".join(
            (
                ms_to_iso(self.timestamp),
                _fmt(self.sender),
                _fmt(self.receiver),
                str(self.byte_count),
                self.interaction,
                self.message_type,
                "1" if self.encrypted else "0",
                self.sender_component,
                self.receiver_component,
            )
        )

    @classmethod
    def from_line(cls, line: str) -> "MessageRecord":
        ts, snd, rcv, n, iid, mtype, enc, scomp, rcomp = line.split("\t")
        return cls(iso_to_ms(ts), _parse(snd), _parse(rcv), int(n), iid, mtype, enc == "1", scomp, rcomp)


@dataclass(frozen=True)
class PartialFrame:
    """Diagnostic for a connection that closed in the middle of a frame."""

    timestamp: int
    sender: Endpoint
    receiver: Endpoint
    received_bytes: int
    expected_bytes: int | None


class RecordSink:
    """Thread-safe collector of message records and partial-frame diagnostics."""

    def __init__(self):
        self._lock = threading.Lock()
        self.records: list[MessageRecord] = []
        self.partials: list[PartialFrame] = []

    def emit(self, record: MessageRecord) -> None:
        with self._lock:
            self.records.append(record)

    def emit_partial(self, diag: PartialFrame) -> None:
        with self._lock:
            self.partials.append(diag)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        with self._lock:
            return iter(list(self.records))

    def for_interaction(self, interaction: str) -> list[MessageRecord]:
        return [r for r in self if r.interaction == interaction]

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self:
                fh.write(r.to_line() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RecordSink":
        sink = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    sink.emit(MessageRecord.from_line(line))
        return sink


@dataclass(frozen=True)
class ProxyBinding:
    listen: Endpoint
    upstream: Endpoint
    component_name: str

    def __post_init__(self):
        if self.listen[1] != 0 and tuple(self.listen) == tuple(self.upstream):
            raise ValueError("proxy would forward to itself")


class ProxyStartupError(OSError):
    pass


_POLL = 0.05
_LINGER_RST = struct.pack("ii", 1, 0)


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


class _Connection:
    def __init__(self, proxy: "Proxy", client: socket.socket, peer: Endpoint, upstream: socket.socket):
        self.proxy = proxy
        self.client = client
        self.upstream = upstream
        self.peer = peer
        self.client_name = ""
        self.threads = [
            threading.Thread(target=self._pump, args=(client, upstream, True), daemon=True),
            threading.Thread(target=self._pump, args=(upstream, client, False), daemon=True),
        ]
        self._done = 0
        self._lock = threading.Lock()

    def start(self):
        for t in self.threads:
            t.start()

    def join(self, timeout=None):
        for t in self.threads:
            t.join(timeout)

    def _record(self, frame: bytes, inbound: bool, last_ts: int) -> int:
        hdr = peek_header(frame[PREFIX.size:]) or {}
        sender_name = hdr.get("sender", "")
        if inbound and sender_name:
            self.client_name = sender_name
        ts = max(_now_ms(), last_ts)
        listen = self.proxy.address
        self.proxy.sink.emit(
            MessageRecord(
                timestamp=ts,
                sender=self.peer if inbound else listen,
                receiver=listen if inbound else self.peer,
                byte_count=len(frame),
                interaction=hdr.get("interaction", ""),
                message_type=hdr.get("type", "UNKNOWN"),
                encrypted=hdr.get("encrypted") == "1",
                sender_component=sender_name,
                receiver_component=self.proxy.binding.component_name if inbound else self.client_name,
            )
        )
        return ts

    def _pump(self, src: socket.socket, dst: socket.socket, inbound: bool):
        decoder = FrameDecoder()
        last_ts = 0
        try:
            while True:
                ready, _, _ = select.select([src], [], [], _POLL)
                if not ready:
                    if self.proxy.stopping and decoder.pending == 0:
                        break
                    continue
                data = src.recv(65536)
                if not data:
                    if decoder.pending:
                        self.proxy.sink.emit_partial(
                            PartialFrame(
                                _now_ms(),
                                self.peer if inbound else self.proxy.address,
                                self.proxy.address if inbound else self.peer,
                                decoder.pending,
                                decoder.expected(),
                            )
                        )
                        self._teardown()
                    else:
                        try:
                            dst.shutdown(socket.SHUT_WR)
                        except OSError:
                            pass
                    break
                # Book-keep first: the peer wakes up as soon as the bytes land.
                for frame in decoder.feed(data):
                    last_ts = self._record(frame, inbound, last_ts)
                dst.sendall(data)
        except (OSError, ValueError) as exc:
            log.debug("proxy %s pump ended: %s", self.proxy.binding.component_name, exc)
        finally:
            with self._lock:
                self._done += 1
                both = self._done == 2
            if both:
                self._close()

    def _teardown(self):
        for s in (self.client, self.upstream):
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def _close(self):
        for s in (self.client, self.upstream):
            try:
                s.close()
            except OSError:
                pass
        self.proxy._forget(self)


class Proxy:
    """A running forwarding proxy.  Use :func:`spawn_proxy` to create one."""

    def __init__(self, binding: ProxyBinding, sink: RecordSink, connect_timeout: float = 5.0):
        self.binding = binding
        self.sink = sink
        self.connect_timeout = connect_timeout
        self.stopping = False
        self._stopped = False
        self._conns: set[_Connection] = set()
        self._lock = threading.Lock()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind(tuple(binding.listen))
            self._listener.listen(64)
        except OSError as exc:
            self._listener.close()
            raise ProxyStartupError(exc.errno, f"cannot listen on {_fmt(binding.listen)}: {exc.strerror}") from exc
        self.address: Endpoint = self._listener.getsockname()
        if self.address == tuple(binding.upstream):
            self._listener.close()
            raise ProxyStartupError("proxy listen endpoint equals its upstream")
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"proxy-{binding.component_name}", daemon=True
        )

    def start(self) -> "Proxy":
        self._accept_thread.start()
        return self

    def _accept_loop(self):
        while not self.stopping:
            try:
                ready, _, _ = select.select([self._listener], [], [], _POLL)
            except (OSError, ValueError):
                break
            if not ready or self.stopping:
                continue
            try:
                client, peer = self._listener.accept()
            except OSError:
                break
            client.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            try:
                upstream = socket.create_connection(tuple(self.binding.upstream), timeout=self.connect_timeout)
                upstream.settimeout(None)
                upstream.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            except OSError as exc:
                log.warning("proxy %s: upstream %s unreachable: %s",
                            self.binding.component_name, _fmt(self.binding.upstream), exc)
                # Reset rather than close so the client sees a refusal.
                client.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, _LINGER_RST)
                client.close()
                continue
            conn = _Connection(self, client, peer, upstream)
            with self._lock:
                self._conns.add(conn)
            conn.start()

    def _forget(self, conn: _Connection):
        with self._lock:
            self._conns.discard(conn)

    @property
    def active_connections(self) -> int:
        with self._lock:
            return len(self._conns)

    def stop(self, grace: float = 5.0) -> None:
        """Stop accepting, let connections drain to a frame boundary, close.

        Idempotent.  No records are emitted after this returns.
        """
        with self._lock:
            if self._stopped:
                return
            self._stopped = True
        self.stopping = True
        if self._accept_thread.is_alive():
            self._accept_thread.join()
        self._listener.close()
        with self._lock:
            conns = list(self._conns)
        deadline = time.monotonic() + grace
        for conn in conns:
            conn.join(max(deadline - time.monotonic(), 0.0))
        for conn in conns:
            conn._teardown()
            conn.join(1.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def spawn_proxy(binding: ProxyBinding, sink: RecordSink) -> Proxy:
    return Proxy(binding, sink).start()


def stop_proxy(handle: Proxy) -> None:
    handle.stop()


def packet_cost(records: Iterable[MessageRecord], interaction: str) -> float:
    """Wire size in KB of all frames recorded for ``interaction``."""
    return math.fsum(r.byte_count for r in records if r.interaction == interaction) / 1024
