from __future__ import annotations

import logging
import socketserver
import threading

from .channel import AuthenticationError, Channel, ChannelConfig, ChannelError, accept_channel
from .framing import Frame, FrameError

log = logging.getLogger(__name__)


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True
    block_on_close = False


class FrameServer:
    """Request/response frame server: one reply per inbound frame.

    Subclasses implement :meth:`handle` returning the reply frame.  On a
    secure channel a payload that fails authentication is answered with a
    cleartext ``ERROR`` and the connection is dropped.
    """

    name = "server"

    def __init__(self, config: ChannelConfig, tracer=None, host: str = "127.0.0.1", port: int = 0):
        self.config = config
        self.tracer = tracer
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                outer._serve(self.request)

        self._server = _TCPServer((host, port), Handler)
        self.address = self._server.server_address
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05},
                                        name=f"{self.name}-server", daemon=True)
        self._running = False

    def start(self):
        self._running = True
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._running:
            self._running = False
            self._server.shutdown()
            self._thread.join()
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()

    def handle(self, frame: Frame, channel: Channel) -> Frame:
        raise NotImplementedError

    def _serve(self, sock):
        try:
            channel = accept_channel(sock, self.config, sender=self.name, tracer=self.tracer)
            if channel is None:
                return
            while True:
                try:
                    frame = channel.recv()
                except (AuthenticationError, FrameError, ChannelError) as exc:
                    log.info("%s: dropping connection: %s", self.name, exc)
                    try:
                        iid = getattr(exc, "interaction", None) or "unknown"
                        channel.send_plain(Frame("ERROR", iid, self.name, str(exc).encode()))
                    except OSError:
                        pass
                    return
                if frame is None:
                    return
                channel.send(self.handle(frame, channel))
        except OSError as exc:
            log.debug("%s: connection error: %s", self.name, exc)
