"""Watching traffic between two endpoints without touching it.

A stand-in sensor sits behind a monitoring proxy. The client talks to the proxy;
every frame crossing it becomes one MessageRecord.
"""

import socket
import threading

from seccost.framing import Frame, read_frame, write_frame
from seccost.monitor import ProxyBinding, RecordSink, packet_cost, spawn_proxy

listener = socket.create_server(("127.0.0.1", 0))


def sensor():
    sock, _ = listener.accept()
    with sock:
        while (body := read_frame(sock)) is not None:
            req = Frame.decode(body)
            write_frame(sock, Frame("MEASURE_RESPONSE", req.interaction, "C1", b"21.4").body())


threading.Thread(target=sensor, daemon=True).start()

sink = RecordSink()
proxy = spawn_proxy(ProxyBinding(("127.0.0.1", 0), listener.getsockname(), "C1"), sink)
with socket.create_connection(proxy.address) as c:
    for i in range(3):
        frame = Frame("MEASURE_REQUEST", "demo", "C2", b"x" * (10 * i))
        write_frame(c, frame.body())
        read_frame(c)
proxy.stop()

for r in sink:
    print(r.message_type, r.sender_component, "->", r.receiver_component, r.byte_count, "bytes")
print(f"M4 for 'demo': {packet_cost(sink.records, 'demo'):.4f} KB")
