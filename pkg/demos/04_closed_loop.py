"""One closed-loop temperature control interaction, insecure then secure.

The room starts warm, so the controller switches the AC on until the reading
drops to the threshold. The secure run adds handshakes and sealed payloads;
the readings themselves are identical because the room is seeded.
"""

import uuid
from collections import Counter

from seccost.channel import ChannelConfig, Mode
from seccost.cloud import AccessControlList
from seccost.model import CostQuery, total_cost
from seccost.testbed import RoomParams, Testbed

acl = AccessControlList([("C2", "temperature")])
room = RoomParams(initial_c=26.5)

for cfg in (ChannelConfig(Mode.INSECURE), ChannelConfig(Mode.SECURE, bytes(range(32)))):
    with Testbed(cfg, acl, room=room) as bed:
        iid = uuid.uuid4().hex
        outcome, wall_ms = bed.run_interaction(iid, seed=42, loop_iterations=10)
        traces = bed.stores.traces.for_interaction(iid)
        kb = total_cost(bed.stores.samples, CostQuery(interactions={iid}, metrics={"M4"}))
    print(f"--- {cfg.mode.value}: ok={outcome.ok}, {wall_ms:.1f} ms wall, {kb:.4f} KB on the wire")
    print("readings:", " ".join(f"{r}{'*' if on else ''}" for r, on in outcome.readings), "(* = AC on)")
    print("tasks:   ", dict(Counter(t.task.name for t in traces)))
