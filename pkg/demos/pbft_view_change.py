"""Four validators, a silent primary, one view change; then an equivocating primary."""

from securiot.consensus import Replica, request_message
from securiot.ledger import Chain, register_device, register_sensor, sensor_update
from securiot.membership import MembershipRegistry, Role, derive_credential
from securiot.netsim import EventKind, FaultProfile, SimEvent, Simulator

VALIDATORS = [f"val-{i}" for i in range(4)]


def run(behavior: str, seed: int = 1):
    members = [("admin", Role.ADMIN), ("gw-1", Role.GATEWAY), ("7609", Role.DEVICE)]
    members += [(v, Role.VALIDATOR) for v in VALIDATORS]
    reg = MembershipRegistry.from_members((m, r, derive_credential(seed, m)) for m, r in members)

    def chain():
        c = Chain.new("demo", reg)
        c.append_block(c.build_block([register_device("admin", "7609", "gw-1", 1).signed(reg),
                                      register_sensor("admin", "1437", "7609", 2).signed(reg)], "val-0", 0))
        return c

    sim = Simulator(seed, (1, 8), 0.0, reg)
    replicas = [Replica(v, VALIDATORS, reg, chain(), base_timeout=40) for v in VALIDATORS]
    for r in replicas:
        sim.add_node(r.replica_id, r)
    sim.set_fault(FaultProfile("val-0", behavior))
    for i in range(5):
        msg = request_message(sensor_update("7609", "1437", 20 + i, i + 1).signed(reg), "gw-1", reg)
        for v in VALIDATORS:
            sim.schedule(SimEvent(1 + 3 * i, v, EventKind.MESSAGE, msg, "gw-1"))
    sim.run(max_steps=100_000)
    honest = replicas[1:]
    print(f"{behavior}: final views {[r.view for r in honest]}, "
          f"executed {[r.last_executed for r in honest]}, "
          f"tips agree: {len({r.chain.tip.block_hash for r in honest}) == 1}")
    phases = {}
    for rec in sim.trace:
        phases[rec.phase] = phases.get(rec.phase, 0) + 1
    print("  messages by phase:", dict(sorted(phases.items())))


run("silent")
run("equivocate")
