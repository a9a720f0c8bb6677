"""Register a device, record readings, quarantine it, then tamper with the export."""

from securiot.ledger import (Chain, InvalidTx, alert, load_export, query_asset,
                             register_device, register_sensor, sensor_update, verify_chain)
from securiot.membership import MembershipRegistry, Role, derive_credential

members = [("admin", Role.ADMIN), ("gw-1", Role.GATEWAY), ("7609", Role.DEVICE), ("val-0", Role.VALIDATOR)]
reg = MembershipRegistry.from_members((m, r, derive_credential(0, m)) for m, r in members)

chain = Chain.new("demo", reg)
chain.append_block(chain.build_block([
    register_device("admin", "7609", "gw-1", 1).signed(reg),
    register_sensor("admin", "1437", "7609", 2).signed(reg),
], "val-0", 1))
for i, v in enumerate((21.5, 22.0, 23.0), start=1):
    chain.append_block(chain.build_block([sensor_update("7609", "1437", v, i).signed(reg)], "val-0", 1 + i))

state = chain.state_at(chain.height)
print("sensor 1437 =", query_asset(state, "1437").last_value)
print("history:", [str(tx.value) for _, tx in chain.history("1437")])

chain.append_block(chain.build_block([alert("gw-1", "7609", "DDos", 0.98, 1).signed(reg)], "val-0", 10))
print("device status:", query_asset(chain.state_at(chain.height), "7609").status.value)
try:
    chain.append_block(chain.build_block([sensor_update("7609", "1437", 99, 4).signed(reg)], "val-0", 11))
except InvalidTx as e:
    print("refused:", e)

text = chain.export()
print("export verifies:", verify_chain(load_export(text), reg))
tampered = text.replace('"22.000000"', '"22.500000"')
try:
    print("tampered verifies:", verify_chain(load_export(tampered), reg))
except Exception as e:
    print("tampered export rejected:", e)
