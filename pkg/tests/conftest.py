from __future__ import annotations

import numpy as np
import pytest

from securiot.ids.pipeline import prepare_synthetic
from securiot.ledger import Chain, register_device, register_sensor
from securiot.membership import MembershipRegistry, Role, derive_credential
from securiot.models import train

VALIDATORS = [f"val-{i}" for i in range(4)]


def make_registry(seed: int = 1, extra=()) -> MembershipRegistry:
    members = [("admin", Role.ADMIN), ("gw-1", Role.GATEWAY), ("gw-2", Role.GATEWAY),
               ("7609", Role.DEVICE), ("7610", Role.DEVICE)]
    members += [(v, Role.VALIDATOR) for v in VALIDATORS]
    members += list(extra)
    return MembershipRegistry.from_members((m, r, derive_credential(seed, m)) for m, r in members)


def registered_chain(reg: MembershipRegistry, chain_id: str = "test") -> Chain:
    """Genesis, then one block registering device 7609 (gateway gw-1) with sensors 1437 and 1."""
    chain = Chain.new(chain_id, reg)
    txs = [register_device("admin", "7609", "gw-1", 1).signed(reg),
           register_sensor("admin", "1437", "7609", 2).signed(reg),
           register_sensor("admin", "1", "7609", 3).signed(reg)]
    chain.append_block(chain.build_block(txs, "val-0", 0))
    return chain


@pytest.fixture
def registry() -> MembershipRegistry:
    return make_registry()


@pytest.fixture
def chain(registry) -> Chain:
    return registered_chain(registry)


@pytest.fixture(scope="session")
def synthetic():
    return prepare_synthetic(0)


@pytest.fixture(scope="session")
def tree_model(synthetic):
    return train("tree", synthetic.dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def simulate_cluster(seed: int, faults=(), n_tx: int = 3, delay=(1, 10), loss: float = 0.0,
                     timeout: int = 50, max_steps: int = 200_000):
    """Four validators behind a simulator; ``n_tx`` sensor updates sent to every replica."""
    from securiot.consensus import Replica, request_message
    from securiot.ledger import sensor_update
    from securiot.netsim import Simulator

    reg = make_registry()
    sim = Simulator(seed, delay, loss, reg)
    replicas = [Replica(v, VALIDATORS, reg, registered_chain(reg), base_timeout=timeout)
                for v in VALIDATORS]
    for r in replicas:
        sim.add_node(r.replica_id, r)
    for f in faults:
        sim.set_fault(f)
    for i in range(n_tx):
        msg = request_message(sensor_update("7609", "1437", i, 1000 + i).signed(reg), "gw-1", reg)
        for v in VALIDATORS:
            sim.schedule(_message_event(1 + 5 * i, v, msg))
    sim.run(max_steps=max_steps)
    return sim, replicas


def _message_event(at, target, msg):
    from securiot.netsim import EventKind, SimEvent
    return SimEvent(at, target, EventKind.MESSAGE, msg, "gw-1")


# one "criterion N PASS|FAIL|SKIP: detail" line per acceptance test, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
