import numpy as np
import pytest

from securiot.consensus import Phase, Send
from securiot.gateway import (ALERT_ONLY, AlertRaised, AuthFailed, ForwardToConsensus, GatewayError,
                              GatewayNode, ModelMissing, Submission, project)
from securiot.ids.data import SchemaMismatch
from securiot.ids.synthetic import FEATURE_NAMES, SyntheticFlows
from securiot.ledger import TxKind, alert, sensor_update
from securiot.models import Corrupt, save_model

from conftest import VALIDATORS


@pytest.fixture
def flows():
    return SyntheticFlows(0)


@pytest.fixture
def gateway(registry, tree_model):
    return GatewayNode("gw-1", registry, VALIDATORS, tree_model, devices={"7609"})


def flow(flows, cls, seed=0):
    return flows.sample(cls, 1, np.random.default_rng(seed))[0]


def test_benign_flow_is_forwarded(gateway, registry, flows):
    tx = sensor_update("7609", "1437", 23, 1).signed(registry)
    out = gateway.handle_submission(tx, flow(flows, "Benign"), FEATURE_NAMES)
    assert isinstance(out, ForwardToConsensus) and out.tx is tx
    assert out.verdict.class_name == "Benign" and not out.verdict.is_malicious


def test_attack_flow_raises_signed_alert(gateway, registry, flows):
    tx = sensor_update("7609", "1437", 23, 1).signed(registry)
    out = gateway.handle_submission(tx, flow(flows, "DDos"), FEATURE_NAMES)
    assert isinstance(out, AlertRaised)
    a = out.tx
    assert a.kind is TxKind.ALERT and a.submitter == "gw-1" and a.device_id == "7609"
    assert a.alert_class == "DDos" and a.quarantine
    assert registry.verify("gw-1", a.payload(), a.signature)
    assert 0 < float(a.probability) <= 1


def test_alert_only_policy(registry, tree_model, flows):
    gw = GatewayNode("gw-1", registry, VALIDATORS, tree_model, ALERT_ONLY, {"7609"})
    tx = sensor_update("7609", "1437", 1, 1).signed(registry)
    assert not gw.handle_submission(tx, flow(flows, "PortScan"), FEATURE_NAMES).tx.quarantine


def test_inference_is_deterministic(gateway, flows):
    x = flow(flows, "Dos Hulk")
    assert gateway.inspect_flow(x, FEATURE_NAMES) == gateway.inspect_flow(x, FEATURE_NAMES)


def test_authentication_failures(gateway, registry, flows):
    x = flow(flows, "Benign")
    with pytest.raises(AuthFailed):   # unsigned
        gateway.handle_submission(sensor_update("7609", "1437", 1, 1), x, FEATURE_NAMES)
    with pytest.raises(AuthFailed):   # not attached to this gateway
        gateway.handle_submission(sensor_update("7610", "1437", 1, 1).signed(registry), x, FEATURE_NAMES)
    with pytest.raises(AuthFailed):   # devices submit sensor updates only
        gateway.handle_submission(alert("7609", "7609", "Bot", 1, 1).signed(registry), x, FEATURE_NAMES)


def test_missing_model(registry, flows):
    gw = GatewayNode("gw-1", registry, VALIDATORS, None, devices={"7609"})
    with pytest.raises(ModelMissing):
        gw.inspect_flow(flow(flows, "Benign"), FEATURE_NAMES)


def test_not_a_gateway(registry):
    with pytest.raises(GatewayError):
        GatewayNode("7609", registry, VALIDATORS)
    with pytest.raises(ValueError):
        GatewayNode("gw-1", registry, VALIDATORS, policy="block-all")


def test_load_model_keeps_old_model_on_error(gateway, tree_model, tmp_path):
    bad = tmp_path / "bad.bin"
    good = tmp_path / "good.bin"
    save_model(tree_model, good)
    bad.write_bytes(good.read_bytes()[:-10])
    with pytest.raises(Corrupt):
        gateway.load_model(bad)
    assert gateway.model is tree_model
    gateway.load_model(good)
    assert gateway.model is not tree_model and gateway.model.family == "tree"


def test_projection_by_name(tree_model, flows):
    x = flow(flows, "Benign")
    names = tree_model.schema.names
    picked = project(x, FEATURE_NAMES, names)
    assert picked.tolist() == [x[FEATURE_NAMES.index(n)] for n in names]
    with pytest.raises(SchemaMismatch):
        project(x[:3], FEATURE_NAMES[:3], names)


def test_on_input_logs_one_decision_per_submission(gateway, registry, flows):
    ok = sensor_update("7609", "1437", 1, 1).signed(registry)
    out = gateway.on_input(Submission(ok, flow(flows, "Benign"), FEATURE_NAMES, "Benign"), 5)
    assert sorted(s.dest for s in out) == VALIDATORS
    assert all(isinstance(s, Send) and s.msg.phase is Phase.REQUEST and s.msg.tx is ok for s in out)
    unsigned = sensor_update("7609", "1437", 2, 2)
    assert gateway.on_input(Submission(unsigned, flow(flows, "Benign"), FEATURE_NAMES), 6) == []
    short = Submission(sensor_update("7609", "1437", 3, 3).signed(registry), np.zeros(2), ("a", "b"))
    assert gateway.on_input(short, 7) == []
    assert [d.action for d in gateway.log] == ["forward", "reject:AuthFailed", "reject:SchemaMismatch"]
    line = gateway.decision_log().splitlines()[0].split("\t")
    assert line[:3] == ["5", "7609", "Benign"] and line[4] == "forward" and line[5] == ok.tx_id.hex()
