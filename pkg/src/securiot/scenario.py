"""Scenario files and the end-to-end harness (devices -> gateways -> PBFT validators -> ledger).

A scenario is a line-oriented text file; ``#`` starts a comment. Directives::

    name <text>
    seed <int>                       network and traffic seed
    corpus-seed <int>                geometry of the synthetic flow classes (default 0)
    validators <n>                   val-0 .. val-(n-1)
    gateways <n>                     gw-0 ..
    devices <n>                      dev-k owns sensor-k and is attached to gw-(k mod gateways)
    policy alert-and-quarantine|alert-only
    network delay=<lo>..<hi> loss=<p>
    timeout <ticks>                  base PBFT request timeout
    batch <n>                        PBFT batch size
    fault <node> <behavior> [key=value ...]
    traffic <class> count=<n> start=<t> every=<dt> [devices=dev-0,dev-1]
    submit <t> <device> <class> [value=<v>]
    max-steps <n>

Class names match case-insensitively with spaces and punctuation ignored,
so ``Dos_Hulk`` or ``doshulk`` name the "Dos Hulk" class.

Traffic lines expand to submissions round-robin over the listed devices (all
devices when omitted). Each submission carries a flow sampled from the named
class and a sensor value drawn from the scenario seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .consensus import Replica
from .gateway import ALERT_AND_QUARANTINE, POLICIES, GatewayNode, Submission
from .ids.data import LabelMap, normalize_label
from .ids.synthetic import FEATURE_NAMES, SyntheticFlows
from .ledger import Chain, TxKind, register_device, register_sensor, sensor_update
from .membership import MembershipRegistry, Role, derive_credential
from .models import ClassifierModel
from .netsim import Behavior, FaultProfile, Simulator

ADMIN = "admin"
CHAIN_ID = "securiot"
BUNDLED = ("honest", "silent-primary", "equivocating-primary", "mixed-traffic")


class ScenarioError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SubmissionSpec:
    time: int
    device: str
    cls: str
    value: float | None = None


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    corpus_seed: int = 0
    validators: int = 4
    gateways: int = 1
    devices: int = 1
    policy: str = ALERT_AND_QUARANTINE
    delay: tuple[int, int] = (1, 10)
    loss: float = 0.0
    timeout: int = 50
    batch: int = 100
    faults: list[FaultProfile] = field(default_factory=list)
    submissions: list[SubmissionSpec] = field(default_factory=list)
    max_steps: int = 2_000_000

    @property
    def validator_ids(self) -> list[str]:
        return [f"val-{i}" for i in range(self.validators)]

    @property
    def gateway_ids(self) -> list[str]:
        return [f"gw-{i}" for i in range(self.gateways)]

    @property
    def device_ids(self) -> list[str]:
        return [f"dev-{i}" for i in range(self.devices)]

    def gateway_of(self, device: str) -> str:
        return self.gateway_ids[int(device.split("-")[1]) % self.gateways]


def _int(tok: str, line: int, what: str, minimum: int | None = None) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise ScenarioError(line, f"{what} must be an integer, got {tok!r}") from None
    if minimum is not None and v < minimum:
        raise ScenarioError(line, f"{what} must be >= {minimum}")
    return v


def _kv(tokens: list[str], line: int) -> dict[str, str]:
    out = {}
    for t in tokens:
        k, sep, v = t.partition("=")
        if not sep or not k or not v:
            raise ScenarioError(line, f"expected key=value, got {t!r}")
        out[k] = v
    return out


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    labels = LabelMap.default()
    traffic: list[tuple[int, list[str]]] = []
    pending_faults: list[tuple[int, list[str]]] = []
    explicit: list[tuple[int, list[str]]] = []
    for n, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        key, args = tokens[0], tokens[1:]
        if key == "name":
            if not args:
                raise ScenarioError(n, "name needs a value")
            sc.name = " ".join(args)
        elif key in ("seed", "corpus-seed", "validators", "gateways", "devices", "timeout",
                     "batch", "max-steps"):
            if len(args) != 1:
                raise ScenarioError(n, f"{key} takes exactly one value")
            minimum = {"validators": 4, "gateways": 1, "devices": 1, "timeout": 1, "batch": 1,
                       "max-steps": 1}.get(key)
            setattr(sc, key.replace("-", "_"), _int(args[0], n, key, minimum))
        elif key == "policy":
            if len(args) != 1 or args[0] not in POLICIES:
                raise ScenarioError(n, f"policy must be one of {', '.join(POLICIES)}")
            sc.policy = args[0]
        elif key == "network":
            kv = _kv(args, n)
            for k, v in kv.items():
                if k == "delay":
                    lo, sep, hi = v.partition("..")
                    if not sep:
                        raise ScenarioError(n, "delay must look like <lo>..<hi>")
                    sc.delay = (_int(lo, n, "delay", 0), _int(hi, n, "delay", 0))
                    if sc.delay[0] > sc.delay[1]:
                        raise ScenarioError(n, "delay lower bound exceeds upper bound")
                elif k == "loss":
                    try:
                        sc.loss = float(v)
                    except ValueError:
                        raise ScenarioError(n, f"loss must be a number, got {v!r}") from None
                    if not 0.0 <= sc.loss < 1.0:
                        raise ScenarioError(n, "loss must be in [0, 1)")
                else:
                    raise ScenarioError(n, f"unknown network option {k!r}")
        elif key == "fault":
            pending_faults.append((n, args))
        elif key == "traffic":
            traffic.append((n, args))
        elif key == "submit":
            explicit.append((n, args))
        else:
            raise ScenarioError(n, f"unknown directive {key!r}")

    devices = set(sc.device_ids)
    nodes = set(sc.validator_ids) | set(sc.gateway_ids)
    for n, args in pending_faults:
        if len(args) < 2:
            raise ScenarioError(n, "fault needs <node> <behavior>")
        if args[0] not in nodes:
            raise ScenarioError(n, f"unknown node {args[0]!r}")
        try:
            behavior = Behavior(args[1])
        except ValueError:
            raise ScenarioError(n, f"unknown behavior {args[1]!r}") from None
        params = {k: _int(v, n, k, 0) for k, v in _kv(args[2:], n).items()}
        sc.faults.append(FaultProfile(args[0], behavior, params))

    def check_class(name: str, n: int) -> str:
        canonical = normalize_label(name)
        if canonical is None or canonical not in labels.index:
            raise ScenarioError(n, f"unknown class {name!r}")
        return canonical

    for n, args in traffic:
        if not args:
            raise ScenarioError(n, "traffic needs a class")
        cls = check_class(args[0], n)
        kv = _kv(args[1:], n)
        unknown = set(kv) - {"count", "start", "every", "devices"}
        if unknown:
            raise ScenarioError(n, f"unknown traffic option {sorted(unknown)[0]!r}")
        count = _int(kv.get("count", "1"), n, "count", 1)
        start = _int(kv.get("start", "1"), n, "start", 0)
        every = _int(kv.get("every", "1"), n, "every", 0)
        targets = kv["devices"].split(",") if "devices" in kv else sc.device_ids
        for d in targets:
            if d not in devices:
                raise ScenarioError(n, f"unknown device {d!r}")
        for i in range(count):
            sc.submissions.append(SubmissionSpec(start + i * every, targets[i % len(targets)], cls))
    for n, args in explicit:
        if len(args) < 3:
            raise ScenarioError(n, "submit needs <time> <device> <class>")
        t = _int(args[0], n, "time", 0)
        if args[1] not in devices:
            raise ScenarioError(n, f"unknown device {args[1]!r}")
        cls = check_class(args[2], n)
        kv = _kv(args[3:], n)
        value = None
        if "value" in kv:
            try:
                value = float(kv["value"])
            except ValueError:
                raise ScenarioError(n, f"value must be a number, got {kv['value']!r}") from None
        sc.submissions.append(SubmissionSpec(t, args[1], cls, value))
    sc.submissions.sort(key=lambda s: s.time)   # stable: ties keep file order
    return sc


def read_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def bundled_scenario(name: str) -> Scenario:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("securiot").joinpath("data", "scenarios", f"{name}.scn").read_text()
    return parse_scenario(text)


# -- harness --------------------------------------------------------------------------

def build_registry(sc: Scenario) -> MembershipRegistry:
    members = [(ADMIN, Role.ADMIN, derive_credential(sc.seed, ADMIN))]
    members += [(v, Role.VALIDATOR, derive_credential(sc.seed, v)) for v in sc.validator_ids]
    members += [(g, Role.GATEWAY, derive_credential(sc.seed, g)) for g in sc.gateway_ids]
    members += [(d, Role.DEVICE, derive_credential(sc.seed, d)) for d in sc.device_ids]
    return MembershipRegistry.from_members(members)


def build_chain(sc: Scenario, registry: MembershipRegistry) -> Chain:
    """Genesis plus one admin-signed block registering every device and its sensor."""
    chain = Chain.new(CHAIN_ID, registry)
    txs, nonce = [], 0
    for i, d in enumerate(sc.device_ids):
        nonce += 1
        txs.append(register_device(ADMIN, d, sc.gateway_of(d), nonce).signed(registry))
        nonce += 1
        txs.append(register_sensor(ADMIN, f"sensor-{i}", d, nonce, value=0).signed(registry))
    chain.append_block(chain.build_block(txs, sc.validator_ids[0], 0))
    return chain


@dataclass
class ScenarioResult:
    scenario: Scenario
    sim: Simulator
    replicas: list[Replica]
    gateways: list[GatewayNode]
    summary: dict

    @property
    def honest(self) -> list[Replica]:
        faulty = {f.node for f in self.scenario.faults if f.behavior is not Behavior.HONEST}
        return [r for r in self.replicas if r.replica_id not in faulty]

    @property
    def reference(self) -> Replica:
        return self.honest[0]

    def ledger_export(self) -> str:
        return self.reference.chain.export()

    def trace(self) -> str:
        return self.sim.trace_lines()

    def decision_log(self) -> str:
        entries = sorted((d for g in self.gateways for d in g.log), key=lambda d: (d.time, d.device))
        return "".join(d.line() + "\n" for d in entries)

    def summary_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.summary.items())

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def run_scenario(sc: Scenario, model: ClassifierModel) -> ScenarioResult:
    registry = build_registry(sc)
    sim = Simulator(sc.seed, sc.delay, sc.loss, registry)
    replicas = [Replica(v, sc.validator_ids, registry, build_chain(sc, registry),
                        base_timeout=sc.timeout, batch_size=sc.batch) for v in sc.validator_ids]
    for r in replicas:
        sim.add_node(r.replica_id, r)
    gateways = []
    for g in sc.gateway_ids:
        node = GatewayNode(g, registry, sc.validator_ids, model, sc.policy,
                           {d for d in sc.device_ids if sc.gateway_of(d) == g})
        gateways.append(node)
        sim.add_node(g, node)
    for f in sc.faults:
        sim.set_fault(f)

    flows = SyntheticFlows(sc.corpus_seed)
    rng = np.random.default_rng([sc.seed, 7])
    nonces = {d: 0 for d in sc.device_ids}
    submitted = []
    for spec in sc.submissions:
        nonces[spec.device] += 1
        value = spec.value if spec.value is not None else float(rng.integers(0, 1000))
        k = int(spec.device.split("-")[1])
        tx = sensor_update(spec.device, f"sensor-{k}", value, nonces[spec.device]).signed(registry)
        features = flows.sample(spec.cls, 1, rng)[0]
        sim.inject(spec.time, sc.gateway_of(spec.device),
                   Submission(tx, features, FEATURE_NAMES, spec.cls))
        submitted.append((spec, tx))
    sim.run(max_steps=sc.max_steps)
    result = ScenarioResult(sc, sim, replicas, gateways, {})
    result.summary = summarize(result)
    return result


def summarize(res: ScenarioResult) -> dict:
    honest = res.honest
    ref = res.reference
    chain_txs = {tx.tx_id.hex(): (b.height, tx) for b in ref.chain.blocks[2:] for tx in b.tx_list}
    rejected = {r.tx_id.hex(): r.reason for r in ref.rejections}
    decisions = [d for g in res.gateways for d in g.log]

    updates = alerts = rejections = unresolved = 0
    malicious = alerted = 0
    quarantine_rejections = 0
    for d in decisions:
        if d.truth is not None and d.truth != "Benign":
            malicious += 1
            alerted += d.action == "alert" and d.tx_id in chain_txs
        if d.action.startswith("reject:"):
            rejections += 1
        elif d.tx_id in chain_txs:
            kind = chain_txs[d.tx_id][1].kind
            updates += kind is TxKind.SENSOR_UPDATE
            alerts += kind is TxKind.ALERT
        elif d.tx_id in rejected:
            rejections += 1
            quarantine_rejections += rejected[d.tx_id] == "DeviceQuarantined"
        else:
            unresolved += 1

    logged = {d.tx_id for d in decisions}
    alert_log = {d.tx_id for d in decisions if d.action == "alert"}
    ledger_alerts = [h for h, (_, tx) in chain_txs.items() if tx.kind is TxKind.ALERT]

    # safety: honest replicas agree on every executed sequence number and block
    conflicts = 0
    seqs = set().union(*(r.executed for r in honest))
    for s in seqs:
        if len({r.executed[s] for r in honest if s in r.executed}) > 1:
            conflicts += 1
    heights = set().union(*(range(len(r.chain.blocks)) for r in honest))
    for h in heights:
        if len({r.chain.blocks[h].block_hash for r in honest if h < len(r.chain.blocks)}) > 1:
            conflicts += 1

    benign_sub = sum(1 for d in decisions if d.truth == "Benign")
    alerted_devices = {d.device for d in decisions if d.action == "alert"}
    clean = [d for d in decisions if d.truth == "Benign" and d.device not in alerted_devices]
    clean_committed = sum(1 for d in clean if d.tx_id in chain_txs)
    return {
        "scenario": res.scenario.name,
        "submissions": len(decisions),
        "committed_updates": updates,
        "committed_alerts": alerts,
        "rejections": rejections,
        "quarantine_rejections": quarantine_rejections,
        "unresolved": unresolved,
        "conservation": updates + alerts + rejections == len(decisions),
        "benign_submissions": benign_sub,
        "benign_clean_submissions": len(clean),
        "benign_clean_committed": clean_committed,
        "malicious_submissions": malicious,
        "alert_recall": alerted / malicious if malicious else 1.0,
        "view_changes": max(r.views_installed for r in honest),
        "final_view": max(r.view for r in honest),
        "height": ref.chain.height,
        "conflicting_commits": conflicts,
        "unmediated": sum(1 for h in chain_txs if h not in logged),
        "unsound_alerts": sum(1 for h in ledger_alerts if h not in alert_log),
        "chain_valid": ref.chain.verify(),
        "messages_delivered": res.sim.delivered,
        "messages_dropped": res.sim.dropped,
        "end_time": res.sim.now,
    }
