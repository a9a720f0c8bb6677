"""Gateway nodes: authenticate device submissions, classify their flow, endorse or alert.

A gateway is a netsim node. A device submission arrives as an input event
carrying a signed ``SensorUpdate`` and the raw flow features observed for it.
A benign verdict forwards the original transaction to every validator as a
``Request``; a malicious verdict discards it and forwards a gateway-signed
``Alert`` naming the device, the predicted class and its probability instead.
Every submission produces exactly one decision-log entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .consensus import Send, request_message
from .ids.data import SchemaMismatch
from .ledger import Transaction, TxKind, alert
from .membership import Role, MembershipRegistry
from .models import ClassifierModel, read_model

BENIGN = "Benign"
ALERT_AND_QUARANTINE = "alert-and-quarantine"
ALERT_ONLY = "alert-only"
POLICIES = (ALERT_AND_QUARANTINE, ALERT_ONLY)


class GatewayError(Exception):
    pass


class ModelMissing(GatewayError):
    pass


class AuthFailed(GatewayError):
    pass


@dataclass(frozen=True)
class Verdict:
    class_index: int
    class_name: str
    is_malicious: bool
    probability: float


@dataclass(frozen=True)
class Submission:
    """What a device hands its gateway: a signed transaction plus the flow behind it."""

    tx: Transaction
    features: np.ndarray
    names: tuple[str, ...]
    truth: str | None = None   # ground-truth class, kept for scoring only


@dataclass(frozen=True)
class ForwardToConsensus:
    tx: Transaction
    verdict: Verdict


@dataclass(frozen=True)
class AlertRaised:
    tx: Transaction
    verdict: Verdict


@dataclass(frozen=True)
class Decision:
    time: int
    device: str
    verdict: Verdict | None
    action: str          # forward | alert | reject:<reason>
    tx_id: str
    truth: str | None = None

    def line(self) -> str:
        cls = self.verdict.class_name if self.verdict else "-"
        prob = f"{self.verdict.probability:.6f}" if self.verdict else "-"
        return f"{self.time}\t{self.device}\t{cls}\t{prob}\t{self.action}\t{self.tx_id}"


def project(features: np.ndarray, names: Sequence[str], schema_names: Sequence[str]) -> np.ndarray:
    """Pick the model's features, by name, out of a raw flow vector."""
    pos = {n: i for i, n in enumerate(names)}
    missing = [n for n in schema_names if n not in pos]
    if missing:
        raise SchemaMismatch(f"flow lacks model features: {', '.join(missing[:5])}")
    return np.asarray(features, dtype=np.float64)[[pos[n] for n in schema_names]]


@dataclass
class GatewayNode:
    gateway_id: str
    registry: MembershipRegistry
    validators: list[str]
    model: ClassifierModel | None = None
    policy: str = ALERT_AND_QUARANTINE
    devices: set[str] = field(default_factory=set)
    pending: list[Transaction] = field(default_factory=list)
    log: list[Decision] = field(default_factory=list)
    nonce: int = 0

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.registry.role_of(self.gateway_id) is not Role.GATEWAY:
            raise GatewayError(f"{self.gateway_id!r} is not a registered gateway")

    # -- model

    def load_model(self, path: str | Path) -> "GatewayNode":
        """Swap in a model file; on any load error the current model stays active."""
        self.model = read_model(path)
        return self

    def inspect_flow(self, features: np.ndarray, names: Sequence[str] | None = None) -> Verdict:
        if self.model is None:
            raise ModelMissing(f"{self.gateway_id} has no model loaded")
        x = features if names is None else project(features, names, self.model.schema.names)
        idx, proba = self.model.predict(np.asarray(x, dtype=np.float64)[None, :])
        k = int(idx[0])
        name = self.model.labels.classes[k]
        return Verdict(k, name, name != BENIGN, float(proba[0, k]))

    # -- submissions

    def authenticate(self, tx: Transaction) -> None:
        if tx.kind is not TxKind.SENSOR_UPDATE:
            raise AuthFailed("devices may only submit sensor updates")
        if self.registry.role_of(tx.submitter) is not Role.DEVICE:
            raise AuthFailed(f"{tx.submitter!r} is not a registered device")
        if not self.registry.verify(tx.submitter, tx.payload(), tx.signature):
            raise AuthFailed(f"bad signature from {tx.submitter!r}")
        if tx.submitter not in self.devices:
            raise AuthFailed(f"{tx.submitter!r} is not attached to {self.gateway_id}")

    def handle_submission(self, tx: Transaction, features: np.ndarray,
                          names: Sequence[str] | None = None) -> ForwardToConsensus | AlertRaised:
        self.authenticate(tx)
        verdict = self.inspect_flow(features, names)
        if not verdict.is_malicious:
            self.pending.append(tx)
            return ForwardToConsensus(tx, verdict)
        self.nonce += 1
        raised = alert(self.gateway_id, tx.submitter, verdict.class_name,
                       round(verdict.probability, 6), self.nonce,
                       quarantine=self.policy == ALERT_AND_QUARANTINE).signed(self.registry)
        self.pending.append(raised)
        return AlertRaised(raised, verdict)

    def _outbound(self) -> list:
        out = []
        for tx in self.pending:
            msg = request_message(tx, self.gateway_id, self.registry)
            out += [Send(v, msg) for v in self.validators]
        self.pending.clear()
        return out

    def on_input(self, sub: Submission, now: int) -> list:
        tx = sub.tx
        try:
            result = self.handle_submission(tx, sub.features, sub.names)
        except (AuthFailed, SchemaMismatch, ModelMissing) as exc:
            self.log.append(Decision(now, tx.submitter, None, f"reject:{type(exc).__name__}",
                                     tx.tx_id.hex(), sub.truth))
            return []
        action = "forward" if isinstance(result, ForwardToConsensus) else "alert"
        self.log.append(Decision(now, tx.submitter, result.verdict, action,
                                 result.tx.tx_id.hex(), sub.truth))
        return self._outbound()

    def on_message(self, msg, now: int) -> list:
        return []

    def on_timer(self, token: int, now: int) -> list:
        return []

    def decision_log(self) -> str:
        return "".join(d.line() + "\n" for d in self.log)
