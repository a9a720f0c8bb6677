"""Hash-chained block store and the world state of IoT device and sensor assets.

Blocks are linked by SHA-256 over a canonical, length-prefixed encoding (see
``docs/FORMATS.md``). The world state is a materialized view: replaying the
committed blocks from genesis reproduces it exactly.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from ._codec import ZERO_DIGEST, Encoder, sha256, to_decimal
from .membership import Action, MembershipRegistry, Role, authorize

Digest = bytes


class TxKind(str, Enum):
    SENSOR_UPDATE = "SensorUpdate"
    ALERT = "Alert"
    REGISTER = "Register"


class DeviceStatus(str, Enum):
    ACTIVE = "active"
    QUARANTINED = "quarantined"


# -- errors -----------------------------------------------------------------

class LedgerError(Exception):
    pass


class TxRejected(LedgerError):
    """A transaction failed validation; ``reason`` names the rule."""

    reason = "Rejected"

    def __init__(self, message: str = "") -> None:
        super().__init__(message or self.reason)


class UnknownSensor(TxRejected):
    reason = "UnknownSensor"


class UnknownDevice(TxRejected):
    reason = "UnknownDevice"


class BadSignature(TxRejected):
    reason = "BadSignature"


class Unauthorized(TxRejected):
    reason = "Unauthorized"


class DeviceQuarantined(TxRejected):
    reason = "DeviceQuarantined"


class DuplicateTransaction(TxRejected):
    reason = "DuplicateTransaction"


class DuplicateAsset(TxRejected):
    reason = "DuplicateAsset"


class MalformedTransaction(TxRejected):
    reason = "MalformedTransaction"


class BlockRejected(LedgerError):
    reason = "BlockRejected"


class BadLink(BlockRejected):
    reason = "BadLink"


class BadHeight(BlockRejected):
    reason = "BadHeight"


class BadHash(BlockRejected):
    reason = "BadHash"


class BadProposer(BlockRejected):
    reason = "BadProposer"


class InvalidTx(BlockRejected):
    reason = "InvalidTx"

    def __init__(self, index: int, cause: TxRejected) -> None:
        super().__init__(f"transaction {index} rejected: {cause.reason} ({cause})")
        self.index = index
        self.cause = cause


class NotFound(LedgerError, KeyError):
    pass


class ExportFormatError(LedgerError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


# -- records ----------------------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    """One ledger transaction.

    ``SensorUpdate`` carries ``sensor_id`` and ``value``; ``Alert`` carries
    ``device_id``, ``alert_class`` and ``probability``; ``Register`` creates a
    device (``device_id`` + ``owner``) or a sensor (``sensor_id`` +
    ``device_id``, optional initial ``value``).
    """

    kind: TxKind
    submitter: str
    nonce: int
    device_id: str | None = None
    sensor_id: str | None = None
    value: Decimal | None = None
    alert_class: str | None = None
    probability: Decimal | None = None
    owner: str | None = None
    quarantine: bool = False
    signature: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TxKind(self.kind))
        if self.value is not None:
            object.__setattr__(self, "value", to_decimal(self.value))
        if self.probability is not None:
            object.__setattr__(self, "probability", to_decimal(self.probability))

    def payload(self) -> bytes:
        """Canonical encoding of every field except the signature."""
        return (Encoder()
                .text("tx")
                .text(self.kind.value)
                .text(self.submitter)
                .int(self.nonce)
                .opt_text(self.device_id)
                .opt_text(self.sensor_id)
                .opt_decimal(self.value)
                .opt_text(self.alert_class)
                .opt_decimal(self.probability)
                .opt_text(self.owner)
                .bool(self.quarantine)
                .getvalue())

    def encode(self) -> bytes:
        return Encoder().raw(self.payload()).raw(self.signature).getvalue()

    @property
    def tx_id(self) -> Digest:
        return sha256(self.payload())

    def signed(self, registry: MembershipRegistry) -> Transaction:
        return replace(self, signature=registry.sign(self.submitter, self.payload()))

    def signed_with(self, sign) -> Transaction:
        return replace(self, signature=sign(self.payload()))


def sensor_update(submitter: str, sensor_id: str, value, nonce: int) -> Transaction:
    return Transaction(TxKind.SENSOR_UPDATE, submitter, nonce, sensor_id=sensor_id, value=value)


def alert(submitter: str, device_id: str, alert_class: str, probability, nonce: int,
          quarantine: bool = True) -> Transaction:
    return Transaction(TxKind.ALERT, submitter, nonce, device_id=device_id,
                       alert_class=alert_class, probability=probability, quarantine=quarantine)


def register_device(submitter: str, device_id: str, owner: str, nonce: int) -> Transaction:
    return Transaction(TxKind.REGISTER, submitter, nonce, device_id=device_id, owner=owner)


def register_sensor(submitter: str, sensor_id: str, device_id: str, nonce: int,
                    value=None) -> Transaction:
    return Transaction(TxKind.REGISTER, submitter, nonce, device_id=device_id,
                       sensor_id=sensor_id, value=value)


@dataclass(frozen=True)
class Block:
    chain_id: str
    height: int
    prev_hash: Digest
    tx_list: tuple[Transaction, ...]
    proposer: str
    timestamp: int
    block_hash: Digest = b""

    def header_and_body(self) -> bytes:
        enc = (Encoder()
               .text("block")
               .text(self.chain_id)
               .int(self.height)
               .raw(self.prev_hash)
               .text(self.proposer)
               .int(self.timestamp)
               .int(len(self.tx_list)))
        for tx in self.tx_list:
            enc.raw(tx.encode())
        return enc.getvalue()

    def sealed(self) -> Block:
        return replace(self, block_hash=hash_block(self))


def hash_block(block: Block) -> Digest:
    """SHA-256 of the block's canonical header and body (``block_hash`` excluded)."""
    return sha256(block.header_and_body())


def create_genesis(config: dict) -> Block:
    chain_id = config["chain_id"]
    if not isinstance(chain_id, str) or not chain_id:
        raise ValueError("config requires a non-empty chain_id")
    return Block(chain_id, 0, ZERO_DIGEST, (), "genesis", 0).sealed()


# -- world state --------------------------------------------------------------

@dataclass
class SensorAsset:
    sensor_id: str
    device_id: str
    last_value: Decimal
    updated_at: int


@dataclass
class DeviceAsset:
    device_id: str
    owner_member: str
    status: DeviceStatus = DeviceStatus.ACTIVE


@dataclass
class WorldState:
    sensors: dict[str, SensorAsset] = field(default_factory=dict)
    devices: dict[str, DeviceAsset] = field(default_factory=dict)
    alerts: list[Transaction] = field(default_factory=list)
    applied: set[bytes] = field(default_factory=set)
    clock: int = 0

    def copy(self) -> WorldState:
        return copy.deepcopy(self)

    def apply(self, tx: Transaction) -> None:
        """Apply a validated transaction in place."""
        self.clock += 1
        self.applied.add(tx.tx_id)
        if tx.kind is TxKind.SENSOR_UPDATE:
            sensor = self.sensors[tx.sensor_id]
            sensor.last_value = tx.value
            sensor.updated_at = self.clock
        elif tx.kind is TxKind.ALERT:
            self.alerts.append(tx)
            if tx.quarantine:
                self.devices[tx.device_id].status = DeviceStatus.QUARANTINED
        elif tx.sensor_id is not None:
            self.sensors[tx.sensor_id] = SensorAsset(
                tx.sensor_id, tx.device_id,
                tx.value if tx.value is not None else to_decimal(0), self.clock)
        elif tx.device_id in self.devices:
            # re-registration lifts a quarantine
            dev = self.devices[tx.device_id]
            dev.status = DeviceStatus.ACTIVE
            dev.owner_member = tx.owner
        else:
            self.devices[tx.device_id] = DeviceAsset(tx.device_id, tx.owner)

    def dump(self) -> str:
        """Deterministic JSON dump ordered by asset id."""
        doc = {
            "devices": [
                {"device_id": d.device_id, "owner_member": d.owner_member, "status": d.status.value}
                for _, d in sorted(self.devices.items())
            ],
            "sensors": [
                {"sensor_id": s.sensor_id, "device_id": s.device_id,
                 "last_value": str(s.last_value), "updated_at": s.updated_at}
                for _, s in sorted(self.sensors.items())
            ],
            "alerts": [tx_to_json(a) for a in self.alerts],
            "clock": self.clock,
        }
        return json.dumps(doc, indent=2) + "\n"


def validate_transaction(state: WorldState, tx: Transaction, registry: MembershipRegistry) -> None:
    """Raise a ``TxRejected`` subclass unless ``tx`` may be applied to ``state``."""
    role = registry.role_of(tx.submitter)
    if role is None:
        raise Unauthorized(f"unknown submitter {tx.submitter!r}")
    if not registry.verify(tx.submitter, tx.payload(), tx.signature):
        raise BadSignature(f"signature of {tx.submitter!r} does not verify")
    if tx.tx_id in state.applied:
        raise DuplicateTransaction(tx.tx_id.hex())
    principal = registry.principal(tx.submitter)

    if tx.kind is TxKind.SENSOR_UPDATE:
        if tx.sensor_id is None or tx.value is None:
            raise MalformedTransaction("SensorUpdate requires sensor_id and value")
        if not authorize(principal, Action.SUBMIT_TX):
            raise Unauthorized(f"{role.value} may not submit transactions")
        sensor = state.sensors.get(tx.sensor_id)
        if sensor is None:
            raise UnknownSensor(tx.sensor_id)
        device = state.devices.get(sensor.device_id)
        if device is None:
            raise UnknownDevice(sensor.device_id)
        if tx.submitter not in (device.owner_member, device.device_id):
            raise Unauthorized(f"{tx.submitter!r} does not own device {device.device_id!r}")
        if device.status is DeviceStatus.QUARANTINED:
            raise DeviceQuarantined(device.device_id)

    elif tx.kind is TxKind.ALERT:
        if tx.device_id is None or tx.alert_class is None:
            raise MalformedTransaction("Alert requires device_id and alert_class")
        if role is not Role.GATEWAY or not authorize(principal, Action.SUBMIT_TX):
            raise Unauthorized("only gateways raise alerts")
        device = state.devices.get(tx.device_id)
        if device is None:
            raise UnknownDevice(tx.device_id)
        if device.owner_member != tx.submitter:
            raise Unauthorized(f"{tx.submitter!r} does not own device {tx.device_id!r}")
        if device.status is DeviceStatus.QUARANTINED:
            raise DeviceQuarantined(tx.device_id)

    else:
        if not authorize(principal, Action.REGISTER_MEMBER):
            raise Unauthorized(f"{role.value} may not register assets")
        if tx.device_id is None:
            raise MalformedTransaction("Register requires device_id")
        if tx.sensor_id is not None:
            if tx.device_id not in state.devices:
                raise UnknownDevice(tx.device_id)
            if tx.sensor_id in state.sensors:
                raise DuplicateAsset(tx.sensor_id)
        else:
            if tx.owner is None or registry.role_of(tx.owner) is None:
                raise MalformedTransaction("device registration requires a registered owner")
            existing = state.devices.get(tx.device_id)
            if existing is not None and existing.status is DeviceStatus.ACTIVE:
                raise DuplicateAsset(tx.device_id)


def apply_transaction(state: WorldState, tx: Transaction) -> WorldState:
    """Return a new state with ``tx`` applied; ``state`` is left untouched."""
    new = state.copy()
    new.apply(tx)
    return new


def query_asset(state: WorldState, asset_id: str) -> SensorAsset | DeviceAsset:
    if asset_id in state.sensors:
        return state.sensors[asset_id]
    if asset_id in state.devices:
        return state.devices[asset_id]
    raise NotFound(asset_id)


# -- chain ----------------------------------------------------------------------

def _check_block_shape(block: Block) -> None:
    if len(block.prev_hash) != 32 or len(block.block_hash) != 32:
        raise BadHash(f"block {block.height}: digests must be 32 bytes")
    if hash_block(block) != block.block_hash:
        raise BadHash(f"block {block.height}: stored hash does not match contents")


def verify_chain(blocks: Sequence[Block], registry: MembershipRegistry | None = None) -> bool:
    """True iff every link, height and hash invariant holds from genesis to tip.

    With a ``registry``, transaction signatures are re-checked as well.
    """
    return first_invalid_height(blocks, registry) is None


def first_invalid_height(blocks: Sequence[Block],
                         registry: MembershipRegistry | None = None) -> int | None:
    """Position of the first block breaking an invariant, or None."""
    if not blocks:
        return 0
    for i, block in enumerate(blocks):
        try:
            _check_block_shape(block)
        except BadHash:
            return i
        if block.height != i:
            return i
        if i == 0:
            if block.prev_hash != ZERO_DIGEST or block.tx_list:
                return 0
        else:
            prev = blocks[i - 1]
            if block.prev_hash != prev.block_hash or block.chain_id != prev.chain_id:
                return i
            if block.timestamp < prev.timestamp:
                return i
        if registry is not None:
            for tx in block.tx_list:
                if not registry.verify(tx.submitter, tx.payload(), tx.signature):
                    return i
    return None


class Chain:
    """A single-writer chain plus its incrementally maintained world state."""

    def __init__(self, genesis: Block, registry: MembershipRegistry) -> None:
        _check_block_shape(genesis)
        if genesis.height != 0 or genesis.prev_hash != ZERO_DIGEST or genesis.tx_list:
            raise BadLink("not a genesis block")
        self.blocks: list[Block] = [genesis]
        self.registry = registry
        self.state = WorldState()

    @classmethod
    def new(cls, chain_id: str, registry: MembershipRegistry) -> Chain:
        return cls(create_genesis({"chain_id": chain_id}), registry)

    @property
    def chain_id(self) -> str:
        return self.blocks[0].chain_id

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    def __len__(self) -> int:
        return len(self.blocks)

    def build_block(self, txs: Iterable[Transaction], proposer: str, timestamp: int) -> Block:
        tip = self.tip
        return Block(self.chain_id, tip.height + 1, tip.block_hash, tuple(txs),
                     proposer, timestamp).sealed()

    def append_block(self, block: Block) -> None:
        tip = self.tip
        if block.chain_id != tip.chain_id or block.prev_hash != tip.block_hash:
            raise BadLink(f"block {block.height} does not link to tip {tip.height}")
        if block.height != tip.height + 1:
            raise BadHeight(f"expected height {tip.height + 1}, got {block.height}")
        if block.timestamp < tip.timestamp:
            raise BadHeight("block timestamp runs backwards")
        _check_block_shape(block)
        if block.proposer not in self.registry.members or not authorize(
                self.registry.principal(block.proposer), Action.PROPOSE_BLOCK):
            raise BadProposer(f"{block.proposer!r} may not propose blocks")
        rolling = self.state.copy()
        for i, tx in enumerate(block.tx_list):
            try:
                validate_transaction(rolling, tx, self.registry)
            except TxRejected as exc:
                raise InvalidTx(i, exc) from None
            rolling.apply(tx)
        self.blocks.append(block)
        self.state = rolling

    def verify(self) -> bool:
        return verify_chain(self.blocks, self.registry)

    def state_at(self, height: int) -> WorldState:
        """Snapshot of the world state after block ``height`` (replayed)."""
        return replay(self.blocks[: height + 1])

    def history(self, sensor_id: str) -> list[tuple[int, Transaction]]:
        out = []
        for block in self.blocks:
            for tx in block.tx_list:
                if tx.sensor_id == sensor_id and tx.kind is not TxKind.ALERT:
                    out.append((block.height, tx))
        return out

    def export(self) -> str:
        return export_chain(self.blocks)


def replay(blocks: Iterable[Block]) -> WorldState:
    """Fold every transaction from genesis onwards into a fresh state."""
    state = WorldState()
    for block in blocks:
        for tx in block.tx_list:
            state.apply(tx)
    return state


# -- export: one JSON object per block, canonical key order, hex binaries --------

_TX_KEYS = ("kind", "submitter", "nonce", "device_id", "sensor_id", "value",
            "alert_class", "probability", "owner", "quarantine", "signature")
_BLOCK_KEYS = ("height", "chain_id", "prev_hash", "proposer", "timestamp", "txs", "block_hash")


def tx_to_json(tx: Transaction) -> dict:
    return {
        "kind": tx.kind.value,
        "submitter": tx.submitter,
        "nonce": tx.nonce,
        "device_id": tx.device_id,
        "sensor_id": tx.sensor_id,
        "value": None if tx.value is None else str(tx.value),
        "alert_class": tx.alert_class,
        "probability": None if tx.probability is None else str(tx.probability),
        "owner": tx.owner,
        "quarantine": tx.quarantine,
        "signature": tx.signature.hex(),
    }


def block_to_json(block: Block) -> dict:
    return {
        "height": block.height,
        "chain_id": block.chain_id,
        "prev_hash": block.prev_hash.hex(),
        "proposer": block.proposer,
        "timestamp": block.timestamp,
        "txs": [tx_to_json(tx) for tx in block.tx_list],
        "block_hash": block.block_hash.hex(),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def export_chain(blocks: Iterable[Block]) -> str:
    return "".join(_dumps(block_to_json(b)) + "\n" for b in blocks)


def _hex(s, what: str) -> bytes:
    if not isinstance(s, str):
        raise ValueError(f"{what} must be hex text")
    raw = bytes.fromhex(s)
    if raw.hex() != s:
        raise ValueError(f"{what} is not canonical lowercase hex")
    return raw


def _typed(obj: dict, key: str, kind, optional: bool = False):
    v = obj[key]
    if v is None and optional:
        return None
    if not isinstance(v, kind) or (kind is int and isinstance(v, bool)):
        raise ValueError(f"{key} has the wrong type")
    return v


def tx_from_json(obj: dict) -> Transaction:
    if not isinstance(obj, dict) or tuple(obj) != _TX_KEYS:
        raise ValueError("transaction keys out of canonical order")
    for key in ("device_id", "sensor_id", "value", "alert_class", "probability", "owner"):
        _typed(obj, key, str, optional=True)
    _typed(obj, "submitter", str)
    _typed(obj, "nonce", int)
    _typed(obj, "quarantine", bool)
    return Transaction(
        kind=TxKind(obj["kind"]),
        submitter=obj["submitter"],
        nonce=obj["nonce"],
        device_id=obj["device_id"],
        sensor_id=obj["sensor_id"],
        value=None if obj["value"] is None else Decimal(obj["value"]),
        alert_class=obj["alert_class"],
        probability=None if obj["probability"] is None else Decimal(obj["probability"]),
        owner=obj["owner"],
        quarantine=obj["quarantine"],
        signature=_hex(obj["signature"], "signature"),
    )


def block_from_json(obj: dict) -> Block:
    if not isinstance(obj, dict) or tuple(obj) != _BLOCK_KEYS:
        raise ValueError("block keys out of canonical order")
    _typed(obj, "chain_id", str)
    _typed(obj, "proposer", str)
    _typed(obj, "height", int)
    _typed(obj, "timestamp", int)
    _typed(obj, "txs", list)
    return Block(
        chain_id=obj["chain_id"],
        height=obj["height"],
        prev_hash=_hex(obj["prev_hash"], "prev_hash"),
        tx_list=tuple(tx_from_json(t) for t in obj["txs"]),
        proposer=obj["proposer"],
        timestamp=obj["timestamp"],
        block_hash=_hex(obj["block_hash"], "block_hash"),
    )


def load_export(data: str | bytes) -> list[Block]:
    """Parse an export strictly: every line must be its block's canonical rendering."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExportFormatError(data[: exc.start].count(b"\n") + 1, "invalid UTF-8") from None
    if not data.endswith("\n"):
        raise ExportFormatError(data.count("\n") + 1, "export must end with a newline")
    blocks = []
    for lineno, line in enumerate(data[:-1].split("\n"), start=1):
        try:
            block = block_from_json(json.loads(line))
        except (ValueError, TypeError, KeyError, ArithmeticError, struct.error) as exc:
            raise ExportFormatError(lineno, f"malformed block record: {exc}") from None
        if _dumps(block_to_json(block)) != line:
            raise ExportFormatError(lineno, "record is not in canonical form")
        blocks.append(block)
    return blocks


def read_export(path: str | Path) -> list[Block]:
    return load_export(Path(path).read_bytes())
