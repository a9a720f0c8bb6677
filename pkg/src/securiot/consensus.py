"""PBFT replication of transaction batches among validator nodes.

Each :class:`Replica` is a pure state machine driven by ``on_message`` and
``on_timer``; both return a list of outputs (:class:`Send` or
:class:`SetTimer`) for the scheduler to deliver. Replicas agree on ordered
*batches*; once a batch is committed and every lower sequence number has
executed, the replica filters it against its world state and appends the
resulting block to its chain. Filtering is deterministic, so honest replicas
build identical blocks.

Beyond the three-phase exchange and the view-change sub-protocol, a replica
whose request timer fires first asks its peers for commit certificates
(``Fetch``/``CommitProof``). A certificate of 2f+1 signed commits proves the
batch was decided, so a replica that was fed a conflicting proposal catches up
without forcing a view change. Only a second expiry triggers ``ViewChange``.
The primary arms the same timer for its own proposals. While a view change is
under way each expiry fetches again and moves to the next view; once nothing
is pending the replica stops escalating and waits for its peers.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from ._codec import Encoder, sha256
from .ledger import Chain, Transaction, TxRejected, validate_transaction
from .membership import Action, MembershipRegistry, authorize

log = logging.getLogger(__name__)

WATERMARK_WINDOW = 256
BATCH_SIZE = 100
BASE_TIMEOUT = 50
BUFFER_LIMIT = 4096
FETCH_LIMIT = 32


class Phase(str, Enum):
    REQUEST = "Request"
    PRE_PREPARE = "PrePrepare"
    PREPARE = "Prepare"
    COMMIT = "Commit"
    VIEW_CHANGE = "ViewChange"
    NEW_VIEW = "NewView"
    FETCH = "Fetch"
    COMMIT_PROOF = "CommitProof"


class ConsensusError(Exception):
    pass


class NotPrimary(ConsensusError):
    pass


class InsufficientViewChangeQuorum(ConsensusError):
    pass


def primary_of(view: int, n_replicas: int) -> int:
    """Index of the primary replica for ``view``."""
    if n_replicas < 4:
        raise ValueError("PBFT needs at least 4 replicas")
    return view % n_replicas


def max_faulty(n_replicas: int) -> int:
    return (n_replicas - 1) // 3


# -- messages -------------------------------------------------------------------

@dataclass(frozen=True)
class Batch:
    """An ordered list of transactions proposed for one sequence number."""

    seq: int
    proposer: str
    txs: tuple[Transaction, ...] = ()

    def encode(self) -> bytes:
        enc = Encoder().text("batch").int(self.seq).text(self.proposer).int(len(self.txs))
        for tx in self.txs:
            enc.raw(tx.encode())
        return enc.getvalue()

    @property
    def digest(self) -> bytes:
        return sha256(self.encode())


@dataclass(frozen=True)
class PreparedCertificate:
    pre_prepare: PbftMessage
    prepares: tuple[PbftMessage, ...]

    @property
    def view(self) -> int:
        return self.pre_prepare.view

    @property
    def seq(self) -> int:
        return self.pre_prepare.seq


@dataclass(frozen=True)
class CommitProof:
    batch: Batch
    commits: tuple[PbftMessage, ...]


@dataclass(frozen=True)
class PbftMessage:
    phase: Phase
    view: int
    seq: int
    digest: bytes
    sender: str
    signature: bytes = b""
    batch: Batch | None = None
    tx: Transaction | None = None
    certificates: tuple[PreparedCertificate, ...] = ()
    view_changes: tuple[PbftMessage, ...] = ()
    pre_prepares: tuple[PbftMessage, ...] = ()
    proofs: tuple[CommitProof, ...] = ()

    def payload(self) -> bytes:
        enc = (Encoder().text("pbft").text(self.phase.value).int(self.view).int(self.seq)
               .raw(self.digest).text(self.sender))
        enc.raw(self.batch.encode() if self.batch is not None else b"")
        enc.raw(self.tx.encode() if self.tx is not None else b"")
        enc.int(len(self.certificates))
        for cert in self.certificates:
            enc.raw(cert.pre_prepare.encode()).int(len(cert.prepares))
            for p in cert.prepares:
                enc.raw(p.encode())
        enc.int(len(self.view_changes))
        for m in self.view_changes:
            enc.raw(m.encode())
        enc.int(len(self.pre_prepares))
        for m in self.pre_prepares:
            enc.raw(m.encode())
        enc.int(len(self.proofs))
        for proof in self.proofs:
            enc.raw(proof.batch.encode()).int(len(proof.commits))
            for c in proof.commits:
                enc.raw(c.encode())
        return enc.getvalue()

    def encode(self) -> bytes:
        return Encoder().raw(self.payload()).raw(self.signature).getvalue()

    def signed(self, registry: MembershipRegistry) -> PbftMessage:
        return replace(self, signature=registry.sign(self.sender, self.payload()))


def request_message(tx: Transaction, client: str, registry: MembershipRegistry) -> PbftMessage:
    return PbftMessage(Phase.REQUEST, 0, 0, tx.tx_id, client, tx=tx).signed(registry)


# -- outputs ----------------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    dest: str
    msg: PbftMessage


@dataclass(frozen=True)
class SetTimer:
    delay: int
    token: int


@dataclass(frozen=True)
class Rejection:
    tx_id: bytes
    reason: str
    seq: int


# -- replica ------------------------------------------------------------------------

@dataclass
class Slot:
    """Log entry for one (view, seq)."""

    pre_prepare: PbftMessage | None = None
    prepares: dict[bytes, dict[str, PbftMessage]] = field(default_factory=dict)
    commits: dict[bytes, dict[str, PbftMessage]] = field(default_factory=dict)
    commit_sent: bool = False


class Replica:
    def __init__(self, replica_id: str, validators: Sequence[str], registry: MembershipRegistry,
                 chain: Chain, *, base_timeout: int = BASE_TIMEOUT, batch_size: int = BATCH_SIZE,
                 window: int = WATERMARK_WINDOW, buffer_limit: int = BUFFER_LIMIT) -> None:
        self.replica_id = replica_id
        self.validators = list(validators)
        self.index = self.validators.index(replica_id)
        self.n = len(self.validators)
        self.f = max_faulty(self.n)
        primary_of(0, self.n)
        self.registry = registry
        self.chain = chain
        self.base_timeout = base_timeout
        self.batch_size = batch_size
        self.window = window

        self.view = 0
        self.changing_to: int | None = None
        self.log: dict[tuple[int, int], Slot] = {}
        self.last_executed = 0
        self.assigned_upto = 0
        self.decided: dict[int, CommitProof] = {}
        self.proofs: dict[int, CommitProof] = {}
        self.executed: dict[int, bytes] = {}
        self.pending: dict[bytes, Transaction] = {}
        self.done: set[bytes] = set()
        self.rejections: list[Rejection] = []
        self.suspicions: list[str] = []
        self.vc_msgs: dict[int, dict[str, PbftMessage]] = {}
        self.buffer: deque[PbftMessage] = deque(maxlen=buffer_limit)
        self.views_installed = 0
        self.fault: str | None = None

        self.timeout = base_timeout
        self.timer_token = 0
        self.timer_active = False
        self.fetch_tried = False

    # -- helpers

    @property
    def is_primary(self) -> bool:
        return self.primary_id(self.view) == self.replica_id

    def primary_id(self, view: int) -> str:
        return self.validators[primary_of(view, self.n)]

    def _sign(self, msg: PbftMessage) -> PbftMessage:
        return msg.signed(self.registry)

    def _broadcast(self, msg: PbftMessage) -> list:
        return [Send(v, msg) for v in self.validators if v != self.replica_id]

    def _suspect(self, why: str) -> None:
        self.suspicions.append(why)
        log.debug("%s suspects: %s", self.replica_id, why)

    def _verify(self, msg: PbftMessage) -> bool:
        return self.registry.verify(msg.sender, msg.payload(), msg.signature)

    def _is_validator(self, member: str) -> bool:
        return (member in self.validators and member in self.registry.members
                and authorize(self.registry.principal(member), Action.VALIDATE_BLOCK))

    def _slot(self, view: int, seq: int) -> Slot:
        key = (view, seq)
        slot = self.log.get(key)
        if slot is None:
            slot = self.log[key] = Slot()
        return slot

    def _in_window(self, seq: int) -> bool:
        return 1 <= seq <= self.last_executed + self.window

    # -- timers

    def _start_timer(self) -> list:
        if self.timer_active or not self.pending:
            return []
        self.timer_token += 1
        self.timer_active = True
        return [SetTimer(self.timeout, self.timer_token)]

    def _restart_timer(self) -> list:
        self.timer_active = False
        self.timer_token += 1
        return self._start_timer()

    def on_timer(self, token: int, now: int = 0) -> list:
        if self.fault is not None or token != self.timer_token or not self.timer_active:
            return []
        self.timer_active = False
        if self.changing_to is not None:
            if not self.pending:
                return []   # nothing left to push for; wait for the peers' NewView
            # keep asking for proofs too: a replica stranded by lost messages can
            # still finish its requests while it waits for peers to follow
            return self._fetch() + self._start_view_change(self.changing_to + 1)
        if not self.pending:
            return []
        if not self.fetch_tried:
            self.fetch_tried = True
            return self._fetch() + self._start_timer()
        return self._start_view_change(self.view + 1)

    def _fetch(self) -> list:
        msg = self._sign(PbftMessage(Phase.FETCH, self.view, self.last_executed + 1, b"",
                                     self.replica_id))
        return self._broadcast(msg)

    # -- entry points

    def on_message(self, msg: PbftMessage, now: int = 0) -> list:
        if self.fault is not None:
            return []
        if msg.sender not in self.registry.members or not self._verify(msg):
            self._suspect(f"bad signature on {msg.phase.value} from {msg.sender}")
            return []
        if msg.phase is Phase.REQUEST:
            return self._on_request_msg(msg)
        if not self._is_validator(msg.sender):
            self._suspect(f"{msg.phase.value} from non-validator {msg.sender}")
            return []
        handler = {
            Phase.PRE_PREPARE: self.on_pre_prepare,
            Phase.PREPARE: self.on_prepare,
            Phase.COMMIT: self.on_commit,
            Phase.VIEW_CHANGE: self.on_view_change,
            Phase.NEW_VIEW: self.on_new_view,
            Phase.FETCH: self.on_fetch,
            Phase.COMMIT_PROOF: self.on_commit_proof,
        }[msg.phase]
        return handler(msg)

    def _on_request_msg(self, msg: PbftMessage) -> list:
        if msg.tx is None or msg.tx.tx_id != msg.digest:
            return []
        relay = [] if self._is_validator(msg.sender) else [msg]
        return self.on_request([msg.tx], relay=relay)

    def _admit(self, tx: Transaction) -> bool:
        tx_id = tx.tx_id
        if tx_id in self.done or tx_id in self.pending:
            return False
        submitter = tx.submitter
        if submitter not in self.registry.members:
            self._reject(tx_id, "Unauthorized", 0)
            return False
        if not self.registry.verify(submitter, tx.payload(), tx.signature):
            self._reject(tx_id, "BadSignature", 0)
            return False
        principal = self.registry.principal(submitter)
        if not (authorize(principal, Action.SUBMIT_TX)
                or authorize(principal, Action.REGISTER_MEMBER)):
            self._reject(tx_id, "Unauthorized", 0)
            return False
        self.pending[tx_id] = tx
        return True

    def _reject(self, tx_id: bytes, reason: str, seq: int) -> None:
        self.done.add(tx_id)
        self.rejections.append(Rejection(tx_id, reason, seq))

    def on_request(self, txs: Iterable[Transaction], relay: Sequence[PbftMessage] = ()) -> list:
        """Admit client transactions. The primary proposes; backups relay and arm a timer."""
        admitted = [tx for tx in txs if self._admit(tx)]
        if not admitted:
            return []
        if self.is_primary and self.changing_to is None:
            # the primary watches its own proposals too, so lost commits get fetched
            return self.propose() + self._start_timer()
        out = [Send(self.primary_id(self.view), m) for m in relay]
        return out + self._start_timer()

    def propose(self) -> list:
        """Primary only: emit a PrePrepare for the next batch of pending transactions."""
        if not self.is_primary or self.changing_to is not None:
            raise NotPrimary(f"{self.replica_id} is not primary of view {self.view}")
        if self.assigned_upto > self.last_executed or not self.pending:
            return []
        seq = max(self.last_executed, self.assigned_upto) + 1
        if not self._in_window(seq):
            return []
        txs = tuple(list(self.pending.values())[: self.batch_size])
        batch = Batch(seq, self.replica_id, txs)
        pp = self._sign(PbftMessage(Phase.PRE_PREPARE, self.view, seq, batch.digest,
                                    self.replica_id, batch=batch))
        self.assigned_upto = seq
        self._slot(self.view, seq).pre_prepare = pp
        return self._broadcast(pp) + self._advance(self.view, seq)

    # -- normal case

    def _view_gate(self, msg: PbftMessage) -> bool:
        """True if ``msg`` belongs to the active view; buffers future views."""
        if msg.view > self.view:
            self.buffer.append(msg)
            return False
        if msg.view < self.view or self.changing_to is not None:
            return False
        return self._in_window(msg.seq)

    def on_pre_prepare(self, msg: PbftMessage) -> list:
        if not self._view_gate(msg):
            return []
        if msg.sender != self.primary_id(msg.view):
            self._suspect(f"PrePrepare from non-primary {msg.sender}")
            return []
        batch = msg.batch
        if (batch is None or batch.digest != msg.digest or batch.seq != msg.seq
                or batch.proposer != msg.sender or not self._batch_well_formed(batch)):
            self._suspect(f"malformed proposal from {msg.sender} at seq {msg.seq}")
            return []
        return self._accept_pre_prepare(msg)

    def _batch_well_formed(self, batch: Batch) -> bool:
        return all(tx.submitter in self.registry.members
                   and self.registry.verify(tx.submitter, tx.payload(), tx.signature)
                   for tx in batch.txs)

    def _accept_pre_prepare(self, msg: PbftMessage) -> list:
        slot = self._slot(msg.view, msg.seq)
        if slot.pre_prepare is not None:
            if slot.pre_prepare.digest != msg.digest:
                self._suspect(f"equivocation by {msg.sender} at view {msg.view} seq {msg.seq}")
            return []
        slot.pre_prepare = msg
        out: list = []
        if self.primary_id(msg.view) != self.replica_id:
            prep = self._sign(PbftMessage(Phase.PREPARE, msg.view, msg.seq, msg.digest,
                                          self.replica_id))
            slot.prepares.setdefault(msg.digest, {})[self.replica_id] = prep
            out += self._broadcast(prep)
        return out + self._advance(msg.view, msg.seq)

    def on_prepare(self, msg: PbftMessage) -> list:
        if not self._view_gate(msg):
            return []
        if msg.sender == self.primary_id(msg.view):
            return []
        slot = self._slot(msg.view, msg.seq)
        senders = slot.prepares.setdefault(msg.digest, {})
        if msg.sender in senders:
            return []
        senders[msg.sender] = msg
        return self._advance(msg.view, msg.seq)

    def on_commit(self, msg: PbftMessage) -> list:
        if not self._view_gate(msg):
            return []
        slot = self._slot(msg.view, msg.seq)
        senders = slot.commits.setdefault(msg.digest, {})
        if msg.sender in senders:
            return []
        senders[msg.sender] = msg
        return self._advance(msg.view, msg.seq)

    def prepared(self, view: int, seq: int, digest: bytes) -> bool:
        slot = self.log.get((view, seq))
        if slot is None or slot.pre_prepare is None or slot.pre_prepare.digest != digest:
            return False
        return len(slot.prepares.get(digest, {})) >= 2 * self.f

    def committed_local(self, view: int, seq: int, digest: bytes) -> bool:
        if not self.prepared(view, seq, digest):
            return False
        return len(self.log[(view, seq)].commits.get(digest, {})) >= 2 * self.f + 1

    def _advance(self, view: int, seq: int) -> list:
        slot = self.log[(view, seq)]
        if slot.pre_prepare is None:
            return []
        digest = slot.pre_prepare.digest
        out: list = []
        if not slot.commit_sent and self.prepared(view, seq, digest):
            slot.commit_sent = True
            commit = self._sign(PbftMessage(Phase.COMMIT, view, seq, digest, self.replica_id))
            slot.commits.setdefault(digest, {})[self.replica_id] = commit
            out += self._broadcast(commit)
        if self.committed_local(view, seq, digest):
            commits = tuple(sorted(slot.commits[digest].values(),
                                   key=lambda m: self.validators.index(m.sender)))
            out += self._decide(CommitProof(slot.pre_prepare.batch, commits))
        return out

    def _decide(self, proof: CommitProof) -> list:
        seq = proof.batch.seq
        if seq <= self.last_executed:
            if self.executed.get(seq) != proof.batch.digest:
                self.fault = f"conflicting decision for executed seq {seq}"
                log.error("%s: %s", self.replica_id, self.fault)
            return []
        self.decided.setdefault(seq, proof)
        return self._execute_ready()

    # -- execution

    def _execute_ready(self) -> list:
        progressed = False
        while self.fault is None and self.last_executed + 1 in self.decided:
            self.execute(self.decided.pop(self.last_executed + 1))
            progressed = True
        if not progressed:
            return []
        self.timeout = self.base_timeout
        self.fetch_tried = False
        out = self._restart_timer()
        if self.is_primary and self.changing_to is None:
            out += self.propose()
        return out

    def execute(self, proof: CommitProof) -> None:
        """Apply a decided batch as the next block; invalid transactions are filtered."""
        batch = proof.batch
        if batch.seq != self.last_executed + 1:
            raise ConsensusError(f"seq {batch.seq} executed out of order")
        rolling = self.chain.state.copy()
        valid = []
        for tx in batch.txs:
            tx_id = tx.tx_id
            if tx_id in rolling.applied:
                continue
            try:
                validate_transaction(rolling, tx, self.registry)
            except TxRejected as exc:
                if tx_id not in self.done:
                    self._reject(tx_id, exc.reason, batch.seq)
                self.pending.pop(tx_id, None)
                continue
            rolling.apply(tx)
            valid.append(tx)
        if valid:
            block = self.chain.build_block(valid, batch.proposer, batch.seq)
            try:
                self.chain.append_block(block)
            except Exception as exc:
                self.fault = f"ledger rejected block at seq {batch.seq}: {exc}"
                log.error("%s: %s", self.replica_id, self.fault)
                return
        for tx in batch.txs:
            self.done.add(tx.tx_id)
            self.pending.pop(tx.tx_id, None)
        self.executed[batch.seq] = batch.digest
        self.proofs[batch.seq] = proof
        self.last_executed = batch.seq

    # -- catch-up

    def on_fetch(self, msg: PbftMessage) -> list:
        upto = min(self.last_executed, msg.seq + FETCH_LIMIT - 1)
        proofs = tuple(self.proofs[s] for s in range(max(msg.seq, 1), upto + 1))
        if not proofs:
            return []
        reply = self._sign(PbftMessage(Phase.COMMIT_PROOF, self.view, msg.seq, b"",
                                       self.replica_id, proofs=proofs))
        return [Send(msg.sender, reply)]

    def _valid_proof(self, proof: CommitProof) -> bool:
        batch = proof.batch
        senders = set()
        view = None
        for c in proof.commits:
            if (c.phase is not Phase.COMMIT or c.seq != batch.seq or c.digest != batch.digest
                    or not self._is_validator(c.sender) or not self._verify(c)):
                return False
            if view is None:
                view = c.view
            elif c.view != view:
                return False
            senders.add(c.sender)
        return len(senders) >= 2 * self.f + 1

    def on_commit_proof(self, msg: PbftMessage) -> list:
        out: list = []
        for proof in msg.proofs:
            seq = proof.batch.seq
            if seq <= self.last_executed or seq in self.decided:
                continue
            if not self._valid_proof(proof):
                self._suspect(f"invalid commit proof from {msg.sender} for seq {seq}")
                continue
            self.decided[seq] = proof
        return out + self._execute_ready()

    # -- view change

    def prepared_certificates(self) -> tuple[PreparedCertificate, ...]:
        best: dict[int, PreparedCertificate] = {}
        for (view, seq), slot in sorted(self.log.items()):
            pp = slot.pre_prepare
            if pp is None or not self.prepared(view, seq, pp.digest):
                continue
            prepares = tuple(sorted(slot.prepares[pp.digest].values(),
                                    key=lambda m: self.validators.index(m.sender)))
            best[seq] = PreparedCertificate(pp, prepares)
        return tuple(best[s] for s in sorted(best))

    def _start_view_change(self, new_view: int) -> list:
        if new_view <= self.view or (self.changing_to is not None and new_view <= self.changing_to):
            return []
        self.changing_to = new_view
        self.timeout *= 2
        vc = self._sign(PbftMessage(Phase.VIEW_CHANGE, new_view, self.last_executed, b"",
                                    self.replica_id, certificates=self.prepared_certificates()))
        self.vc_msgs.setdefault(new_view, {})[self.replica_id] = vc
        self.timer_active = False
        self.timer_token += 1
        self.timer_active = True
        out: list = [SetTimer(self.timeout, self.timer_token)]
        out += self._broadcast(vc)
        return out + self._maybe_new_view(new_view)

    def _valid_certificate(self, cert: PreparedCertificate, before_view: int) -> bool:
        pp = cert.pre_prepare
        if (pp.phase is not Phase.PRE_PREPARE or pp.view >= before_view or pp.batch is None
                or pp.batch.digest != pp.digest or pp.batch.seq != pp.seq
                or pp.sender != self.primary_id(pp.view) or not self._verify(pp)):
            return False
        senders = set()
        for p in cert.prepares:
            if (p.phase is not Phase.PREPARE or p.view != pp.view or p.seq != pp.seq
                    or p.digest != pp.digest or p.sender == pp.sender
                    or not self._is_validator(p.sender) or not self._verify(p)):
                return False
            senders.add(p.sender)
        return len(senders) >= 2 * self.f

    def _valid_view_change(self, msg: PbftMessage) -> bool:
        return all(self._valid_certificate(c, msg.view) for c in msg.certificates)

    def on_view_change(self, msg: PbftMessage) -> list:
        if msg.view <= self.view:
            return []
        if not self._valid_view_change(msg):
            self._suspect(f"invalid ViewChange from {msg.sender}")
            return []
        self.vc_msgs.setdefault(msg.view, {})[msg.sender] = msg
        out: list = []
        current = self.changing_to if self.changing_to is not None else self.view
        ahead = {s: v for v, msgs in self.vc_msgs.items() if v > current for s in msgs}
        if len(ahead) >= self.f + 1:
            out += self._start_view_change(min(v for v in self.vc_msgs if v > current
                                               and self.vc_msgs[v]))
        return out + self._maybe_new_view(msg.view)

    def _new_view_pre_prepares(self, view: int, vcs: Sequence[PbftMessage]) -> list[Batch]:
        best: dict[int, PreparedCertificate] = {}
        for vc in vcs:
            for cert in vc.certificates:
                cur = best.get(cert.seq)
                if cur is None or cert.view > cur.view:
                    best[cert.seq] = cert
        max_s = max(best, default=0)
        primary = self.primary_id(view)
        return [best[n].pre_prepare.batch if n in best else Batch(n, primary, ())
                for n in range(1, max_s + 1)]

    def _maybe_new_view(self, view: int) -> list:
        if self.primary_id(view) != self.replica_id or self.view >= view:
            return []
        vcs = self.vc_msgs.get(view, {})
        if len(vcs) < 2 * self.f + 1:
            return []
        chosen = tuple(sorted(vcs.values(), key=lambda m: self.validators.index(m.sender)))
        pps = tuple(
            self._sign(PbftMessage(Phase.PRE_PREPARE, view, b.seq, b.digest, self.replica_id,
                                   batch=b))
            for b in self._new_view_pre_prepares(view, chosen))
        nv = self._sign(PbftMessage(Phase.NEW_VIEW, view, 0, b"", self.replica_id,
                                    view_changes=chosen, pre_prepares=pps))
        return self._broadcast(nv) + self._install_view(nv)

    def on_new_view(self, msg: PbftMessage) -> list:
        view = msg.view
        if view < self.view or (view == self.view and self.changing_to is None):
            return []
        if msg.sender != self.primary_id(view):
            return []
        senders = set()
        for vc in msg.view_changes:
            if (vc.phase is not Phase.VIEW_CHANGE or vc.view != view
                    or not self._is_validator(vc.sender) or not self._verify(vc)
                    or not self._valid_view_change(vc)):
                self._suspect(f"NewView from {msg.sender} carries an invalid ViewChange")
                return []
            senders.add(vc.sender)
        if len(senders) < 2 * self.f + 1:
            self._suspect(f"NewView from {msg.sender} lacks a quorum")
            return []
        expected = [b.digest for b in self._new_view_pre_prepares(view, msg.view_changes)]
        got = msg.pre_prepares
        if [p.digest for p in got] != expected or any(
                p.view != view or p.sender != msg.sender or p.batch is None
                or p.batch.digest != p.digest or p.seq != p.batch.seq or not self._verify(p)
                for p in got):
            self._suspect(f"NewView from {msg.sender} re-proposes the wrong batches")
            return []
        return self._install_view(msg)

    def on_view_change_quorum(self, view: int, msgs: Sequence[PbftMessage]) -> list:
        """Feed a set of ViewChange messages; raises if they cannot form a quorum."""
        senders = {m.sender for m in msgs if m.view == view}
        if len(senders) < 2 * self.f + 1:
            raise InsufficientViewChangeQuorum(f"{len(senders)} < {2 * self.f + 1}")
        out: list = []
        for m in msgs:
            out += self.on_message(m)
        return out

    def _install_view(self, nv: PbftMessage) -> list:
        view = nv.view
        self.view = view
        self.changing_to = None
        self.views_installed += 1
        for v in [v for v in self.vc_msgs if v <= view]:
            del self.vc_msgs[v]
        out: list = []
        self.assigned_upto = max((p.seq for p in nv.pre_prepares), default=0)
        for pp in nv.pre_prepares:
            out += self._accept_pre_prepare(pp)
        buffered = [m for m in self.buffer if m.view >= view]
        self.buffer.clear()
        for m in buffered:
            if m.view == view:
                out += self.on_message(m)
            else:
                self.buffer.append(m)
        out += self._restart_timer()
        if self.is_primary:
            out += self.propose()
        return out

    # -- introspection

    @property
    def executed_digests(self) -> list[bytes]:
        return [self.executed[s] for s in sorted(self.executed)]
