"""Deterministic discrete-event network simulator.

Events are ordered by ``(deliver_at, insertion index)``. Message delays are
sampled from :class:`random.Random` (Mersenne Twister) seeded per run:
first a loss draw ``random() < loss`` when ``loss > 0``, then
``randint(lo, hi)`` for the delay. The full trace is therefore a pure function
of the topology, the fault profiles and the seed.

A ``silent`` node behaves as crashed: its sends are dropped and its timers
never fire. Nodes expose ``on_message(msg, now)``, ``on_timer(token, now)`` and optionally
``on_input(payload, now)``; each returns outputs (``Send`` / ``SetTimer``).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Protocol

from ._codec import sha256
from .consensus import Batch, PbftMessage, Phase, Send, SetTimer
from .membership import MembershipRegistry


class SimError(Exception):
    pass


class EmptyQueue(SimError):
    pass


class Behavior(str, Enum):
    HONEST = "honest"
    SILENT = "silent"
    EQUIVOCATE = "equivocate"
    DELAY_INJECTOR = "delay_injector"


@dataclass(frozen=True)
class FaultProfile:
    node: str
    behavior: Behavior = Behavior.HONEST
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "behavior", Behavior(self.behavior))


class EventKind(str, Enum):
    MESSAGE = "message"
    TIMER = "timer"
    INPUT = "input"


@dataclass(frozen=True)
class SimEvent:
    deliver_at: int
    target: str
    kind: EventKind
    payload: Any
    sender: str = ""


@dataclass(frozen=True)
class TraceRecord:
    time: int
    sender: str
    receiver: str
    phase: str
    view: int
    seq: int
    digest: str

    def line(self) -> str:
        return (f"{self.time}\t{self.sender}\t{self.receiver}\t{self.phase}\t"
                f"{self.view}\t{self.seq}\t{self.digest}")


class Node(Protocol):
    def on_message(self, msg: Any, now: int) -> list: ...

    def on_timer(self, token: int, now: int) -> list: ...


def _conflicting(msg: PbftMessage) -> PbftMessage:
    """A same-slot message proposing a different digest."""
    if msg.phase is Phase.PRE_PREPARE and msg.batch is not None:
        alt = Batch(msg.batch.seq, msg.batch.proposer, msg.batch.txs[:-1])
        if not msg.batch.txs:
            alt = Batch(msg.batch.seq, msg.batch.proposer + "~", ())
        return replace(msg, digest=alt.digest, batch=alt, signature=b"")
    return replace(msg, digest=sha256(b"equivocate" + msg.digest), signature=b"")


_EQUIVOCABLE = (Phase.PRE_PREPARE, Phase.PREPARE, Phase.COMMIT)


def apply_fault(profile: FaultProfile, outbound: list,
                sign: Callable[[PbftMessage], PbftMessage] | None = None) -> list[tuple[Any, int]]:
    """Transform a node's outbound sends according to its behavior.

    Returns ``(send, extra_delay)`` pairs. An equivocating node splits the
    sorted receivers of each broadcast message into halves; the first
    ``ceil(k/2)`` receive the original, the rest a conflicting digest.
    """
    behavior = profile.behavior
    if behavior is Behavior.SILENT:
        return []
    if behavior is Behavior.DELAY_INJECTOR:
        extra = int(profile.params.get("delay", 0))
        return [(s, extra) for s in outbound]
    if behavior is Behavior.HONEST:
        return [(s, 0) for s in outbound]

    groups: dict[int, list[Send]] = {}
    order: list[int] = []
    for s in outbound:
        key = id(s.msg)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(s)
    out: list[tuple[Any, int]] = []
    for key in order:
        sends = sorted(groups[key], key=lambda s: s.dest)
        msg = sends[0].msg
        if not isinstance(msg, PbftMessage) or msg.phase not in _EQUIVOCABLE or len(sends) < 2:
            out.extend((s, 0) for s in sends)
            continue
        alt = _conflicting(msg)
        if sign is not None:
            alt = sign(alt)
        half = (len(sends) + 1) // 2
        out.extend((s, 0) for s in sends[:half])
        out.extend((Send(s.dest, alt), 0) for s in sends[half:])
    return out


class Simulator:
    def __init__(self, seed: int = 0, delay: tuple[int, int] = (1, 10), loss: float = 0.0,
                 registry: MembershipRegistry | None = None) -> None:
        lo, hi = delay
        if not 0 <= lo <= hi:
            raise ValueError("delay bounds must satisfy 0 <= lo <= hi")
        if not 0.0 <= loss < 1.0:
            raise ValueError("loss must be in [0, 1)")
        self.seed = seed
        self.delay = (lo, hi)
        self.loss = loss
        self.rng = random.Random(seed)
        self.registry = registry
        self.now = 0
        self.nodes: dict[str, Any] = {}
        self.faults: dict[str, FaultProfile] = {}
        self.queue: list[tuple[int, int, SimEvent]] = []
        self._counter = 0
        self.trace: list[TraceRecord] = []
        self.delivered = 0
        self.dropped = 0

    def add_node(self, node_id: str, node: Any) -> None:
        if node_id in self.nodes:
            raise SimError(f"duplicate node {node_id}")
        self.nodes[node_id] = node

    def set_fault(self, profile: FaultProfile) -> None:
        if profile.node not in self.nodes:
            raise SimError(f"unknown node {profile.node}")
        self.faults[profile.node] = profile

    def schedule(self, event: SimEvent) -> None:
        if event.deliver_at < self.now:
            raise SimError(f"cannot schedule at {event.deliver_at} before now={self.now}")
        heapq.heappush(self.queue, (event.deliver_at, self._counter, event))
        self._counter += 1

    def inject(self, at: int, target: str, payload: Any) -> None:
        self.schedule(SimEvent(at, target, EventKind.INPUT, payload))

    def _sample_delay(self) -> int | None:
        if self.loss > 0 and self.rng.random() < self.loss:
            return None
        lo, hi = self.delay
        return self.rng.randint(lo, hi)

    def _dispatch(self, source: str, outputs: list) -> None:
        sends = [o for o in outputs if isinstance(o, Send)]
        profile = self.faults.get(source)
        crashed = profile is not None and profile.behavior is Behavior.SILENT
        for o in outputs:
            if isinstance(o, SetTimer) and not crashed:
                self.schedule(SimEvent(self.now + o.delay, source, EventKind.TIMER, o.token))
        if profile is not None and sends:
            sign = None
            if self.registry is not None and source in self.registry.members:
                registry = self.registry
                sign = lambda m: m.signed(registry)  # noqa: E731
            pairs = apply_fault(profile, sends, sign)
        else:
            pairs = [(s, 0) for s in sends]
        for send, extra in pairs:
            d = self._sample_delay()
            if d is None:
                self.dropped += 1
                continue
            self.schedule(SimEvent(self.now + d + extra, send.dest, EventKind.MESSAGE,
                                   send.msg, source))

    def step(self) -> SimEvent:
        if not self.queue:
            raise EmptyQueue("no events scheduled")
        _, _, event = heapq.heappop(self.queue)
        self.now = event.deliver_at
        node = self.nodes.get(event.target)
        if node is None:
            return event
        if event.kind is EventKind.MESSAGE:
            self.delivered += 1
            msg = event.payload
            if isinstance(msg, PbftMessage):
                self.trace.append(TraceRecord(self.now, event.sender, event.target,
                                              msg.phase.value, msg.view, msg.seq,
                                              msg.digest.hex()[:8]))
            outputs = node.on_message(msg, self.now)
        elif event.kind is EventKind.TIMER:
            outputs = node.on_timer(event.payload, self.now)
        else:
            outputs = node.on_input(event.payload, self.now)
        self._dispatch(event.target, outputs or [])
        return event

    def run(self, max_steps: int | None = None, until: int | None = None) -> int:
        """Step until quiescence, ``max_steps`` events, or simulated time ``until``."""
        steps = 0
        while self.queue:
            if max_steps is not None and steps >= max_steps:
                break
            if until is not None and self.queue[0][0] > until:
                break
            self.step()
            steps += 1
        return steps

    @property
    def quiescent(self) -> bool:
        return not self.queue

    def trace_lines(self) -> str:
        return "".join(r.line() + "\n" for r in self.trace)
