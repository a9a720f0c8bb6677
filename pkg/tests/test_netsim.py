import pytest

from securiot.consensus import Batch, PbftMessage, Phase, Send, SetTimer
from securiot.netsim import (Behavior, EmptyQueue, EventKind, FaultProfile, SimError, SimEvent,
                             Simulator, apply_fault)

from conftest import simulate_cluster


class Recorder:
    def __init__(self, log, name, reply_to=None):
        self.log, self.name, self.reply_to = log, name, reply_to

    def on_message(self, msg, now):
        self.log.append((now, self.name, msg))
        return [Send(self.reply_to, msg + "!")] if self.reply_to and len(msg) < 3 else []

    def on_timer(self, token, now):
        self.log.append((now, self.name, f"timer{token}"))
        return []

    def on_input(self, payload, now):
        return [SetTimer(5, 1)]


def test_events_pop_in_time_then_insertion_order():
    log = []
    sim = Simulator(0)
    sim.add_node("a", Recorder(log, "a"))
    for at, text in [(5, "late"), (1, "x"), (1, "y"), (3, "mid")]:
        sim.schedule(SimEvent(at, "a", EventKind.MESSAGE, text))
    sim.run()
    assert [(t, m) for t, _, m in log] == [(1, "x"), (1, "y"), (3, "mid"), (5, "late")]


def test_scheduling_in_the_past_fails():
    sim = Simulator(0)
    sim.add_node("a", Recorder([], "a"))
    sim.schedule(SimEvent(4, "a", EventKind.MESSAGE, "m"))
    sim.step()
    with pytest.raises(SimError):
        sim.schedule(SimEvent(3, "a", EventKind.MESSAGE, "m"))


def test_empty_queue():
    with pytest.raises(EmptyQueue):
        Simulator(0).step()


def test_timers_and_inputs():
    log = []
    sim = Simulator(0)
    sim.add_node("a", Recorder(log, "a"))
    sim.inject(2, "a", "go")
    sim.run()
    assert log == [(7, "a", "timer1")]


def test_delay_bounds_and_determinism():
    def trace(seed):
        log = []
        sim = Simulator(seed, delay=(2, 9))
        sim.add_node("a", Recorder(log, "a", reply_to="b"))
        sim.add_node("b", Recorder(log, "b", reply_to="a"))
        for i in range(20):
            sim.schedule(SimEvent(i, "a", EventKind.MESSAGE, "m"))
        sim.run()
        return log

    t1, t2 = trace(7), trace(7)
    assert t1 == t2
    assert trace(8) != t1
    # every reply lands 2..9 ticks after its trigger
    replies = [t for t, n, m in t1 if m == "m!"]
    assert len(replies) == 20 and all(2 <= t <= 19 + 9 for t in replies)


def test_loss_drops_messages():
    log = []
    sim = Simulator(3, delay=(1, 1), loss=0.5)
    sim.add_node("a", Recorder(log, "a", reply_to="b"))
    sim.add_node("b", Recorder(log, "b"))
    for i in range(200):
        sim.schedule(SimEvent(i, "a", EventKind.MESSAGE, "m"))
    sim.run()
    assert sim.dropped + sum(1 for _, n, _ in log if n == "b") == 200
    assert 60 < sim.dropped < 140


@pytest.mark.parametrize("delay,loss", [((3, 1), 0.0), ((-1, 2), 0.0), ((1, 2), 1.0)])
def test_bad_network_parameters(delay, loss):
    with pytest.raises(ValueError):
        Simulator(0, delay, loss)


def _broadcast(phase=Phase.PREPARE):
    b = Batch(1, "val-0", ())
    msg = PbftMessage(phase, 0, 1, b.digest, "val-0", batch=b if phase is Phase.PRE_PREPARE else None)
    return msg, [Send(d, msg) for d in ("val-3", "val-1", "val-2")]


def test_silent_drops_everything():
    _, sends = _broadcast()
    assert apply_fault(FaultProfile("val-0", "silent"), sends) == []


def test_equivocation_splits_sorted_receivers():
    msg, sends = _broadcast(Phase.PRE_PREPARE)
    out = apply_fault(FaultProfile("val-0", Behavior.EQUIVOCATE), sends)
    by_dest = {s.dest: s.msg for s, _ in out}
    assert by_dest["val-1"] is msg and by_dest["val-2"] is msg
    assert by_dest["val-3"].digest != msg.digest
    assert by_dest["val-3"].batch.digest == by_dest["val-3"].digest


def test_equivocation_leaves_unicasts_alone():
    msg, sends = _broadcast()
    out = apply_fault(FaultProfile("val-0", "equivocate"), sends[:1])
    assert out == [(sends[0], 0)]


def test_delay_injector_adds_latency():
    _, sends = _broadcast()
    out = apply_fault(FaultProfile("val-0", "delay_injector", {"delay": 40}), sends)
    assert [d for _, d in out] == [40, 40, 40]


def test_trace_is_reproducible_for_a_pbft_run():
    sim1, reps1 = simulate_cluster(11, n_tx=2)
    sim2, reps2 = simulate_cluster(11, n_tx=2)
    assert sim1.trace_lines() == sim2.trace_lines()
    assert sim1.trace_lines().split("\n")[0].split("\t")[3] in {p.value for p in Phase}
    assert all(r.chain.height == reps1[0].chain.height for r in reps1 + reps2)


def test_unknown_fault_node():
    with pytest.raises(SimError):
        Simulator(0).set_fault(FaultProfile("nobody", "silent"))


def test_silent_node_timers_never_fire():
    class Ticker:
        fired = 0

        def on_input(self, payload, now):
            return [SetTimer(5, 1)]

        def on_timer(self, token, now):
            self.fired += 1
            return [SetTimer(5, 1)]

        def on_message(self, msg, now):
            return []

    loud, quiet = Ticker(), Ticker()
    sim = Simulator(0)
    sim.add_node("a", loud)
    sim.add_node("b", quiet)
    sim.set_fault(FaultProfile("b", "silent"))
    sim.inject(0, "a", None)
    sim.inject(0, "b", None)
    sim.run(max_steps=10)
    assert loud.fired > 0 and quiet.fired == 0
