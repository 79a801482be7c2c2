import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaossim.kernel import Simulator
from chaossim.network import DROPPED, REFERENCE, SUPPRESSED, Network, Perturbation, sentinel_id
from chaossim.protocols import Proposal


def make_net(nodes=("leader", 0, 1, 2, 3), seed=0):
    sim = Simulator(seed)
    net = Network(sim, 2.0)
    inbox = {n: [] for n in nodes}
    for n in nodes:
        net.register(n, inbox[n].append)
    return sim, net, inbox


def test_channels_are_directed_and_idempotent():
    _, net, _ = make_net()
    a = net.open_channel("leader", 3)
    b = net.open_channel(3, "leader")
    assert a != b
    assert net.open_channel("leader", 3) == a


def test_open_channel_unknown_node():
    _, net, _ = make_net()
    with pytest.raises(KeyError):
        net.open_channel("leader", "ghost")


def test_base_delivery_is_exponential_draw():
    sim, net, inbox = make_net()
    cid = net.open_channel(0, 1)
    at = net.send(cid, "hello")
    assert at > 0
    sim.run_until(at + 1)
    [env] = inbox[1]
    assert env.payload == "hello" and env.sent_at == 0.0 and not env.corrupted


def test_reference_channel_is_immediate():
    sim, net, inbox = make_net()
    cid = net.open_channel("leader", 0, REFERENCE)
    assert net.send(cid, "x") == 0.0


def test_certain_loss_drops():
    sim, net, inbox = make_net()
    cid = net.open_channel(0, 1)
    net.apply_perturbation(Perturbation.loss(1.0))
    assert net.send(cid, "x") == DROPPED
    sim.run_until(100)
    assert inbox[1] == []


def test_loss_rate_converges():
    sim, net, _ = make_net()
    cid = net.open_channel(0, 1)
    net.apply_perturbation(Perturbation.loss(0.15))
    n = 100_000
    dropped = sum(net.send(cid, None) == DROPPED for _ in range(n))
    assert 0.145 <= dropped / n <= 0.155


def test_delay_apply_and_clear():
    sim, net, _ = make_net()
    cid = net.open_channel(0, 1, REFERENCE)
    h = net.apply_perturbation(Perturbation.delay(1.0))
    assert net.send(cid, "x") == 1.0
    net.clear_perturbation(h)
    assert net.send(cid, "x") == 0.0


def test_delays_stack():
    _, net, _ = make_net()
    cid = net.open_channel(0, 1, REFERENCE)
    net.apply_perturbation(Perturbation.delay(1.0))
    net.apply_perturbation(Perturbation.delay(0.5))
    assert net.added_delay(0) == 1.5
    assert net.send(cid, "x") == 1.5


def test_delay_and_loss_together():
    sim, net, _ = make_net()
    cid = net.open_channel(0, 1, REFERENCE)
    net.apply_perturbation(Perturbation.delay(1.0))
    net.apply_perturbation(Perturbation.loss(0.15))
    outcomes = [net.send(cid, None) for _ in range(2000)]
    assert DROPPED in outcomes
    assert {o for o in outcomes if o != DROPPED} == {1.0}


def test_clear_unknown_handle():
    _, net, _ = make_net()
    with pytest.raises(KeyError):
        net.clear_perturbation(99)


def test_perturbation_validation():
    with pytest.raises(ValueError):
        Perturbation.loss(1.5)
    with pytest.raises(ValueError):
        Perturbation.pause([])
    with pytest.raises(ValueError):
        Perturbation("flood")


def test_corruption_is_scoped_to_sender_and_uses_sentinel():
    sim, net, inbox = make_net()
    a = net.open_channel(0, 2, REFERENCE)
    b = net.open_channel(1, 2, REFERENCE)
    net.apply_perturbation(Perturbation.corruption([0]))
    p = Proposal(1, 1, 42, 0, 0.0, 70)
    net.send(a, p)
    net.send(b, p)
    sim.run_until(1)
    bad, good = inbox[2]
    assert bad.corrupted and bad.payload.block_id == sentinel_id(42) != 42
    assert not good.corrupted and good.payload.block_id == 42


def test_paused_node_emits_nothing_and_receives_later():
    sim, net, inbox = make_net()
    out = net.open_channel(1, 2, REFERENCE)
    into = net.open_channel(0, 1, REFERENCE)
    net.pause_node(1)
    assert net.send(out, "x") == SUPPRESSED
    net.send(into, "queued")
    sim.run_until(5)
    assert inbox[1] == [] and inbox[2] == []
    sim.schedule(6, net.resume_node, 1)
    sim.run_until(7)
    assert [e.payload for e in inbox[1]] == ["queued"]
    net.resume_node(1)  # no-op


def test_timers_wait_for_resume():
    sim, net, _ = make_net()
    fired = []
    net.pause_node(0)
    net.set_timer(0, 1.0, lambda: fired.append(sim.now))
    sim.schedule(3.0, net.resume_node, 0)
    sim.run_until(2.9)
    assert fired == []
    sim.run_until(4)
    assert fired == [3.0]


def test_overlapping_pauses_resume_only_when_all_cleared():
    _, net, _ = make_net()
    h1 = net.apply_perturbation(Perturbation.pause([0, 1]))
    h2 = net.apply_perturbation(Perturbation.pause([1]))
    net.clear_perturbation(h1)
    assert not net.is_paused(0) and net.is_paused(1)
    net.clear_perturbation(h2)
    assert not net.is_paused(1)


def test_broadcast_matches_individual_sends():
    def run(batched):
        sim, net, inbox = make_net(seed=5)
        cids = [net.open_channel("leader", n, REFERENCE) for n in (0, 1, 2, 3)]
        cids += [net.open_channel(0, n) for n in (1, 2, 3)]
        if batched:
            net.broadcast(cids, "m")
        else:
            for c in cids:
                net.send(c, "m")
        sim.run_until(100)
        return {n: [(e.source, e.sent_at) for e in box] for n, box in inbox.items()}

    assert run(True) == run(False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.floats(0, 50)), min_size=1, max_size=40),
       st.floats(0, 0.5), st.floats(0, 3))
def test_no_delivery_before_send_and_fault_free_delivery(sends, loss, delay):
    sim = Simulator(1)
    net = Network(sim, 2.0)
    got = []
    for n in range(4):
        net.register(n, lambda env: got.append((sim.now, env)))
    if loss:
        net.apply_perturbation(Perturbation.loss(loss))
    if delay:
        net.apply_perturbation(Perturbation.delay(delay))
    expected = 0
    for src, dst, t in sorted(sends, key=lambda s: s[2]):
        cid = net.open_channel(src, dst)

        def go(cid=cid):
            nonlocal expected
            if net.send(cid, "m") != DROPPED:
                expected += 1
        sim.schedule(t, go)
    sim.run_until(1000)
    assert len(got) == expected
    assert all(now >= env.sent_at + delay for now, env in got)
    if not loss:
        assert expected == len(sends)
    assert not any(env.corrupted for _, env in got)
