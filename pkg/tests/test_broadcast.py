import itertools
import random

import pytest

from conftest import Scripted
from mvba.adversary import Honest
from mvba.broadcast import (
    BroadcastInstance,
    ideal_broadcast_cost,
    majority,
    om_broadcast,
    om_broadcast_many,
    om_message_count,
)
from mvba.errors import PreconditionError
from mvba.simnet import Network, Tag


def run(n, t, value, width=1, adversary=None, source=0):
    net = Network(n, adversary)
    inst = BroadcastInstance("x", source, value, width, Tag.NOTIFY)
    return om_broadcast(inst, range(n), t, net), net


def fault_free_outputs(out, faulty):
    return {v for node, v in out.items() if node not in faulty}


def test_fault_free_source_validity():
    for n in range(4, 8):
        t = (n - 1) // 3
        for value in (0, 1):
            out, _ = run(n, t, value)
            assert set(out.values()) == {value}


def test_majority_tie_resolves_to_default():
    assert majority([1, 1, 0]) == 1
    assert majority([1, 0]) == 0
    assert majority([5, 5, 7, 7]) == 0
    assert majority([7, 7, 7, 5]) == 7


def test_faulty_source_pattern_001_resolves_to_zero():
    pattern = {1: 0, 2: 0, 3: 1}

    def fn(msg, ctx):
        return pattern[msg.recipient] if msg.path == (0,) else msg.content

    out, _ = run(4, 1, 1, adversary=Scripted(4, 1, {0}, fn))
    assert fault_free_outputs(out, {0}) == {0}


@pytest.mark.parametrize("pattern", list(itertools.product((0, 1), repeat=3)))
def test_faulty_source_all_send_patterns_agree(pattern):
    sends = dict(zip((1, 2, 3), pattern))

    def fn(msg, ctx):
        return sends[msg.recipient]

    out, _ = run(4, 1, 0, adversary=Scripted(4, 1, {0}, fn))
    outs = fault_free_outputs(out, {0})
    assert len(outs) == 1
    # with honest relays every peer sees the same three values
    assert outs == {majority(list(pattern))}


@pytest.mark.parametrize("relay", [1, 2, 3])
@pytest.mark.parametrize("value", [0, 1])
def test_single_lying_relay_exhaustive(relay, value):
    others = [v for v in (1, 2, 3) if v != relay]
    for lies in itertools.product((0, 1), repeat=2):
        told = dict(zip(others, lies))

        def fn(msg, ctx):
            return told[msg.recipient]

        out, _ = run(4, 1, value, adversary=Scripted(4, 1, {relay}, fn))
        assert fault_free_outputs(out, {relay}) == {value}


class RandomLiar(Honest):
    name = "random_liar"

    def tamper(self, msg, ctx):
        r = self.rng.random()
        if r < 0.15:
            return None
        if r < 0.7:
            return self.rng.getrandbits(msg.nbits)
        return msg.content


@pytest.mark.parametrize("n", [4, 5, 6, 7])
def test_agreement_and_validity_randomized(n):
    t = (n - 1) // 3
    rng = random.Random(n)
    trials = 1000 if n < 7 else 300
    for trial in range(trials):
        faulty = set(rng.sample(range(n), t))
        source = rng.randrange(n)
        width = rng.randint(1, 6)
        value = rng.getrandbits(width)
        adv = RandomLiar(n, t, faulty)
        adv.rng = random.Random(trial)
        out, _ = run(n, t, value, width, adv, source)
        outs = fault_free_outputs(out, faulty)
        assert len(outs) == 1
        if source not in faulty:
            assert outs == {value}


def test_lockstep_instances_are_independent():
    net = Network(5)
    insts = [BroadcastInstance(i, i, i % 2, 1) for i in range(5)]
    out = om_broadcast_many(insts, range(5), 1, net)
    for i in range(5):
        assert set(out[i].values()) == {i % 2}


def test_measured_cost_matches_message_count_and_is_deterministic():
    costs = set()
    for _ in range(3):
        _, net = run(7, 2, 0b1011, width=4)
        costs.add(net.metrics.bits_notification_measured)
    assert costs == {om_message_count(7, 2) * 4}
    assert om_message_count(4, 1) == 3 + 6
    assert om_message_count(7, 2) == 6 + 30 + 120


def test_too_few_participants_rejected():
    with pytest.raises(PreconditionError):
        run(3, 1, 0)
    net = Network(6)
    with pytest.raises(PreconditionError):
        om_broadcast(BroadcastInstance("x", 0, 1, 1), [0, 1, 2, 3, 4, 5], 2, net)


def test_om0_is_a_direct_send():
    out, net = run(4, 0, 1)
    assert set(out.values()) == {1}
    assert net.metrics.bits_notification_measured == 3


def test_ideal_broadcast_cost():
    assert ideal_broadcast_cost(4, 1, 1) == 16
    assert ideal_broadcast_cost(4, 16, 1) == 256
    assert ideal_broadcast_cost(7, 1, 1) == 49
    with pytest.raises(PreconditionError):
        ideal_broadcast_cost(3, 1, 1)
    with pytest.raises(PreconditionError):
        ideal_broadcast_cost(4, 1, 0)
