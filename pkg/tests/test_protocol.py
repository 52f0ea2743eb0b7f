import math
import random
from fractions import Fraction

import pytest

from mvba.adversary import Colluders, EquivocatingSource, TreeCorruptor, make_adversary
from mvba.diagnosis import SOURCE, DiagnosisGraph, build_spanning_tree
from mvba.errors import ConfigError
from mvba.field_hash import Payload, collision_bound
from mvba.harness import binomial_sigma
from mvba.protocol import (
    Decided,
    DisputeEscalated,
    GenerationState,
    ProtocolConfig,
    parameter_schedule,
    run_generation,
    run_session,
)
from mvba.simnet import Network, Tag, derive_rng


@pytest.mark.parametrize("kwargs", [
    dict(n=3, t=1, l=16, D=8, k=4),
    dict(n=6, t=2, l=16, D=8, k=4),
    dict(n=4, t=0, l=16, D=8, k=4),
    dict(n=4, t=1, l=16, D=8, k=33),
    dict(n=4, t=1, l=16, D=10, k=4),
    dict(n=4, t=1, l=-1, D=8, k=4),
    dict(n=4, t=1, l=16, D=8, k=4, c=0),
    dict(n=4, t=1, l=16, D=8, k=4, default_value=Payload(0, 4)),
])
def test_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        ProtocolConfig(**kwargs)


def test_honest_session():
    cfg = ProtocolConfig(n=4, t=1, l=64, D=16, k=8, seed=1)
    res = run_session(cfg)
    assert res.metrics.generations_run == 4
    assert res.metrics.extended_steps == 0
    assert res.graph.f_edges == set()
    assert set(res.decisions) == {1, 2, 3}
    assert all(v == res.message for v in res.decisions.values())
    assert res.correct


def test_explicit_message_and_padding():
    cfg = ProtocolConfig(n=4, t=1, l=50, D=16, k=4)
    assert cfg.generations == 4 and cfg.padded_bits == 14
    msg = (1 << 49) | 12345
    res = run_session(cfg, message=msg)
    assert res.metrics.padded_bits == 14
    assert res.metrics.bits_data == 3 * 64
    assert set(res.decisions.values()) == {msg}
    with pytest.raises(ConfigError):
        run_session(cfg, message=1 << 50)


def _one_generation(cfg, adversary, graph=None):
    graph = graph or DiagnosisGraph(cfg.n, cfg.t)
    adversary.bind(cfg)
    net = Network(cfg.n, adversary, isolated=graph.isolated)
    keys = {i: derive_rng(cfg.seed, "keys", i) for i in range(cfg.n)}
    state = GenerationState(0, 0, Payload(derive_rng(cfg.seed, "p").getrandbits(cfg.D), cfg.D))
    return run_generation(state, graph, net, cfg, keys), graph, net, state


def test_equivocating_source_escalates_on_source_edge():
    cfg = ProtocolConfig(n=4, t=1, l=16, D=16, k=8, seed=4)
    out, graph, _, state = _one_generation(cfg, EquivocatingSource(4, 1))
    assert isinstance(out, DisputeEscalated)
    assert state.outcome == "DisputeEscalated"
    assert any(SOURCE in e for e in out.verdict.new_f_edges)
    assert graph.f_edges <= {(0, 1), (0, 2), (0, 3)}


def test_equivocation_deception_rate_monte_carlo():
    # per misbehaving generation, a Decided outcome with split honest payloads
    cfg = ProtocolConfig(n=4, t=1, l=16, D=16, k=8)
    deceptions = misbehaving = 0
    for seed in range(10_000):
        res = run_session(cfg.replace(seed=seed), EquivocatingSource(4, 1))
        deceptions += res.metrics.deception_events
        misbehaving += res.metrics.misbehaving_generations
    eps = float(collision_bound(16, 8))
    assert misbehaving >= 10_000
    rate = deceptions / misbehaving
    assert rate <= eps + 2.576 * binomial_sigma(eps, misbehaving)


def test_false_flagger_isolated_by_self_contradiction():
    cfg = ProtocolConfig(n=4, t=1, l=16, D=16, k=8, seed=2)
    out, graph, _, _ = _one_generation(cfg, make_adversary("false_flagger", 4, 1))
    assert isinstance(out, DisputeEscalated)
    assert out.verdict.self_contradictory_nodes == {3}
    assert graph.isolated == {3}
    res = run_session(cfg.replace(l=64), make_adversary("false_flagger", 4, 1))
    assert res.metrics.extended_steps == 1
    assert res.correct and not res.default_terminated


def test_equivocating_every_generation_ends_in_default():
    default = Payload(0xBEEF, 16)
    cfg = ProtocolConfig(n=4, t=1, l=64, D=16, k=8, seed=9, default_value=default)
    res = run_session(cfg, EquivocatingSource(4, 1))
    assert res.metrics.extended_steps <= 2
    assert res.default_terminated
    assert SOURCE in res.graph.isolated
    expected = int("BEEF" * 4, 16)
    assert set(res.decisions.values()) == {expected}
    assert res.correct


class OneShotSource(EquivocatingSource):
    """Equivocates in the first attempt of the first generation only."""

    def tamper(self, msg, ctx):
        if (ctx.generation, ctx.attempt) == (0, 0):
            return super().tamper(msg, ctx)
        return msg.content


@pytest.mark.parametrize("seed", range(5))
def test_tree_corruptor_is_routed_around(seed):
    cfg = ProtocolConfig(n=7, t=2, l=64, D=16, k=8, seed=seed)
    adv = Colluders(7, 2, [OneShotSource(7, 2, (0,)), TreeCorruptor(7, 2, (1,))])
    res = run_session(cfg, adv)
    g = res.graph
    assert not res.default_terminated
    assert res.correct and set(res.decisions.values()) == {res.message}
    assert any(1 in e and not ({0, 1} >= set(e)) for e in g.f_edges)
    assert all(i in res.faulty or j in res.faulty for i, j in g.f_edges)
    tree = build_spanning_tree(g)
    assert tree.children(1) == []
    assert res.metrics.extended_steps <= 6


def test_keys_are_drawn_after_every_payload_is_fixed():
    cfg = ProtocolConfig(n=7, t=2, l=16, D=16, k=8)
    graph = DiagnosisGraph(7, 2, {(0, 1), (0, 2)})  # forces a two-level tree
    net = Network(7, isolated=graph.isolated)
    events = []
    orig = net.step

    def step(outbox):
        if outbox:
            events.append(outbox[0].tag)
        return orig(outbox)

    net.step = step

    class SpyRng(random.Random):
        def getrandbits(self, k):
            events.append("key")
            return super().getrandbits(k)

    keys = {i: SpyRng(i) for i in range(7)}
    out = run_generation(GenerationState(0, 0, Payload(7, 16)), graph, net, cfg, keys)
    assert isinstance(out, Decided)
    first_key = events.index("key")
    assert events[:first_key] == [Tag.DATA, Tag.DATA]
    assert Tag.DATA not in events[first_key:]
    assert events.count("key") == 7 * 6


@pytest.mark.parametrize("l,beta,k,D", [(2 ** 16, Fraction(1, 2), 16, 256),
                                        (2 ** 10, Fraction(1, 2), 10, 40)])
def test_parameter_schedule_examples(l, beta, k, D):
    assert parameter_schedule(l, beta) == (k, D)


def test_parameter_schedule_contract():
    rng = random.Random(0)
    for _ in range(500):
        l = rng.randint(16, 2 ** 32)
        beta = Fraction(rng.randint(1, 99), 100)
        try:
            k, D = parameter_schedule(l, beta)
        except ConfigError:
            continue
        assert D % k == 0 and D <= l
        assert D >= l ** float(1 - beta) * (1 - 1e-9)
        assert D - k < l ** float(1 - beta)
        assert k == round(math.log2(l))
    with pytest.raises(ConfigError):
        parameter_schedule(8, Fraction(1, 2))
    with pytest.raises(ConfigError):
        parameter_schedule(1024, 1)


def test_sessions_are_deterministic():
    cfg = ProtocolConfig(n=7, t=2, l=96, D=16, k=8, seed=33)
    a = run_session(cfg, make_adversary("fuzz", 7, 2, (5, 6))).as_dict()
    b = run_session(cfg, make_adversary("fuzz", 7, 2, (5, 6))).as_dict()
    assert a == b
