"""Generation-by-generation agreement on an l-bit message from source node 0.

Each generation agrees on D bits:

A. dissemination: the source's D bits travel down the g-edge spanning tree
   (a star while nothing has been detected);
B. hash exchange: every active node i sends (K_ij, H(m_i, K_ij)) to every
   other active node j, with a fresh key;
C. notification: each node checks the digests from trusted peers against
   its own m_i and the n flag bits are agreed by OM broadcast.

All flags clear: every peer decides its m_i.  Otherwise every active node
broadcasts its transcript, the diagnosis graph is updated, and the same
D bits are attempted again under the new graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .broadcast import BroadcastInstance, om_broadcast_many
from .diagnosis import (
    SOURCE,
    DiagnosisGraph,
    DisputeVerdict,
    SpanningTree,
    Transcript,
    TranscriptLayout,
    analyze_dispute,
    apply_verdict,
    build_spanning_tree,
    local_flag,
)
from .errors import ConfigError, InvariantViolation, SourceFaulty
from .field_hash import MAX_K, KeyedDigest, Payload, modulus
from .simnet import Network, RoundMessage, RunMetrics, Tag, broadcast_model_cost, derive_rng


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    t: int
    l: int
    D: int
    k: int
    c: Fraction = Fraction(1)
    seed: int = 0
    default_value: Payload | None = None

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError(f"n={self.n}: need at least 4 nodes")
        if self.t < 1 or self.n <= 3 * self.t:
            raise ConfigError(f"need 1 <= t < n/3, got n={self.n}, t={self.t}")
        modulus(self.k)
        if self.D <= 0 or self.D % self.k:
            raise ConfigError(f"D={self.D} must be a positive multiple of k={self.k}")
        if self.l <= 0:
            raise ConfigError("l must be positive")
        if Fraction(self.c) <= 0:
            raise ConfigError("broadcast cost constant c must be positive")
        object.__setattr__(self, "c", Fraction(self.c))
        if self.default_value is None:
            object.__setattr__(self, "default_value", Payload.zeros(self.D))
        elif self.default_value.nbits != self.D:
            raise ConfigError("default value must be D bits long")

    @property
    def generations(self) -> int:
        return math.ceil(self.l / self.D)

    @property
    def padded_bits(self) -> int:
        return self.generations * self.D - self.l

    def replace(self, **changes) -> ProtocolConfig:
        fields = dict(n=self.n, t=self.t, l=self.l, D=self.D, k=self.k, c=self.c,
                      seed=self.seed, default_value=self.default_value)
        if "D" in changes and "default_value" not in changes:
            fields["default_value"] = None
        fields.update(changes)
        return ProtocolConfig(**fields)


@dataclass
class GenerationState:
    generation_index: int
    attempt: int
    payload_truth: Payload
    per_node_payload: dict = field(default_factory=dict)
    per_pair_digests: dict = field(default_factory=dict)  # (sender, recipient) -> KeyedDigest
    flags: dict = field(default_factory=dict)  # agreed notification bits
    outcome: str | None = None  # "Decided" | "DisputeEscalated"


@dataclass
class Decided:
    decisions: dict  # active peer -> Payload


@dataclass
class DisputeEscalated:
    verdict: DisputeVerdict
    newly_isolated: set


def _fault_free_view(outputs: dict, faulty, ref_nodes):
    """Output seen by the lowest fault-free node; all fault-free views must match."""
    honest = [v for v in ref_nodes if v not in faulty]
    view = outputs[honest[0]]
    for v in honest[1:]:
        if outputs[v] != view:
            raise InvariantViolation("fault-free nodes disagree on a broadcast outcome")
    return view


def run_generation(state: GenerationState, graph: DiagnosisGraph, net: Network,
                   config: ProtocolConfig, key_streams: dict) -> Decided | DisputeEscalated:
    tree = build_spanning_tree(graph)
    P = graph.active()
    k, D = config.k, config.D
    metrics = net.metrics
    faulty = net.faulty
    net.begin_attempt(generation=state.generation_index, attempt=state.attempt,
                      graph=graph, tree=tree, config=config)
    metrics.generations_run += 1

    # A: dissemination, one round per tree level
    m = {SOURCE: state.payload_truth}
    for level in tree.levels():
        inbox = net.step([RoundMessage(tree.parent[c], c, Tag.DATA, m[tree.parent[c]], D)
                          for c in level])
        for c in level:
            m[c] = inbox[c][0].content
    state.per_node_payload = m

    # B: keyed digests; keys are drawn only now, after every payload is fixed
    outbox = []
    for i in P:
        rng = key_streams[i]
        for j in P:
            if j != i:
                outbox.append(RoundMessage(i, j, Tag.HASH,
                                           KeyedDigest.of(m[i], rng.getrandbits(k), k), 2 * k))
    inbox = net.step(outbox)
    received = {j: {msg.sender: msg.content for msg in inbox.get(j, [])} for j in P}
    sent = {i: {j: received[j][i] for j in P if j != i} for i in P}
    state.per_pair_digests = {(i, j): kd for i in P for j, kd in sent[i].items()}
    metrics.bits_hash_model += len(P) * (len(P) - 1) * (k + D // k)
    if net.tampered[Tag.DATA] or net.tampered[Tag.HASH]:
        metrics.misbehaving_generations += 1

    # C: flags and their agreement
    local = {i: local_flag(graph, i, m[i], received[i]) for i in P}
    t_eff = graph.effective_t()
    B = broadcast_model_cost(len(P), config.c)
    g, a = state.generation_index, state.attempt
    outs = om_broadcast_many(
        [BroadcastInstance(("notify", g, a, i), i, local[i], 1, Tag.NOTIFY) for i in P],
        P, t_eff, net)
    metrics.bits_notification_model += math.ceil(len(P) * B)
    views = {v: {i: outs[("notify", g, a, i)][v] for i in P} for v in P}
    flags = _fault_free_view(views, faulty, P)
    state.flags = flags

    if not any(flags.values()):
        state.outcome = "Decided"
        peers = [v for v in P if v != SOURCE]
        honest = [v for v in P if v not in faulty]
        if len({m[v] for v in honest}) > 1:
            metrics.deception_events += 1
        if len({m[v] for v in honest if v != SOURCE}) > 1:
            metrics.disagreement_events += 1
        return Decided({v: m[v] for v in peers})

    # extended step
    layouts = {i: TranscriptLayout(i, tuple(j for j in P if j != i), D, k) for i in P}
    net.context["layouts"] = layouts
    instances = []
    for i in P:
        tr = Transcript(i, m[i], sent[i], received[i], local[i])
        instances.append(BroadcastInstance(("transcript", g, a, i), i, tr.encode(layouts[i]),
                                           layouts[i].width, Tag.EXTENDED))
    outs = om_broadcast_many(instances, P, t_eff, net)
    metrics.bits_extended_model += math.ceil(len(P) * D * B)
    metrics.extended_steps += 1
    views = {v: {i: outs[("transcript", g, a, i)][v] for i in P} for v in P}
    agreed = _fault_free_view(views, faulty, P)
    transcripts = {i: Transcript.decode(bits, layouts[i]) for i, bits in agreed.items()}

    verdict = analyze_dispute(graph, transcripts, flags=flags, tree=tree)
    if verdict.empty():
        raise InvariantViolation("dispute produced no new f-edge and no isolation")
    newly = apply_verdict(graph, verdict)
    if net.trace is not None:
        net.trace({
            "generation": g,
            "attempt": a,
            "step_tag": "Diagnosis",
            "new_f_edges": [list(e) for e in sorted(verdict.new_f_edges)],
            "isolated": sorted(newly),
        })
    state.outcome = "DisputeEscalated"
    return DisputeEscalated(verdict, newly)


@dataclass
class SessionResult:
    config: ProtocolConfig
    message: int
    decisions: dict  # fault-free peer -> l-bit int
    default_terminated: bool
    metrics: RunMetrics
    graph: DiagnosisGraph
    faulty: frozenset

    @property
    def agreement(self) -> bool:
        return len(set(self.decisions.values())) <= 1

    @property
    def valid(self) -> bool:
        if SOURCE in self.faulty:
            return True
        return all(v == self.message for v in self.decisions.values())

    @property
    def correct(self) -> bool:
        return self.agreement and self.valid

    def as_dict(self) -> dict:
        return {
            "l": self.config.l,
            "message": format(self.message, "x"),
            "decisions": {str(v): format(d, "x") for v, d in sorted(self.decisions.items())},
            "default_terminated": self.default_terminated,
            "metrics": self.metrics.as_dict(),
            "graph": self.graph.to_json(),
            "faulty": sorted(self.faulty),
        }


def run_session(config: ProtocolConfig, adversary=None, message: int | None = None,
                trace: Callable[[dict], None] | None = None) -> SessionResult:
    """Agree on ``message`` (random from the seed if omitted), l/D generations long."""
    from .adversary import Honest

    if adversary is None:
        adversary = Honest(config.n, config.t, ())
    adversary.bind(config)
    faulty = frozenset(adversary.controlled)
    if message is None:
        message = derive_rng(config.seed, "input").getrandbits(config.l)
    if not 0 <= message < (1 << config.l):
        raise ConfigError("message does not fit in l bits")

    metrics = RunMetrics(padded_bits=config.padded_bits)
    graph = DiagnosisGraph(config.n, config.t)
    net = Network(config.n, adversary, metrics, graph.isolated, trace)
    key_streams = {i: derive_rng(config.seed, "keys", i) for i in range(config.n)}

    G, D = config.generations, config.D
    padded = message << config.padded_bits
    mask = (1 << D) - 1
    peers = [v for v in range(1, config.n) if v not in faulty]
    acc = {v: 0 for v in peers}
    terminated = False
    for g in range(G):
        chunk = Payload((padded >> ((G - 1 - g) * D)) & mask, D)
        attempt = 0
        while True:
            state = GenerationState(g, attempt, chunk)
            try:
                outcome = run_generation(state, graph, net, config, key_streams)
            except SourceFaulty:
                terminated = True
                break
            if isinstance(outcome, Decided):
                for v in peers:
                    acc[v] = (acc[v] << D) | outcome.decisions[v].value
                break
            attempt += 1
        if terminated:
            break

    if terminated:
        default = 0
        for _ in range(G):
            default = (default << D) | config.default_value.value
        decisions = {v: default >> config.padded_bits for v in peers}
    else:
        decisions = {v: acc[v] >> config.padded_bits for v in peers}
    return SessionResult(config, message, decisions, terminated, metrics, graph, faulty)


def parameter_schedule(l: int, beta) -> tuple[int, int]:
    """k = round(log2 l) and the smallest multiple D of k with D >= l^(1-beta)."""
    beta = Fraction(beta)
    if not 0 < beta < 1:
        raise ConfigError("beta must lie strictly between 0 and 1")
    if l < 16:
        raise ConfigError(f"l={l} too small for the schedule (need l >= 16)")
    k = round(math.log2(l))
    if k > MAX_K:
        raise ConfigError(f"k={k} exceeds the largest supported field width")
    target = l ** float(1 - beta)
    nearest = round(target)
    if abs(target - nearest) < 1e-9 * max(1.0, target):
        target = nearest
    D = k * math.ceil(target / k)
    if D > l:
        raise ConfigError(f"no admissible (k, D) for l={l}: D={D} exceeds l")
    return k, D
