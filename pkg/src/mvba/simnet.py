"""Synchronous round engine with step barriers and per-category bit counters.

Every call to :meth:`Network.step` is one synchronous round: all messages in
the outbox are delivered together.  Messages sent by controlled (faulty)
nodes are handed to the adversary first, which may rewrite or drop them after
seeing what fault-free nodes sent *to* controlled nodes in the same round
(rushing).  Dropped or malformed faulty messages are replaced by a zero value
of the expected size and charged at that size.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Callable

from .errors import ConfigError, HarnessError
from .field_hash import KeyedDigest, Payload, collision_bound


class Tag(enum.Enum):
    DATA = "Data"
    HASH = "HashExchange"
    NOTIFY = "NotificationBA"
    EXTENDED = "ExtendedBA"


_PHASE_RANK = {Tag.DATA: 0, Tag.HASH: 1, Tag.NOTIFY: 2, Tag.EXTENDED: 3}


@dataclass(frozen=True, slots=True)
class RoundMessage:
    sender: int
    recipient: int
    tag: Tag
    content: Any  # Payload | KeyedDigest | int (raw bit string of width nbits)
    nbits: int
    instance: Any = None  # broadcast instance id, for BA traffic
    path: tuple = ()  # relay path inside a broadcast instance

    def with_content(self, content) -> RoundMessage:
        return RoundMessage(self.sender, self.recipient, self.tag, content,
                            self.nbits, self.instance, self.path)


def derive_rng(seed: int, *labels) -> random.Random:
    """Independent stream for ``labels`` under ``seed`` (labelled split, no shared state)."""
    tag = "/".join(str(x) for x in (seed, *labels)).encode()
    return random.Random(int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "big"))


def zero_like(template: RoundMessage):
    c = template.content
    if isinstance(c, Payload):
        return Payload.zeros(c.nbits)
    if isinstance(c, KeyedDigest):
        return KeyedDigest(0, 0, c.k)
    return 0


def _well_formed(content, template: RoundMessage) -> bool:
    t = template.content
    if isinstance(t, Payload):
        return isinstance(content, Payload) and content.nbits == t.nbits
    if isinstance(t, KeyedDigest):
        return (isinstance(content, KeyedDigest) and content.k == t.k
                and 0 <= content.key < (1 << t.k) and 0 <= content.digest < (1 << t.k))
    return (isinstance(content, int) and not isinstance(content, bool)
            and 0 <= content < (1 << template.nbits))


@dataclass
class RunMetrics:
    bits_data: int = 0
    bits_hash: int = 0
    bits_hash_model: int = 0
    bits_notification_measured: int = 0
    bits_notification_model: int = 0
    bits_extended_measured: int = 0
    bits_extended_model: int = 0
    generations_run: int = 0
    extended_steps: int = 0
    deception_events: int = 0
    disagreement_events: int = 0
    misbehaving_generations: int = 0
    padded_bits: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    def measured_total(self) -> int:
        return (self.bits_data + self.bits_hash + self.bits_notification_measured
                + self.bits_extended_measured)

    def model_total(self) -> int:
        return (self.bits_data + self.bits_hash_model + self.bits_notification_model
                + self.bits_extended_model)


_COUNTER = {
    Tag.DATA: "bits_data",
    Tag.HASH: "bits_hash",
    Tag.NOTIFY: "bits_notification_measured",
    Tag.EXTENDED: "bits_extended_measured",
}


@dataclass
class StepContext:
    """What the adversary may know about the current round besides its own traffic."""

    tag: Tag
    generation: int | None = None
    attempt: int | None = None
    graph: Any = None
    info: dict = field(default_factory=dict)


class Network:
    """Complete synchronous network over nodes ``0..n-1``.

    ``isolated`` is shared with the diagnosis graph so the engine can reject
    traffic that touches removed nodes.
    """

    def __init__(self, n: int, adversary=None, metrics: RunMetrics | None = None,
                 isolated: set | None = None, trace: Callable[[dict], None] | None = None):
        self.n = n
        self.adversary = adversary
        self.faulty = frozenset(adversary.controlled) if adversary is not None else frozenset()
        self.metrics = metrics if metrics is not None else RunMetrics()
        self.isolated = isolated if isolated is not None else set()
        self.trace = trace
        self.total_bits = 0
        self.tampered = {tag: 0 for tag in Tag}
        self.context: dict = {}
        self._phase = -1

    def begin_attempt(self, **context):
        """Start a new generation attempt: resets the step-order barrier."""
        self._phase = -1
        self.tampered = {tag: 0 for tag in Tag}
        self.context = dict(context)

    def step(self, outbox: list[RoundMessage]) -> dict[int, list[RoundMessage]]:
        if not outbox:
            return {}
        tag = outbox[0].tag
        rank = _PHASE_RANK[tag]
        if rank < self._phase:
            raise HarnessError(f"{tag.value} step after a later phase in the same attempt")
        self._phase = rank
        for m in outbox:
            if m.tag is not tag:
                raise HarnessError("mixed step tags in one round")
            if m.sender == m.recipient or m.nbits <= 0:
                raise HarnessError(f"malformed message {m.sender}->{m.recipient}")
            if m.sender in self.isolated or m.recipient in self.isolated:
                raise HarnessError(f"message {m.sender}->{m.recipient} touches an isolated node")

        honest = [m for m in outbox if m.sender not in self.faulty]
        faulty = [m for m in outbox if m.sender in self.faulty]
        delivered = honest
        if faulty:
            view = [m for m in honest if m.recipient in self.faulty]
            ctx = StepContext(tag, self.context.get("generation"), self.context.get("attempt"),
                              self.context.get("graph"), self.context)
            replies = self.adversary.respond(faulty, view, ctx)
            delivered = list(honest)
            for m, content in zip(faulty, replies):
                if content is None or not _well_formed(content, m):
                    content = zero_like(m)
                if content != m.content:
                    self.tampered[tag] += 1
                delivered.append(m.with_content(content))

        inbox: dict[int, list[RoundMessage]] = {}
        bits = 0
        for m in delivered:
            inbox.setdefault(m.recipient, []).append(m)
            bits += m.nbits
        setattr(self.metrics, _COUNTER[tag], getattr(self.metrics, _COUNTER[tag]) + bits)
        self.total_bits += bits
        if self.trace is not None:
            sizes: dict[int, int] = {}
            for m in delivered:
                sizes[m.nbits] = sizes.get(m.nbits, 0) + 1
            self.trace({
                "generation": self.context.get("generation"),
                "attempt": self.context.get("attempt"),
                "step_tag": tag.value,
                "messages": len(delivered),
                "bits": bits,
                "sizes": {str(s): c for s, c in sorted(sizes.items())},
            })
        return inbox


# ---------------------------------------------------------------------------
# closed forms


def security_bound_for(k: int, D: int, t: int) -> Fraction:
    """(1 - 2^-k D/k)^(t(t+1)): lower bound on the probability of correct agreement."""
    eps = collision_bound(D, k)
    if eps >= 1:
        raise ConfigError(f"2^-k * D/k = {eps} must be < 1 (k={k}, D={D})")
    return (1 - eps) ** (t * (t + 1))


def security_bound(config) -> Fraction:
    return security_bound_for(config.k, config.D, config.t)


def broadcast_model_cost(n: int, c) -> Fraction:
    """Model cost B of reliably broadcasting one bit among n nodes: c * n^2."""
    return Fraction(c) * n * n


def cost_bound_terms(n: int, t: int, l: int, D: int, k: int, c) -> dict[str, Fraction]:
    """The four terms of the upper bound on C(l) with B = c n^2 and a (k + D/k)-bit digest.

    ``l`` need not be a multiple of D here; callers pass the padded/run length.
    """
    B = broadcast_model_cost(n, c)
    gens = Fraction(l, D)
    return {
        "data": Fraction((n - 1) * l),
        "hash": n * (n - 1) * (k + Fraction(D, k)) * gens,
        "notification": n * B * gens,
        "extended": n * D * B * t * (t + 1),
    }


def asymptotic_alpha(n: int, t: int, l: int, D: int, k: int, c) -> Fraction:
    """Per-bit complexity C(l)/l from the bound with its extended-step term included."""
    return sum(cost_bound_terms(n, t, l, D, k, c).values()) / l


@dataclass(frozen=True)
class ComplexityReport:
    C_measured: int
    C_model: Fraction
    alpha_measured: Fraction
    alpha_model: Fraction
    bound_model: Fraction
    model_terms: dict
    bound_terms: dict

    def as_dict(self) -> dict:
        return {
            "C_measured": self.C_measured,
            "C_model": float(self.C_model),
            "alpha_measured": float(self.alpha_measured),
            "alpha_model": float(self.alpha_model),
            "bound_model": float(self.bound_model),
        }


def complexity_report(metrics: RunMetrics, config) -> ComplexityReport:
    """Measured and model totals for a finished run, plus the bound they must respect.

    The bound is evaluated over the generations actually run (re-runs and
    padding included), so ``C_model <= bound_model`` is an exact check.
    """
    if config.l <= 0:
        raise ConfigError("l must be positive")
    model_terms = {
        "data": Fraction(metrics.bits_data),
        "hash": Fraction(metrics.bits_hash_model),
        "notification": Fraction(metrics.bits_notification_model),
        "extended": Fraction(metrics.bits_extended_model),
    }
    C_model = sum(model_terms.values())
    C_measured = metrics.measured_total()
    run_length = metrics.generations_run * config.D
    bound_terms = cost_bound_terms(config.n, config.t, run_length, config.D, config.k, config.c)
    return ComplexityReport(
        C_measured=C_measured,
        C_model=C_model,
        alpha_measured=Fraction(C_measured, config.l),
        alpha_model=C_model / config.l,
        bound_model=sum(bound_terms.values()),
        model_terms=model_terms,
        bound_terms=bound_terms,
    )
