"""Byzantine strategies.

The protocol computes every node's message as an honest node would; for
controlled nodes the network then asks the strategy what to send instead
(``tamper``).  Returning ``None`` drops the message.  Strategies see only
their own traffic, traffic addressed to them, and public state (the
diagnosis graph and the dissemination tree).
"""

from __future__ import annotations

import random

from .diagnosis import SOURCE, Transcript
from .errors import ConfigError
from .field_hash import KeyedDigest, Payload
from .simnet import RoundMessage, StepContext, Tag, derive_rng


class Honest:
    name = "honest"

    def __init__(self, n: int, t: int, controlled=()):
        controlled = frozenset(controlled)
        if len(controlled) > t:
            raise ConfigError(f"{self.name}: controls {len(controlled)} nodes but t={t}")
        bad = [v for v in controlled if not 0 <= v < n]
        if bad:
            raise ConfigError(f"{self.name}: no such nodes {sorted(bad)} (n={n})")
        self.n, self.t = n, t
        self.controlled = controlled
        self.coalition = controlled
        self.rng = random.Random(0)
        self.seen: list[tuple] = []

    def bind(self, config, salt=()):
        if (config.n, config.t) != (self.n, self.t):
            raise ConfigError(f"strategy built for n={self.n}, t={self.t}, config has "
                              f"n={config.n}, t={config.t}")
        self.config = config
        self.rng = derive_rng(config.seed, "adversary", self.name, *salt)
        self.seen = []

    def respond(self, outgoing: list[RoundMessage], view: list[RoundMessage],
                ctx: StepContext) -> list:
        self.observe(view, ctx)
        return [self.tamper(m, ctx) for m in outgoing]

    def observe(self, view, ctx):
        if view:
            self.seen.append((ctx.generation, ctx.attempt, ctx.tag))

    def tamper(self, msg: RoundMessage, ctx: StepContext):
        return msg.content

    # helpers ---------------------------------------------------------------

    def victims(self, node: int, ctx: StepContext) -> list[int]:
        """Active, trusted, fault-free-looking peers of ``node`` in ascending order."""
        g = ctx.graph
        return [v for v in g.active() if v != node and v not in self.coalition and g.trusts(node, v)]

    @staticmethod
    def own_broadcast(msg: RoundMessage) -> bool:
        """True for the first-round message of the sender's own broadcast instance."""
        return msg.path == (msg.sender,)

    @staticmethod
    def rewrite_transcript(msg: RoundMessage, ctx: StepContext, edit) -> int:
        layout = ctx.info["layouts"][msg.sender]
        tr = Transcript.decode(msg.content, layout)
        edit(tr)
        return tr.encode(layout)

    @staticmethod
    def deny_digests(tr: Transcript):
        """Claim every sent digest was computed honestly from the claimed payload."""
        tr.claimed_sent_digests = {j: KeyedDigest.of(tr.claimed_payload, kd.key, kd.k)
                                   for j, kd in tr.claimed_sent_digests.items()}

    def _delta(self, nbits: int) -> int:
        return self.rng.randrange(1, 1 << nbits)


class EquivocatingSource(Honest):
    """Source sends X to a few children and X^delta to the rest, then claims X throughout."""

    name = "equivocating_source"

    def __init__(self, n, t, controlled=(SOURCE,), subset_size: int = 1):
        super().__init__(n, t, controlled)
        if SOURCE not in self.controlled:
            raise ConfigError("equivocating_source must control node 0")
        self.subset_size = subset_size
        self._alt = {}

    def _subset(self, ctx):
        kids = [c for c in ctx.info["tree"].children(SOURCE) if c not in self.coalition]
        if len(kids) <= self.subset_size:
            return set()
        return set(kids[:self.subset_size])

    def _altered(self, payload: Payload, ctx) -> Payload:
        key = (ctx.generation, ctx.attempt)
        if key not in self._alt:
            self._alt[key] = payload ^ Payload(self._delta(payload.nbits), payload.nbits)
        return self._alt[key]

    def tamper(self, msg, ctx):
        if msg.sender != SOURCE:
            return msg.content
        if msg.tag is Tag.DATA and msg.recipient in self._subset(ctx):
            return self._altered(msg.content, ctx)
        if msg.tag is Tag.HASH and msg.recipient in self._subset(ctx):
            alt = self._alt.get((ctx.generation, ctx.attempt))
            if alt is not None:
                return KeyedDigest.of(alt, msg.content.key, msg.content.k)
        if msg.tag is Tag.EXTENDED and self.own_broadcast(msg):
            return self.rewrite_transcript(msg, ctx, self.deny_digests)
        return msg.content


class DigestLiar(Honest):
    """Sends one trusted peer a corrupted digest; with ``deny`` claims it sent the right one."""

    name = "digest_liar"

    def __init__(self, n, t, controlled=None, deny: bool = True):
        super().__init__(n, t, (n - 1,) if controlled is None else controlled)
        self.deny = deny

    def tamper(self, msg, ctx):
        if msg.tag is Tag.HASH:
            vs = self.victims(msg.sender, ctx)
            if vs and msg.recipient == vs[0]:
                kd = msg.content
                return KeyedDigest(kd.key, kd.digest ^ 1, kd.k)
        if msg.tag is Tag.EXTENDED and self.deny and self.own_broadcast(msg):
            return self.rewrite_transcript(msg, ctx, self.deny_digests)
        return msg.content


class FalseFlagger(Honest):
    """Follows the data path honestly but always reports an inconsistency."""

    name = "false_flagger"

    def __init__(self, n, t, controlled=None):
        super().__init__(n, t, (n - 1,) if controlled is None else controlled)

    def tamper(self, msg, ctx):
        if msg.tag is Tag.NOTIFY and self.own_broadcast(msg):
            return 1
        if msg.tag is Tag.EXTENDED and self.own_broadcast(msg):
            def claim_flag(tr):
                tr.claimed_flag = 1
            return self.rewrite_transcript(msg, ctx, claim_flag)
        return msg.content


class TreeCorruptor(Honest):
    """Once anything has been detected, alters every payload it forwards down the tree."""

    name = "tree_corruptor"

    def __init__(self, n, t, controlled=None):
        super().__init__(n, t, (1,) if controlled is None else controlled)

    def tamper(self, msg, ctx):
        if msg.tag is Tag.DATA and msg.sender != SOURCE and ctx.graph.f_edges:
            p = msg.content
            return p ^ Payload(self._delta(p.nbits), p.nbits)
        return msg.content


class TranscriptLiar(Honest):
    """Corrupts a digest, raises the flag, then denies its own lie and frames another peer."""

    name = "transcript_liar"

    def __init__(self, n, t, controlled=None):
        super().__init__(n, t, (n - 1,) if controlled is None else controlled)

    def tamper(self, msg, ctx):
        vs = self.victims(msg.sender, ctx)
        if msg.tag is Tag.HASH and vs and msg.recipient == vs[0]:
            kd = msg.content
            return KeyedDigest(kd.key, kd.digest ^ 1, kd.k)
        if msg.tag is Tag.NOTIFY and self.own_broadcast(msg):
            return 1
        if msg.tag is Tag.EXTENDED and self.own_broadcast(msg):
            framed = vs[1] if len(vs) > 1 else (vs[0] if vs else None)

            def lie(tr):
                self.deny_digests(tr)
                if framed is not None and framed in tr.claimed_received_digests:
                    kd = tr.claimed_received_digests[framed]
                    tr.claimed_received_digests[framed] = KeyedDigest(kd.key, kd.digest ^ 1, kd.k)
                tr.claimed_flag = 1
            return self.rewrite_transcript(msg, ctx, lie)
        return msg.content


class Colluders(Honest):
    """Several strategies acting together; each message goes to the part owning its sender."""

    name = "colluders"

    def __init__(self, n, t, parts):
        controlled = set()
        for p in parts:
            if controlled & p.controlled:
                raise ConfigError("colluding parts must control disjoint nodes")
            controlled |= p.controlled
        super().__init__(n, t, controlled)
        self.parts = list(parts)
        for p in self.parts:
            p.coalition = self.controlled

    def bind(self, config, salt=()):
        super().bind(config, salt)
        for i, p in enumerate(self.parts):
            p.bind(config, (*salt, "part", i))
            p.coalition = self.controlled

    def tamper(self, msg, ctx):
        for p in self.parts:
            if msg.sender in p.controlled:
                return p.tamper(msg, ctx)
        return msg.content


class Fuzz(Honest):
    """Random deviation at every decision point of the controlled nodes."""

    name = "fuzz"

    def __init__(self, n, t, controlled=None, p: float = 0.3, seed: int = 0):
        super().__init__(n, t, (n - 1,) if controlled is None else controlled)
        self.p = p
        self.fuzz_seed = seed

    def bind(self, config, salt=()):
        super().bind(config, (*salt, self.fuzz_seed))

    def tamper(self, msg, ctx):
        r = self.rng
        if r.random() >= self.p:
            return msg.content
        if r.random() < 0.2:
            return None
        c = msg.content
        if isinstance(c, Payload):
            return Payload(r.getrandbits(c.nbits), c.nbits)
        if isinstance(c, KeyedDigest):
            if r.random() < 0.5:
                return KeyedDigest(c.key, c.digest ^ (1 << r.randrange(c.k)), c.k)
            return KeyedDigest(r.getrandbits(c.k), r.getrandbits(c.k), c.k)
        if msg.tag is Tag.EXTENDED and r.random() < 0.7:
            return c ^ (1 << r.randrange(msg.nbits))
        return r.getrandbits(msg.nbits)


def make_colluders(n, t, controlled=None, mix: str = "liars"):
    if n < 7 or t < 2:
        raise ConfigError("colluders needs n >= 7 and t >= 2")
    if mix == "liars":
        a, b = controlled or (1, 2)
        parts = [TranscriptLiar(n, t, (a,)), DigestLiar(n, t, (b,))]
    elif mix == "source_relay":
        a, b = controlled or (SOURCE, 1)
        parts = [EquivocatingSource(n, t, (a,)), TreeCorruptor(n, t, (b,))]
    elif mix == "flag_and_frame":
        a, b = controlled or (1, 2)
        parts = [FalseFlagger(n, t, (a,)), TranscriptLiar(n, t, (b,))]
    else:
        raise ConfigError(f"unknown colluder mix {mix!r}")
    return Colluders(n, t, parts)


CATALOGUE = {
    "honest": Honest,
    "equivocating_source": EquivocatingSource,
    "digest_liar": DigestLiar,
    "false_flagger": FalseFlagger,
    "tree_corruptor": TreeCorruptor,
    "transcript_liar": TranscriptLiar,
    "colluders": make_colluders,
    "fuzz": Fuzz,
}


def make_adversary(name: str, n: int, t: int, controlled=None, **params):
    try:
        ctor = CATALOGUE[name]
    except KeyError:
        raise ConfigError(f"unknown adversary {name!r}; choose from {sorted(CATALOGUE)}") from None
    if name == "honest":
        return Honest(n, t, controlled or ())
    if controlled is not None:
        params["controlled"] = tuple(controlled)
    return ctor(n, t, **params)
