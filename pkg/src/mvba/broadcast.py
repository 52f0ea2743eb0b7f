"""Reliable broadcast by recursive oral messages, OM(t).

OM(t) is run in its round-based form: in round 1 the source sends its value
to every other participant; in round r each participant relays every value it
received along a path of length r-1 to everyone not yet on that path.  After
t+1 rounds each receiver folds the relay tree bottom-up with a strict
majority (ties and missing values resolve to 0).  For more than 3t
participants this gives agreement, and validity for a fault-free source.

Several instances advance in lockstep so that, e.g., all n notification bits
of one generation share the same t+1 rounds.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from typing import Hashable, Iterable

from .errors import PreconditionError
from .simnet import Network, RoundMessage, Tag


@dataclass(frozen=True)
class BroadcastInstance:
    instance_id: Hashable
    source_id: int
    value: int  # payload bit string as an int of ``width`` bits
    width: int
    tag: Tag = Tag.NOTIFY

    def round_budget(self, t: int) -> int:
        return t + 1


def majority(values: list[int]) -> int:
    value, count = Counter(values).most_common(1)[0]
    return value if 2 * count > len(values) else 0


def om_broadcast(instance: BroadcastInstance, participants: Iterable[int], t: int,
                 net: Network) -> dict[int, int]:
    return om_broadcast_many([instance], participants, t, net)[instance.instance_id]


def om_broadcast_many(instances: list[BroadcastInstance], participants: Iterable[int], t: int,
                      net: Network) -> dict[Hashable, dict[int, int]]:
    """Run ``instances`` concurrently; returns instance id -> (participant -> output).

    Outputs of controlled participants are computed as an honest node would,
    but carry no guarantee.
    """
    P = sorted(participants)
    if len(P) <= 3 * t:
        raise PreconditionError(f"OM({t}) needs more than {3 * t} participants, got {len(P)}")
    if t < 0:
        raise PreconditionError("t must be non-negative")
    if not instances:
        return {}
    tags = {inst.tag for inst in instances}
    if len(tags) != 1:
        raise PreconditionError("instances in one lockstep run must share a step tag")
    tag = tags.pop()
    for inst in instances:
        if inst.source_id not in P:
            raise PreconditionError(f"source {inst.source_id} is not a participant")

    # received[iid][node][path] = value node got along path (path ends with the sender)
    received = {inst.instance_id: {p: {} for p in P} for inst in instances}

    outbox = [RoundMessage(inst.source_id, j, tag, inst.value, inst.width,
                           inst.instance_id, (inst.source_id,))
              for inst in instances for j in P if j != inst.source_id]
    _deliver(net.step(outbox), received)

    frontier = {inst.instance_id: [(inst.source_id,)] for inst in instances}
    width = {inst.instance_id: inst.width for inst in instances}
    for _ in range(t):
        outbox = []
        nxt = {}
        for iid, paths in frontier.items():
            w = width[iid]
            nxt[iid] = []
            for path in paths:
                for q in P:
                    if q in path:
                        continue
                    nxt[iid].append(path + (q,))
                    value = received[iid][q].get(path, 0)
                    relay = path + (q,)
                    for j in P:
                        if j != q and j not in path:
                            outbox.append(RoundMessage(q, j, tag, value, w, iid, relay))
        frontier = nxt
        _deliver(net.step(outbox), received)

    out = {}
    for inst in instances:
        iid = inst.instance_id
        res = {}
        for j in P:
            if j == inst.source_id:
                res[j] = inst.value
            else:
                res[j] = _resolve(received[iid][j], (inst.source_id,), j, P, t)
        out[iid] = res
    return out


def _deliver(inbox, received):
    for j, msgs in inbox.items():
        for m in msgs:
            received[m.instance][j][m.path] = m.content


def _resolve(got: dict, path: tuple, me: int, P: list[int], t: int) -> int:
    direct = got.get(path, 0)
    if len(path) == t + 1:
        return direct
    votes = [direct]
    for i in P:
        if i != me and i not in path:
            votes.append(_resolve(got, path + (i,), me, P, t))
    return majority(votes)


def om_message_count(p: int, t: int) -> int:
    """Messages exchanged by one OM(t) instance among p participants."""
    total, layer = 0, 1
    for r in range(t + 1):
        layer *= p - 1 - r
        total += layer
    return total


def ideal_broadcast_cost(n: int, payload_bits: int, c=1) -> int:
    """Model cost c * n^2 * payload_bits of an optimal broadcast, rounded up."""
    c = Fraction(c)
    if n < 4 or payload_bits < 1 or c <= 0:
        raise PreconditionError("need n >= 4, payload_bits >= 1, c > 0")
    return ceil(c * n * n * payload_bits)
