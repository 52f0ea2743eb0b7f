"""Diagnosis graph: who accuses whom, who is isolated, and how data is routed.

Edges start trusted (g) and become accusing (f) when the reliably broadcast
transcripts of a dispute show the two endpoints disagree about traffic
between them.  Marking rules, applied identically by every fault-free node:

R1  i's claimed sent value to j differs from j's claimed received value from
    i (payload along a dissemination edge, or keyed digest): mark ij as f.
R2  a node's claims contradict themselves: a sent digest that does not hash
    its own claimed payload; a flag that differs from the bit agreed in the
    notification round; or a flag that disagrees with recomputing its checks
    from its own claimed payload and claimed received digests.  The node is
    isolated at once.
R3  the dispute was triggered but R1 and R2 found nothing new: every node
    that raised the flag is treated as self-contradictory.

A fault-free node's claims are truthful, so R1 never marks a pair of
fault-free nodes and R2 never fires on one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

from .errors import InvariantViolation, SourceFaulty
from .field_hash import KeyedDigest, Payload, hash_int

SOURCE = 0


def edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass
class DiagnosisGraph:
    n: int
    t: int
    f_edges: set = field(default_factory=set)
    isolated: set = field(default_factory=set)

    def label(self, i: int, j: int) -> str:
        return "f" if edge(i, j) in self.f_edges else "g"

    def trusts(self, i: int, j: int) -> bool:
        return edge(i, j) not in self.f_edges

    def active(self) -> list[int]:
        return [v for v in range(self.n) if v not in self.isolated]

    def accusations(self, v: int) -> int:
        return sum(1 for u in range(self.n)
                   if u != v and u not in self.isolated and edge(u, v) in self.f_edges)

    def effective_t(self) -> int:
        """Fault budget left among active nodes; isolated nodes are all faulty."""
        return max(self.t - len(self.isolated), 0)

    def mark(self, i: int, j: int):
        self.f_edges.add(edge(i, j))

    def copy(self) -> DiagnosisGraph:
        return DiagnosisGraph(self.n, self.t, set(self.f_edges), set(self.isolated))

    def to_json(self) -> dict:
        return {
            "nodes": self.n,
            "t": self.t,
            "f_edges": [list(e) for e in sorted(self.f_edges)],
            "isolated": sorted(self.isolated),
        }

    @classmethod
    def from_json(cls, obj: dict) -> DiagnosisGraph:
        return cls(obj["nodes"], obj["t"], {tuple(e) for e in obj["f_edges"]},
                   set(obj["isolated"]))


# ---------------------------------------------------------------------------
# transcripts


@dataclass(frozen=True)
class TranscriptLayout:
    """Fixed bit layout of one node's transcript, so any bit string decodes."""

    node_id: int
    peers: tuple  # other active nodes, ascending
    D: int
    k: int

    @property
    def width(self) -> int:
        return self.D + 4 * self.k * len(self.peers) + 1


@dataclass
class Transcript:
    node_id: int
    claimed_payload: Payload
    claimed_sent_digests: dict  # recipient -> KeyedDigest
    claimed_received_digests: dict  # sender -> KeyedDigest
    claimed_flag: int

    def encode(self, layout: TranscriptLayout) -> int:
        k = layout.k
        v = self.claimed_payload.value
        zero = KeyedDigest(0, 0, k)
        for table in (self.claimed_sent_digests, self.claimed_received_digests):
            for j in layout.peers:
                kd = table.get(j, zero)
                v = (((v << k) | kd.key) << k) | kd.digest
        return (v << 1) | (self.claimed_flag & 1)

    @classmethod
    def decode(cls, bits: int, layout: TranscriptLayout) -> Transcript:
        k, mask = layout.k, (1 << layout.k) - 1
        flag = bits & 1
        bits >>= 1
        tables = []
        for _ in range(2):
            tab = {}
            for j in reversed(layout.peers):
                digest = bits & mask
                key = (bits >> k) & mask
                bits >>= 2 * k
                tab[j] = KeyedDigest(key, digest, k)
            tables.append(tab)
        received, sent = tables
        payload = Payload(bits & ((1 << layout.D) - 1), layout.D)
        return cls(layout.node_id, payload, sent, received, flag)


# ---------------------------------------------------------------------------
# spanning tree


@dataclass
class SpanningTree:
    root: int
    parent: dict  # node -> parent, for every active non-root node

    def children(self, v: int) -> list[int]:
        return sorted(c for c, p in self.parent.items() if p == v)

    def depth(self, v: int) -> int:
        d = 0
        while v != self.root:
            v = self.parent[v]
            d += 1
        return d

    def levels(self) -> list[list[int]]:
        """Non-root nodes grouped by depth (1, 2, ...), ascending ids."""
        out: dict[int, list[int]] = {}
        for v in self.parent:
            out.setdefault(self.depth(v), []).append(v)
        return [sorted(out[d]) for d in sorted(out)]

    def edges(self) -> list[tuple[int, int]]:
        return sorted((p, c) for c, p in self.parent.items())


def build_spanning_tree(graph: DiagnosisGraph) -> SpanningTree:
    """BFS over g-edges among active nodes, rooted at the source, ascending ids."""
    if SOURCE in graph.isolated:
        raise SourceFaulty("source is isolated")
    active = graph.active()
    parent = {}
    seen = {SOURCE}
    queue = deque([SOURCE])
    while queue:
        u = queue.popleft()
        for v in active:
            if v not in seen and graph.trusts(u, v):
                seen.add(v)
                parent[v] = u
                queue.append(v)
    if len(seen) != len(active):
        missing = sorted(set(active) - seen)
        raise InvariantViolation(f"no g-edge spanning tree reaches {missing}")
    return SpanningTree(SOURCE, parent)


def check_two_hop_lemma(graph: DiagnosisGraph) -> bool:
    """Every pair of active peers is joined by a g-path of length <= 2 avoiding the source."""
    peers = [v for v in graph.active() if v != SOURCE]
    for i, j in combinations(peers, 2):
        if graph.trusts(i, j):
            continue
        if not any(graph.trusts(i, w) and graph.trusts(w, j)
                   for w in peers if w != i and w != j):
            return False
    return True


# ---------------------------------------------------------------------------
# dispute analysis


@dataclass
class DisputeVerdict:
    new_f_edges: set = field(default_factory=set)
    self_contradictory_nodes: set = field(default_factory=set)

    def empty(self) -> bool:
        return not self.new_f_edges and not self.self_contradictory_nodes


def _mismatch(payload: Payload, kd: KeyedDigest) -> bool:
    return hash_int(payload.value, payload.nbits, kd.key, kd.k) != kd.digest


def local_flag(graph: DiagnosisGraph, node: int, payload: Payload, received: dict) -> int:
    """1 iff a digest from a trusted active peer does not match ``payload``."""
    for j, kd in received.items():
        if j != node and j not in graph.isolated and graph.trusts(node, j) and _mismatch(payload, kd):
            return 1
    return 0


def analyze_dispute(graph: DiagnosisGraph, transcripts: dict, flags: dict | None = None,
                    tree: SpanningTree | None = None) -> DisputeVerdict:
    """Apply R1-R3 to one dispute's transcripts without modifying ``graph``.

    ``flags`` are the notification bits agreed in the same attempt (defaults to
    the transcripts' own claims); ``tree`` is the dissemination tree used
    (defaults to the one the graph yields).
    """
    verdict = DisputeVerdict()
    active = graph.active()
    present = {v: transcripts[v] for v in active if v in transcripts}
    for v in active:
        if v not in present:
            verdict.self_contradictory_nodes.add(v)
    if flags is None:
        flags = {v: tr.claimed_flag for v, tr in present.items()}
    if tree is None:
        tree = build_spanning_tree(graph)

    # R1, payloads along dissemination edges
    for c, p in tree.parent.items():
        if p in present and c in present and graph.trusts(p, c):
            if present[p].claimed_payload != present[c].claimed_payload:
                verdict.new_f_edges.add(edge(p, c))

    # R1, keyed digests
    for i, ti in present.items():
        for j, tj in present.items():
            if i == j or not graph.trusts(i, j):
                continue
            if ti.claimed_sent_digests.get(j) != tj.claimed_received_digests.get(i):
                verdict.new_f_edges.add(edge(i, j))

    # R2
    for v, tr in present.items():
        if any(_mismatch(tr.claimed_payload, kd)
               for j, kd in tr.claimed_sent_digests.items() if j in present):
            verdict.self_contradictory_nodes.add(v)
            continue
        recomputed = local_flag(graph, v, tr.claimed_payload,
                                {j: kd for j, kd in tr.claimed_received_digests.items()
                                 if j in present})
        if tr.claimed_flag != flags.get(v, tr.claimed_flag) or tr.claimed_flag != recomputed:
            verdict.self_contradictory_nodes.add(v)

    # R3
    raisers = {v for v in active if flags.get(v)}
    if raisers and verdict.empty():
        verdict.self_contradictory_nodes |= raisers
    return verdict


def update_isolation(graph: DiagnosisGraph) -> set:
    """Isolate every active node accused by more than t active nodes, to a fixed point."""
    newly = set()
    while True:
        over = {v for v in graph.active() if graph.accusations(v) > graph.t}
        if not over:
            return newly
        graph.isolated |= over
        newly |= over


def apply_verdict(graph: DiagnosisGraph, verdict: DisputeVerdict) -> set:
    """Mark f-edges, isolate self-contradictory nodes, then recount; returns new isolations."""
    for i, j in verdict.new_f_edges:
        graph.mark(i, j)
    fresh = set(verdict.self_contradictory_nodes) - graph.isolated
    graph.isolated |= fresh
    return fresh | update_isolation(graph)
