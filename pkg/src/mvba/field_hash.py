"""GF(2^k) arithmetic and the keyed polynomial-evaluation hash.

A D-bit payload is split into d = D/k blocks b_1..b_d (b_1 holds the first,
most significant, k bits) and hashed under key K as

    H(m, K) = b_1*K + b_2*K^2 + ... + b_d*K^d      over GF(2^k).

For m != m' the difference is a nonzero polynomial of degree <= d with no
constant term, so at most d keys collide: Pr[collision] <= d * 2^-k.

Field elements are stored as plain ints in the hot path; ``FieldElement``
is the checked value type used at the public surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError, ContractViolation

# Lexicographically smallest irreducible polynomial of each degree with a
# nonzero constant term.  Bit i is the coefficient of x^i.  Part of the
# reproducibility contract: changing an entry changes every digest.
IRREDUCIBLE = {
    1: 0x3,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x83,
    8: 0x11B,
    9: 0x203,
    10: 0x409,
    11: 0x805,
    12: 0x1009,
    13: 0x201B,
    14: 0x4021,
    15: 0x8003,
    16: 0x1002B,
    17: 0x20009,
    18: 0x40009,
    19: 0x80027,
    20: 0x100009,
    21: 0x200005,
    22: 0x400003,
    23: 0x800021,
    24: 0x100001B,
    25: 0x2000009,
    26: 0x400001B,
    27: 0x8000027,
    28: 0x10000003,
    29: 0x20000005,
    30: 0x40000003,
    31: 0x80000009,
    32: 0x10000008D,
}

MAX_K = 32


def modulus(k: int) -> int:
    try:
        return IRREDUCIBLE[k]
    except KeyError:
        raise ConfigError(f"unsupported field width k={k}; need 1 <= k <= {MAX_K}") from None


def mul(a: int, b: int, k: int) -> int:
    """Multiply two reduced ints in GF(2^k) (shift-and-add with reduction)."""
    mod = IRREDUCIBLE[k]
    top = 1 << k
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a & top:
            a ^= mod
    return r


@dataclass(frozen=True, slots=True)
class FieldElement:
    value: int
    width: int

    def __post_init__(self):
        modulus(self.width)
        if not 0 <= self.value < (1 << self.width):
            raise ContractViolation(f"value {self.value} does not fit in {self.width} bits")

    def _check(self, other: FieldElement):
        if not isinstance(other, FieldElement) or other.width != self.width:
            raise ContractViolation("field elements of different widths")

    def __add__(self, other: FieldElement) -> FieldElement:
        self._check(other)
        return FieldElement(self.value ^ other.value, self.width)

    __xor__ = __add__
    __sub__ = __add__

    def __mul__(self, other: FieldElement) -> FieldElement:
        return gf_mul(self, other)

    def __int__(self):
        return self.value


def gf_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    if a.width != b.width:
        raise ContractViolation(f"width mismatch: {a.width} vs {b.width}")
    return FieldElement(mul(a.value, b.value, a.width), a.width)


@dataclass(frozen=True, slots=True)
class Payload:
    """An exact-length bit string; bit 0 of the string is the MSB of ``value``."""

    value: int
    nbits: int

    def __post_init__(self):
        if self.nbits <= 0:
            raise ContractViolation("payload length must be positive")
        if not 0 <= self.value < (1 << self.nbits):
            raise ContractViolation(f"value does not fit in {self.nbits} bits")

    @classmethod
    def zeros(cls, nbits: int) -> Payload:
        return cls(0, nbits)

    @classmethod
    def from_bits(cls, bits) -> Payload:
        bits = list(bits)
        value = 0
        for b in bits:
            if b not in (0, 1):
                raise ContractViolation(f"not a bit: {b!r}")
            value = (value << 1) | b
        return cls(value, len(bits))

    def to_bits(self) -> list[int]:
        return [(self.value >> (self.nbits - 1 - i)) & 1 for i in range(self.nbits)]

    def blocks(self, k: int) -> list[int]:
        if self.nbits % k:
            raise ContractViolation(f"payload length {self.nbits} is not a multiple of k={k}")
        mask = (1 << k) - 1
        d = self.nbits // k
        return [(self.value >> (self.nbits - (j + 1) * k)) & mask for j in range(d)]

    def __xor__(self, other: Payload) -> Payload:
        if other.nbits != self.nbits:
            raise ContractViolation("payload length mismatch")
        return Payload(self.value ^ other.value, self.nbits)


def hash_int(value: int, nbits: int, key: int, k: int) -> int:
    """Fast path of :func:`poly_hash` on raw ints; caller guarantees k | nbits."""
    mod = IRREDUCIBLE[k]
    top = 1 << k
    mask = top - 1
    acc = 0
    # Horner from the last block: ((b_d K + b_{d-1}) K + ...) K
    for shift in range(0, nbits, k):
        a = acc ^ ((value >> shift) & mask)
        b = key
        r = 0
        while b:
            if b & 1:
                r ^= a
            b >>= 1
            a <<= 1
            if a & top:
                a ^= mod
        acc = r
    return acc


def poly_hash(m: Payload, key: FieldElement) -> FieldElement:
    """Keyed almost-universal hash of ``m``; output is one k-bit field element."""
    k = key.width
    if m.nbits % k:
        raise ContractViolation(f"payload length {m.nbits} is not a multiple of k={k}")
    return FieldElement(hash_int(m.value, m.nbits, key.value, k), k)


def collision_bound(D: int, k: int) -> Fraction:
    """Upper bound (D/k) * 2^-k on Pr_K[H(m,K) = H(m',K)] for m != m'."""
    if k <= 0 or D <= 0 or D % k:
        raise ContractViolation(f"D={D} must be a positive multiple of k={k}")
    return Fraction(D // k, 1 << k)


@dataclass(frozen=True, slots=True)
class KeyedDigest:
    """A (key, digest) pair as sent in the hash exchange.  Both are k-bit ints."""

    key: int
    digest: int
    k: int

    @classmethod
    def of(cls, m: Payload, key: int, k: int) -> KeyedDigest:
        return cls(key, hash_int(m.value, m.nbits, key, k), k)

    def matches(self, m: Payload) -> bool:
        return hash_int(m.value, m.nbits, self.key, self.k) == self.digest

    @property
    def nbits(self) -> int:
        return 2 * self.k

    def model_bits(self, D: int) -> int:
        """Size under the k + D/k accounting (k-bit key, D/k-bit hash value)."""
        return self.k + D // self.k
