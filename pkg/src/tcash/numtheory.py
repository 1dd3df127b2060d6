"""Arbitrary-precision modular arithmetic and discrete-log group generation.

Coin ownership is proven by revealing the exponent x with
alpha**x == beta (mod p).  Groups generated here place alpha inside a
subgroup of Z_p* with large prime order q, so the discrete log cannot be
decomposed over the small factors of p - 1.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Union

Seed = Union[int, random.Random]


class NoInverseError(ValueError):
    """gcd(a, modulus) != 1, so no modular inverse exists."""


class GenerationError(RuntimeError):
    """A randomized parameter search exhausted its attempt budget."""


def as_rng(seed: Seed) -> random.Random:
    """Accept either an integer seed or an existing Random instance."""
    if isinstance(seed, random.Random):
        return seed
    return random.Random(seed)


def _sieve(limit: int) -> tuple[int, ...]:
    flags = bytearray([1]) * limit
    flags[0:2] = b"\x00\x00"
    for i in range(2, int(limit ** 0.5) + 1):
        if flags[i]:
            flags[i * i :: i] = bytes(len(flags[i * i :: i]))
    return tuple(i for i in range(limit) if flags[i])


_SMALL_PRIMES = _sieve(2048)

# Below this bound the fixed witness set decides primality exactly.
_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981
_FIXED_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def mod_exp(base: int, exp: int, modulus: int) -> int:
    """base**exp mod modulus for non-negative exp."""
    if modulus < 2:
        raise ValueError(f"modulus must be >= 2, got {modulus}")
    return pow(base, exp, modulus)


def mod_inverse(a: int, modulus: int) -> int:
    """The b with a*b == 1 (mod modulus); raises NoInverseError if gcd != 1."""
    if modulus < 2:
        raise ValueError(f"modulus must be >= 2, got {modulus}")
    if math.gcd(a, modulus) != 1:
        raise NoInverseError(f"{a} has no inverse modulo {modulus}")
    return pow(a, -1, modulus)


def _is_witness(a: int, n: int, d: int, r: int) -> bool:
    """True if a proves n composite (n - 1 = d * 2**r with d odd)."""
    x = pow(a, d, n)
    if x == 1 or x == n - 1:
        return False
    for _ in range(r - 1):
        x = (x * x) % n
        if x == n - 1:
            return False
    return True


def is_probable_prime(n: int, rounds: int = 40, rng: Optional[random.Random] = None) -> bool:
    """Miller-Rabin primality test.

    Exact for n below ~3.3e24 via a fixed witness set; above that, `rounds`
    extra witnesses bound the error by 4**-rounds.  When no rng is given the
    witnesses derive from n itself, so verdicts are reproducible.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _FIXED_WITNESSES:
        if _is_witness(a, n, d, r):
            return False
    if n < _DETERMINISTIC_BOUND:
        return True
    if rng is None:
        rng = random.Random(n & 0xFFFFFFFFFFFFFFFF)
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        if _is_witness(a, n, d, r):
            return False
    return True


def random_prime(bits: int, rng: random.Random, rounds: int = 40, top_bits: int = 1) -> int:
    """A random prime of exactly `bits` bits.

    top_bits=2 forces the two highest bits, which guarantees a product of two
    such primes fills its target width.
    """
    if bits < 3:
        raise ValueError("bits must be >= 3")
    top = 1 << (bits - 1)
    if top_bits == 2:
        top |= 1 << (bits - 2)
    for _ in range(bits * 256):
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate, rounds, rng):
            return candidate
    raise GenerationError(f"no {bits}-bit prime found within the attempt budget")


@dataclass(frozen=True)
class DlpGroup:
    """Prime p with a generator alpha of the order-q subgroup of Z_p*."""

    p: int
    q: int
    alpha: int

    def satisfies_invariants(self, rounds: int = 40) -> bool:
        return (
            is_probable_prime(self.p, rounds)
            and is_probable_prime(self.q, rounds)
            and (self.p - 1) % self.q == 0
            and 1 < self.alpha < self.p
            and pow(self.alpha, self.q, self.p) == 1
        )


@dataclass(frozen=True)
class DlpInstance:
    """A group with a secret exponent x and its public image beta."""

    group: DlpGroup
    x: int
    beta: int


def gen_dlp_group(p_bits: int, q_bits: int, seed: Seed, rounds: int = 40) -> DlpGroup:
    """Build a group by searching even k until p = k*q + 1 is prime.

    alpha is obtained as h**((p-1)/q) mod p for random h, retried while the
    result is 1; any survivor has order exactly q because q is prime.
    """
    if q_bits >= p_bits:
        raise ValueError(f"q_bits ({q_bits}) must be smaller than p_bits ({p_bits})")
    rng = as_rng(seed)
    q = random_prime(q_bits, rng, rounds)
    k_bits = p_bits - q_bits
    for _ in range(p_bits * 64):
        k = (rng.getrandbits(k_bits) | (1 << (k_bits - 1))) & ~1
        if k == 0:
            continue
        p = k * q + 1
        if p.bit_length() != p_bits:
            continue
        if not is_probable_prime(p, rounds, rng):
            continue
        for _ in range(64):
            h = rng.randrange(2, p - 1)
            alpha = pow(h, k, p)  # k == (p - 1) // q
            if alpha != 1:
                return DlpGroup(p=p, q=q, alpha=alpha)
    raise GenerationError(f"no {p_bits}-bit group found over q={q}")


def gen_dlp_instance(group: DlpGroup, seed: Seed) -> DlpInstance:
    """Secret x uniform in [1, q-1] and beta = alpha**x mod p."""
    rng = as_rng(seed)
    x = rng.randrange(1, group.q)
    beta = pow(group.alpha, x, group.p)
    return DlpInstance(group=group, x=x, beta=beta)


def verify_dlp(p: int, alpha: int, beta: int, x: int) -> bool:
    """True iff alpha**x == beta (mod p).  Malformed inputs return False."""
    if p < 2 or x < 0:
        return False
    if not (0 < alpha < p and 0 < beta < p):
        return False
    return pow(alpha, x, p) == beta
