"""Multiplicative blind signatures over an RSA-style modulus.

The whole scheme is the chain

    blind:    m' = m * r^e  (mod n)
    sign:     s' = m'^d     (mod n)
    unblind:  s  = s' * r^-1 == m^d  (mod n)

so the unblinded value equals a direct signature on m while the signer never
saw m.  Verification is the usual s^e == m (mod n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .numtheory import GenerationError, Seed, as_rng, mod_inverse, random_prime

_SMALL_EXPONENTS = (5, 17, 257, 65537, 3)
_STANDARD_EXPONENT = 65537


@dataclass(frozen=True)
class SigPublicKey:
    e: int
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"modulus too small: {self.n}")
        if self.e < 3 or self.e % 2 == 0:
            raise ValueError(f"public exponent must be odd and >= 3, got {self.e}")


@dataclass(frozen=True)
class SigPrivateKey:
    d: int
    n: int
    # generation factors, kept only so a key can re-check itself
    p: Optional[int] = None
    q: Optional[int] = None


@dataclass(frozen=True)
class BlindingFactor:
    """A unit r mod n with its inverse cached for unblinding."""

    r: int
    r_inv: int

    @classmethod
    def from_r(cls, r: int, n: int) -> "BlindingFactor":
        return cls(r=r, r_inv=mod_inverse(r, n))


def random_blinding_factor(n: int, seed: Seed) -> BlindingFactor:
    """Uniform over the units mod n, resampled until gcd(r, n) == 1."""
    rng = as_rng(seed)
    while True:
        r = rng.randrange(2, n)
        if math.gcd(r, n) == 1:
            return BlindingFactor.from_r(r, n)


def keygen(modulus_bits: int, seed: Seed, rounds: int = 40) -> tuple[SigPublicKey, SigPrivateKey]:
    """Deterministic keypair from a seed.

    Two primes of modulus_bits/2 with their top two bits forced, so n fills
    exactly modulus_bits.  The round-trip (m^e)^d == m is spot-checked before
    the pair is returned.
    """
    if modulus_bits < 16 or modulus_bits % 2:
        raise ValueError(f"modulus_bits must be even and >= 16, got {modulus_bits}")
    rng = as_rng(seed)
    half = modulus_bits // 2
    exponents = (_STANDARD_EXPONENT,) if modulus_bits >= 1024 else _SMALL_EXPONENTS
    for _ in range(64):
        p = random_prime(half, rng, rounds, top_bits=2)
        q = random_prime(half, rng, rounds, top_bits=2)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != modulus_bits:
            continue
        phi = (p - 1) * (q - 1)
        e = next((c for c in exponents if math.gcd(c, phi) == 1), None)
        if e is None:
            continue
        d = pow(e, -1, phi)
        if any(pow(pow(m, e, n), d, n) != m for m in (rng.randrange(2, n) for _ in range(3))):
            continue
        return SigPublicKey(e=e, n=n), SigPrivateKey(d=d, n=n, p=p, q=q)
    raise GenerationError(f"{modulus_bits}-bit keypair generation failed")


def blind(m: int, factor: BlindingFactor, pk: SigPublicKey) -> int:
    """m * r^e mod n."""
    if not 0 <= m < pk.n:
        raise ValueError(f"message {m} outside [0, n)")
    return (m * pow(factor.r, pk.e, pk.n)) % pk.n


def sign(m_blinded: int, sk: SigPrivateKey) -> int:
    """m_blinded^d mod n."""
    if not 0 <= m_blinded < sk.n:
        raise ValueError(f"message {m_blinded} outside [0, n)")
    return pow(m_blinded, sk.d, sk.n)


def unblind(s_blinded: int, factor: BlindingFactor, n: int) -> int:
    """s' * r^-1 mod n."""
    return (s_blinded * factor.r_inv) % n


def verify(s: int, m: int, pk: SigPublicKey) -> bool:
    """True iff s^e == m (mod n)."""
    return pow(s, pk.e, pk.n) == m % pk.n


def digest_to_message(digest: bytes, n: int) -> int:
    """Map a 32-byte digest into the signing domain.

    Big-endian embedding is exact whenever n exceeds 2^256 (always true at
    the standard profile); smaller toy moduli fold the digest mod n.
    """
    if len(digest) != 32:
        raise ValueError(f"expected a 32-byte digest, got {len(digest)} bytes")
    m = int.from_bytes(digest, "big")
    if n.bit_length() > 256:
        return m
    return m % n
