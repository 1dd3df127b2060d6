"""Deployment size profiles.

Every byte width in the wire formats derives from one of these profiles, so
the same code paths serve both the full-size system and a fast test setup.
"""

from __future__ import annotations

from dataclasses import dataclass

# sn, val, bank, e, x_prev and h_prev always occupy 256-bit slots.
ID_SLOT = 32


@dataclass(frozen=True)
class Profile:
    """Bit widths for one deployment scale."""

    name: str
    p_bits: int          # DLP prime modulus
    q_bits: int          # prime order of the DLP subgroup
    modulus_bits: int    # signature key modulus
    mr_rounds: int       # Miller-Rabin rounds for primality checks

    @property
    def dlp_slot(self) -> int:
        """Bytes reserved for each of p, alpha and beta."""
        return self.p_bits // 8

    @property
    def key_slot(self) -> int:
        """Bytes reserved for a key modulus and for a signature."""
        return self.modulus_bits // 8

    @property
    def tx_size(self) -> int:
        return 6 * ID_SLOT + 3 * self.dlp_slot + self.key_slot

    @property
    def instance_size(self) -> int:
        return self.tx_size + self.key_slot

    @property
    def secret_core_size(self) -> int:
        """Serialized owner secrets per coin: sn, x and the private exponent."""
        return ID_SLOT + self.dlp_slot + self.key_slot


STANDARD = Profile("standard", p_bits=1024, q_bits=256, modulus_bits=2048, mr_rounds=40)
TOY = Profile("toy", p_bits=64, q_bits=32, modulus_bits=128, mr_rounds=24)

_BY_NAME = {p.name: p for p in (STANDARD, TOY)}


def get_profile(name: str) -> Profile:
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; expected one of {sorted(_BY_NAME)}") from None
