"""Coin transactions, canonical encoding, hashing and context-free checks.

A coin is a chain of transactions.  Each transaction names the coin
(sn, val, bank), publishes the current owner's DLP parameters and transfer
key, and links to its predecessor by revealing the predecessor's DLP secret
and hash.  An instance pairs a transaction with the previous owner's (or the
minting bank's) signature over the transaction digest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import numtheory
from .blindsig import SigPublicKey
from .profiles import ID_SLOT, Profile

# val counts the smallest fiat unit (cents)
DENOMINATIONS = frozenset({100, 500, 1000})

ZERO_HASH = bytes(32)


class EncodingError(ValueError):
    """A field does not fit its fixed-width slot."""


class FormatError(ValueError):
    """Raw bytes do not parse as the expected structure."""


class OwnershipError(ValueError):
    """A revealed DLP secret does not solve the previous transaction's DLP."""


@dataclass(frozen=True)
class CoinId:
    """(sn, val, bank): the coin's immutable index into the global ledger."""

    sn: int
    val: int
    bank: int


@dataclass(frozen=True)
class Transaction:
    coin_id: CoinId
    dlp_p: int
    dlp_alpha: int
    dlp_beta: int
    key_n: int
    key_e: int
    x_prev: int
    h_prev: bytes


@dataclass(frozen=True)
class CoinInstance:
    tx: Transaction
    sig: int


def _pack(value: int, width: int, label: str) -> bytes:
    if value < 0:
        raise EncodingError(f"{label} is negative")
    try:
        return value.to_bytes(width, "big")
    except OverflowError:
        raise EncodingError(f"{label} overflows its {width}-byte slot") from None


def serialize_tx(tx: Transaction, profile: Profile) -> bytes:
    """Fixed-width big-endian fields: sn val bank p alpha beta n e x_prev h_prev."""
    if len(tx.h_prev) != 32:
        raise EncodingError(f"h_prev must be 32 bytes, got {len(tx.h_prev)}")
    return b"".join(
        (
            _pack(tx.coin_id.sn, ID_SLOT, "sn"),
            _pack(tx.coin_id.val, ID_SLOT, "val"),
            _pack(tx.coin_id.bank, ID_SLOT, "bank"),
            _pack(tx.dlp_p, profile.dlp_slot, "p"),
            _pack(tx.dlp_alpha, profile.dlp_slot, "alpha"),
            _pack(tx.dlp_beta, profile.dlp_slot, "beta"),
            _pack(tx.key_n, profile.key_slot, "n"),
            _pack(tx.key_e, ID_SLOT, "e"),
            _pack(tx.x_prev, ID_SLOT, "x_prev"),
            tx.h_prev,
        )
    )


def deserialize_tx(data: bytes, profile: Profile) -> Transaction:
    if len(data) != profile.tx_size:
        raise FormatError(f"transaction must be {profile.tx_size} bytes, got {len(data)}")
    fields = []
    pos = 0
    for width in (
        ID_SLOT,
        ID_SLOT,
        ID_SLOT,
        profile.dlp_slot,
        profile.dlp_slot,
        profile.dlp_slot,
        profile.key_slot,
        ID_SLOT,
        ID_SLOT,
    ):
        fields.append(int.from_bytes(data[pos : pos + width], "big"))
        pos += width
    sn, val, bank, p, alpha, beta, n, e, x_prev = fields
    return Transaction(
        coin_id=CoinId(sn=sn, val=val, bank=bank),
        dlp_p=p,
        dlp_alpha=alpha,
        dlp_beta=beta,
        key_n=n,
        key_e=e,
        x_prev=x_prev,
        h_prev=data[pos:],
    )


def tx_hash(tx: Transaction, profile: Profile) -> bytes:
    return hashlib.sha256(serialize_tx(tx, profile)).digest()


def serialize_instance(inst: CoinInstance, profile: Profile) -> bytes:
    return serialize_tx(inst.tx, profile) + _pack(inst.sig, profile.key_slot, "sig")


def deserialize_instance(data: bytes, profile: Profile) -> CoinInstance:
    if len(data) != profile.instance_size:
        raise FormatError(f"instance must be {profile.instance_size} bytes, got {len(data)}")
    tx = deserialize_tx(data[: profile.tx_size], profile)
    sig = int.from_bytes(data[profile.tx_size :], "big")
    return CoinInstance(tx=tx, sig=sig)


def instance_digest(inst: CoinInstance, profile: Profile) -> bytes:
    return hashlib.sha256(serialize_instance(inst, profile)).digest()


def is_genesis(tx: Transaction) -> bool:
    return tx.x_prev == 0 and tx.h_prev == ZERO_HASH


def make_genesis_tx(
    coin_id: CoinId,
    dlp_public: tuple[int, int, int],
    transfer_pk: SigPublicKey,
    denominations: frozenset[int] = DENOMINATIONS,
) -> Transaction:
    """The coin's first transaction; previous-link fields are null."""
    if coin_id.sn == 0:
        raise ValueError("serial number must be nonzero")
    if coin_id.val not in denominations:
        raise ValueError(f"{coin_id.val} is not a configured denomination")
    p, alpha, beta = dlp_public
    return Transaction(
        coin_id=coin_id,
        dlp_p=p,
        dlp_alpha=alpha,
        dlp_beta=beta,
        key_n=transfer_pk.n,
        key_e=transfer_pk.e,
        x_prev=0,
        h_prev=ZERO_HASH,
    )


def make_transfer_tx(
    prev: Transaction,
    revealed_x: int,
    new_dlp: tuple[int, int, int],
    new_pk: SigPublicKey,
    profile: Profile,
) -> Transaction:
    """The next transaction of the chain, built by the payee.

    Refuses to build unless revealed_x actually solves the previous
    transaction's DLP, since a payee should never accept an unproven coin.
    """
    if not numtheory.verify_dlp(prev.dlp_p, prev.dlp_alpha, prev.dlp_beta, revealed_x):
        raise OwnershipError("revealed secret does not solve the previous transaction's DLP")
    p, alpha, beta = new_dlp
    return Transaction(
        coin_id=prev.coin_id,
        dlp_p=p,
        dlp_alpha=alpha,
        dlp_beta=beta,
        key_n=new_pk.n,
        key_e=new_pk.e,
        x_prev=revealed_x,
        h_prev=tx_hash(prev, profile),
    )


def syntactic_violation(
    inst: CoinInstance,
    profile: Profile,
    denominations: frozenset[int] = DENOMINATIONS,
) -> str | None:
    """Context-free well-formedness check; returns a reason or None.

    Deliberately ignores signatures and chain context, which only a node with
    ledger state can judge.
    """
    tx = inst.tx
    if len(tx.h_prev) != 32:
        return "malformed-h_prev"
    for label, value, width in (
        ("sn", tx.coin_id.sn, ID_SLOT),
        ("val", tx.coin_id.val, ID_SLOT),
        ("bank", tx.coin_id.bank, ID_SLOT),
        ("p", tx.dlp_p, profile.dlp_slot),
        ("alpha", tx.dlp_alpha, profile.dlp_slot),
        ("beta", tx.dlp_beta, profile.dlp_slot),
        ("n", tx.key_n, profile.key_slot),
        ("e", tx.key_e, ID_SLOT),
        ("x_prev", tx.x_prev, ID_SLOT),
        ("sig", inst.sig, profile.key_slot),
    ):
        if value < 0 or value.bit_length() > width * 8:
            return f"slot-overflow-{label}"
    if tx.coin_id.sn == 0:
        return "zero-serial"
    if tx.coin_id.val not in denominations:
        return "bad-denomination"
    if tx.dlp_p < 3:
        return "bad-dlp-params"
    if not (1 < tx.dlp_alpha < tx.dlp_p):
        return "bad-dlp-params"
    if not (0 < tx.dlp_beta < tx.dlp_p):
        return "bad-dlp-params"
    if tx.key_n < 3 or tx.key_e < 3 or tx.key_e % 2 == 0:
        return "bad-transfer-key"
    if (tx.x_prev == 0) != (tx.h_prev == ZERO_HASH):
        return "genesis-null-coupling"
    return None


def validate_syntactic(
    inst: CoinInstance,
    profile: Profile,
    denominations: frozenset[int] = DENOMINATIONS,
) -> bool:
    return syntactic_violation(inst, profile, denominations) is None
