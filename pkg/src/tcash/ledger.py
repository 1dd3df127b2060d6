"""Proof-of-work block chain with per-coin contextual validation.

Blocks batch coin instances under a Merkle root; the chain keeps every valid
block it has seen (forks included) and selects the best tip by height with a
lower-hash tie break, so all nodes converge without extra messages.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterator, Optional

from . import numtheory
from .blindsig import SigPublicKey, digest_to_message, verify
from .coinmodel import (
    DENOMINATIONS,
    CoinInstance,
    FormatError,
    Transaction,
    instance_digest,
    is_genesis,
    serialize_instance,
    deserialize_instance,
    syntactic_violation,
    tx_hash,
)
from .profiles import Profile

HEADER_LEN = 84  # prev(32) + merkle(32) + timestamp(8) + nonce(8) + difficulty(4)


@dataclass(frozen=True)
class BlockHeader:
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    nonce: int
    difficulty: int

    def serialize(self) -> bytes:
        return (
            self.prev_hash
            + self.merkle_root
            + struct.pack(">QQI", self.timestamp, self.nonce, self.difficulty)
        )

    def block_hash(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()


def parse_header(data: bytes) -> BlockHeader:
    if len(data) != HEADER_LEN:
        raise FormatError(f"header must be {HEADER_LEN} bytes, got {len(data)}")
    timestamp, nonce, difficulty = struct.unpack(">QQI", data[64:])
    return BlockHeader(
        prev_hash=data[:32],
        merkle_root=data[32:64],
        timestamp=timestamp,
        nonce=nonce,
        difficulty=difficulty,
    )


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    instances: tuple[CoinInstance, ...]

    @property
    def hash(self) -> bytes:
        return self.header.block_hash()


def serialize_block(block: Block, profile: Profile) -> bytes:
    parts = [block.header.serialize(), struct.pack(">I", len(block.instances))]
    parts.extend(serialize_instance(inst, profile) for inst in block.instances)
    return b"".join(parts)


def parse_block(data: bytes, offset: int, profile: Profile) -> tuple[Block, int]:
    end = offset + HEADER_LEN + 4
    if end > len(data):
        raise FormatError(f"truncated block header at offset {offset}")
    header = parse_header(data[offset : offset + HEADER_LEN])
    (count,) = struct.unpack(">I", data[offset + HEADER_LEN : end])
    instances = []
    for _ in range(count):
        nxt = end + profile.instance_size
        if nxt > len(data):
            raise FormatError(f"truncated instance at offset {end}")
        instances.append(deserialize_instance(data[end:nxt], profile))
        end = nxt
    return Block(header=header, instances=tuple(instances)), end


def serialize_ledger(blocks: list[Block], profile: Profile) -> bytes:
    return b"".join(serialize_block(b, profile) for b in blocks)


def parse_ledger(data: bytes, profile: Profile) -> list[Block]:
    if not data:
        raise FormatError("empty ledger file")
    blocks = []
    offset = 0
    while offset < len(data):
        block, offset = parse_block(data, offset, profile)
        blocks.append(block)
    return blocks


def leading_zero_bits(digest: bytes) -> int:
    return len(digest) * 8 - int.from_bytes(digest, "big").bit_length()


def merkle_root(instances: list[CoinInstance] | tuple[CoinInstance, ...], profile: Profile) -> bytes:
    """Binary Merkle root over instance digests; odd levels duplicate the last."""
    if not instances:
        raise ValueError("cannot build a Merkle tree over zero instances")
    level = [instance_digest(inst, profile) for inst in instances]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            hashlib.sha256(level[i] + level[i + 1]).digest() for i in range(0, len(level), 2)
        ]
    return level[0]


def genesis_block() -> Block:
    """The fixed chain root: all-zero links, no instances, difficulty 0."""
    return Block(
        header=BlockHeader(
            prev_hash=bytes(32),
            merkle_root=bytes(32),
            timestamp=0,
            nonce=0,
            difficulty=0,
        ),
        instances=(),
    )


def pow_seal(
    prev_hash: bytes,
    instances: list[CoinInstance] | tuple[CoinInstance, ...],
    timestamp: int,
    difficulty: int,
    profile: Profile,
    start_nonce: int = 0,
) -> Block:
    """Sequential nonce search from start_nonce until the header hash meets
    the difficulty.  Deterministic; unbounded if the difficulty is absurd.

    Empty blocks (used only to bury earlier transactions) carry an all-zero
    Merkle root.
    """
    root = merkle_root(instances, profile) if instances else bytes(32)
    nonce = start_nonce
    while True:
        header = BlockHeader(
            prev_hash=prev_hash,
            merkle_root=root,
            timestamp=timestamp,
            nonce=nonce,
            difficulty=difficulty,
        )
        if leading_zero_bits(header.block_hash()) >= difficulty:
            return Block(header=header, instances=tuple(instances))
        nonce += 1


class KeyRegistry:
    """Published bank signing keys: (bank id, denomination) -> public key."""

    def __init__(self):
        self._keys: dict[tuple[int, int], SigPublicKey] = {}

    def register(self, bank: int, val: int, pk: SigPublicKey) -> None:
        self._keys[(bank, val)] = pk

    def get(self, bank: int, val: int) -> Optional[SigPublicKey]:
        return self._keys.get((bank, val))

    def to_mapping(self) -> dict:
        banks: dict[str, dict[str, dict[str, str]]] = {}
        for (bank, val), pk in sorted(self._keys.items()):
            banks.setdefault(format(bank, "064x"), {})[str(val)] = {
                "e": hex(pk.e),
                "n": hex(pk.n),
            }
        return {"banks": banks}

    @classmethod
    def from_mapping(cls, mapping: dict) -> "KeyRegistry":
        registry = cls()
        for bank_hex, denoms in mapping.get("banks", {}).items():
            for val, key in denoms.items():
                registry.register(
                    int(bank_hex, 16),
                    int(val),
                    SigPublicKey(e=int(key["e"], 16), n=int(key["n"], 16)),
                )
        return registry


@dataclass(frozen=True)
class CoinRecord:
    """Latest transaction of a coin on some branch, plus where it landed."""

    tx: Transaction
    tx_hash: bytes
    height: int


class Chain:
    """Block tree with per-block coin index snapshots.

    One writer at a time; readers see consistent snapshots because blocks and
    states are immutable once stored.
    """

    def __init__(
        self,
        profile: Profile,
        difficulty: int,
        registry: KeyRegistry,
        denominations: frozenset[int] = DENOMINATIONS,
    ):
        self.profile = profile
        self.difficulty = difficulty
        self.registry = registry
        self.denominations = denominations
        g = genesis_block()
        gh = g.hash
        self.genesis_hash = gh
        self._blocks: dict[bytes, Block] = {gh: g}
        self._heights: dict[bytes, int] = {gh: 0}
        self._parents: dict[bytes, Optional[bytes]] = {gh: None}
        self._states: dict[bytes, dict] = {gh: {}}
        self._order: list[bytes] = [gh]
        self._best = gh

    # -- queries ---------------------------------------------------------

    @property
    def best_tip(self) -> bytes:
        return self._best

    @property
    def best_height(self) -> int:
        return self._heights[self._best]

    def has_block(self, block_hash: bytes) -> bool:
        return block_hash in self._blocks

    def block(self, block_hash: bytes) -> Block:
        return self._blocks[block_hash]

    def height_of(self, block_hash: bytes) -> int:
        return self._heights[block_hash]

    def parent_of(self, block_hash: bytes) -> Optional[bytes]:
        return self._parents[block_hash]

    def tip_state(self) -> dict:
        """The coin index at the best tip.  Treat as read-only."""
        return self._states[self._best]

    def state_at(self, block_hash: bytes) -> dict:
        return self._states[block_hash]

    def best_chain_hashes(self) -> list[bytes]:
        hashes = []
        cursor: Optional[bytes] = self._best
        while cursor is not None:
            hashes.append(cursor)
            cursor = self._parents[cursor]
        hashes.reverse()
        return hashes

    def blocks_in_order(self) -> Iterator[Block]:
        for h in self._order:
            yield self._blocks[h]

    def serialize(self) -> bytes:
        return serialize_ledger(list(self.blocks_in_order()), self.profile)

    def lookup_latest(self, coin_id) -> Optional[CoinRecord]:
        return self._states[self._best].get(coin_id)

    def confirmations(self, record: CoinRecord) -> int:
        return self.best_height - record.height + 1

    def instances_of(self, coin_id) -> list[tuple[int, CoinInstance]]:
        """Every instance of the coin along the best chain, oldest first."""
        found = []
        for h in self.best_chain_hashes():
            for inst in self._blocks[h].instances:
                if inst.tx.coin_id == coin_id:
                    found.append((self._heights[h], inst))
        return found

    # -- validation ------------------------------------------------------

    def validate_coin_instance(self, inst: CoinInstance, state: dict) -> Optional[str]:
        """Full contextual check against a coin-index snapshot.

        Genesis: bank signature under the published denomination key, and the
        coin must be new.  Transfer: previous-hash linkage, DLP reveal, and a
        delegated signature under the previous owner's transfer key.
        """
        reason = syntactic_violation(inst, self.profile, self.denominations)
        if reason is not None:
            return reason
        tx = inst.tx
        coin_id = tx.coin_id
        digest = tx_hash(tx, self.profile)
        if is_genesis(tx):
            if coin_id in state:
                return "duplicate-genesis"
            pk = self.registry.get(coin_id.bank, coin_id.val)
            if pk is None:
                return "unknown-bank"
            if inst.sig >= pk.n:
                return "bad-signature"
            if not verify(inst.sig, digest_to_message(digest, pk.n), pk):
                return "bad-signature"
        else:
            record = state.get(coin_id)
            if record is None:
                return "unknown-coin"
            if tx.h_prev != record.tx_hash:
                return "stale-parent"
            prev = record.tx
            if not numtheory.verify_dlp(prev.dlp_p, prev.dlp_alpha, prev.dlp_beta, tx.x_prev):
                return "bad-dlp"
            payer_pk = SigPublicKey(e=prev.key_e, n=prev.key_n)
            if inst.sig >= payer_pk.n:
                return "bad-signature"
            if not verify(inst.sig, digest_to_message(digest, payer_pk.n), payer_pk):
                return "bad-signature"
        return None

    def apply_instance(self, state: dict, inst: CoinInstance, height: int) -> None:
        state[inst.tx.coin_id] = CoinRecord(
            tx=inst.tx,
            tx_hash=tx_hash(inst.tx, self.profile),
            height=height,
        )

    def append_block(self, block: Block) -> Optional[str]:
        """Validate and store a block; returns a reject reason or None.

        Accepting a known block is a no-op.  Instances are validated in
        order, each seeing the state left by its predecessors, so one block
        can carry several hops of the same coin.
        """
        h = block.hash
        if h in self._blocks:
            return None
        parent_hash = block.header.prev_hash
        if parent_hash not in self._blocks:
            return "unknown-parent"
        if block.header.difficulty != self.difficulty:
            return "bad-difficulty"
        if leading_zero_bits(h) < self.difficulty:
            return "bad-pow"
        expected_root = (
            merkle_root(block.instances, self.profile) if block.instances else bytes(32)
        )
        if block.header.merkle_root != expected_root:
            return "bad-merkle"
        state = dict(self._states[parent_hash])
        height = self._heights[parent_hash] + 1
        for i, inst in enumerate(block.instances):
            reason = self.validate_coin_instance(inst, state)
            if reason is not None:
                return f"instance-{i}-{reason}"
            self.apply_instance(state, inst, height)
        self._blocks[h] = block
        self._heights[h] = height
        self._parents[h] = parent_hash
        self._states[h] = state
        self._order.append(h)
        if height > self.best_height or (height == self.best_height and h < self._best):
            self._best = h
        return None
