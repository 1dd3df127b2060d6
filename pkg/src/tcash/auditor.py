"""Offline re-verification of a ledger file.

The auditor shares nothing with the process that produced the file: it
re-parses the raw bytes, re-checks proof of work, Merkle roots, block
linkage, DLP reveals and every signature, re-derives the best chain, and
prints each coin's chain of custody.  Bank public keys arrive out of band
(they are published, never stored on chain).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .blindsig import SigPublicKey, digest_to_message, verify
from .coinmodel import (
    DENOMINATIONS,
    FormatError,
    is_genesis,
    serialize_instance,
    syntactic_violation,
    tx_hash,
)
from .ledger import (
    Block,
    KeyRegistry,
    genesis_block,
    leading_zero_bits,
    parse_ledger,
)
from .numtheory import verify_dlp
from .profiles import Profile


@dataclass
class AuditResult:
    ok: bool
    lines: list[str]
    violation: Optional[str] = None

    @property
    def report(self) -> str:
        return "\n".join(self.lines) + "\n"


@dataclass
class _Hop:
    height: int
    block_idx: int
    tx_digest: bytes
    genesis: bool
    link_ok: bool
    dlp_ok: bool
    sig_ok: bool

    @property
    def ok(self) -> bool:
        return self.link_ok and self.dlp_ok and self.sig_ok


def _merkle_recursive(leaves: list[bytes]) -> bytes:
    """Independent Merkle computation (top-down halving, duplicate-last)."""
    if len(leaves) == 1:
        return leaves[0]
    if len(leaves) % 2:
        leaves = leaves + [leaves[-1]]
    half = len(leaves) // 2
    pairs = [
        hashlib.sha256(leaves[2 * i] + leaves[2 * i + 1]).digest() for i in range(half)
    ]
    return _merkle_recursive(pairs)


@dataclass
class _WalkState:
    violations: list[str] = field(default_factory=list)
    blocks: list[Block] = field(default_factory=list)
    heights: dict[bytes, int] = field(default_factory=dict)
    parents: dict[bytes, Optional[bytes]] = field(default_factory=dict)
    coin_states: dict[bytes, dict] = field(default_factory=dict)
    best: Optional[bytes] = None


def _walk(
    data: bytes,
    profile: Profile,
    keys: Optional[KeyRegistry],
    denominations: frozenset[int],
    stop_on_first: bool,
) -> _WalkState:
    walk = _WalkState()

    def flag(message: str) -> bool:
        walk.violations.append(message)
        return stop_on_first

    try:
        blocks = parse_ledger(data, profile)
    except FormatError as exc:
        walk.violations.append(f"format: {exc}")
        return walk
    walk.blocks = blocks

    g = genesis_block()
    if blocks[0].header != g.header or blocks[0].instances:
        flag("block-0: not the canonical genesis block")
        return walk
    gh = g.hash
    walk.heights[gh] = 0
    walk.parents[gh] = None
    walk.coin_states[gh] = {}
    walk.best = gh
    difficulty: Optional[int] = None

    for idx, block in enumerate(blocks[1:], start=1):
        h = block.hash
        where = f"block-{idx}"
        if h in walk.heights:
            if flag(f"{where}: duplicate block"):
                return walk
            continue
        prev = block.header.prev_hash
        if prev not in walk.heights:
            if flag(f"{where}: unknown parent {prev[:8].hex()}"):
                return walk
            continue
        if difficulty is None:
            difficulty = block.header.difficulty
        elif block.header.difficulty != difficulty:
            if flag(f"{where}: difficulty {block.header.difficulty} != {difficulty}"):
                return walk
            continue
        if leading_zero_bits(h) < block.header.difficulty:
            if flag(f"{where}: proof of work below difficulty"):
                return walk
            continue
        leaves = [
            hashlib.sha256(serialize_instance(inst, profile)).digest()
            for inst in block.instances
        ]
        expected_root = _merkle_recursive(leaves) if leaves else bytes(32)
        if expected_root != block.header.merkle_root:
            if flag(f"{where}: merkle root mismatch"):
                return walk
            continue
        state = dict(walk.coin_states[prev])
        height = walk.heights[prev] + 1
        bad = False
        for i, inst in enumerate(block.instances):
            reason = _validate_instance(inst, state, profile, keys, denominations)
            if reason is not None:
                bad = True
                if flag(f"{where}: instance-{i}: {reason}"):
                    return walk
                break
            state[inst.tx.coin_id] = (inst.tx, tx_hash(inst.tx, profile), height)
        if bad:
            continue
        walk.heights[h] = height
        walk.parents[h] = prev
        walk.coin_states[h] = state
        best_height = walk.heights[walk.best]
        if height > best_height or (height == best_height and h < walk.best):
            walk.best = h
    return walk


def _validate_instance(inst, state, profile, keys, denominations) -> Optional[str]:
    reason = syntactic_violation(inst, profile, denominations)
    if reason is not None:
        return reason
    tx = inst.tx
    digest = tx_hash(tx, profile)
    if is_genesis(tx):
        if tx.coin_id in state:
            return "duplicate-genesis"
        if keys is None:
            return "missing-bank-key"
        pk = keys.get(tx.coin_id.bank, tx.coin_id.val)
        if pk is None:
            return "missing-bank-key"
        if inst.sig >= pk.n or not verify(inst.sig, digest_to_message(digest, pk.n), pk):
            return "bad-signature"
    else:
        record = state.get(tx.coin_id)
        if record is None:
            return "unknown-coin"
        prev_tx, prev_hash, _ = record
        if tx.h_prev != prev_hash:
            return "stale-parent"
        if not verify_dlp(prev_tx.dlp_p, prev_tx.dlp_alpha, prev_tx.dlp_beta, tx.x_prev):
            return "bad-dlp"
        pk = SigPublicKey(e=prev_tx.key_e, n=prev_tx.key_n)
        if inst.sig >= pk.n or not verify(inst.sig, digest_to_message(digest, pk.n), pk):
            return "bad-signature"
    return None


def _best_chain(walk: _WalkState) -> list[bytes]:
    hashes = []
    cursor = walk.best
    while cursor is not None:
        hashes.append(cursor)
        cursor = walk.parents[cursor]
    hashes.reverse()
    return hashes


def _custody_lines(walk: _WalkState, profile: Profile) -> list[str]:
    """Per-coin chains of custody along the best chain, in first-seen order."""
    by_hash = {b.hash: (i, b) for i, b in enumerate(walk.blocks)}
    chains: dict = {}
    order: list = []
    for h in _best_chain(walk):
        idx, block = by_hash[h]
        height = walk.heights[h]
        for inst in block.instances:
            cid = inst.tx.coin_id
            if cid not in chains:
                chains[cid] = []
                order.append(cid)
            chains[cid].append((height, idx, inst))
    lines = []
    for cid in order:
        lines.append(f"coin sn={cid.sn:064x} val={cid.val} bank={cid.bank:064x}")
        for hop_no, (height, idx, inst) in enumerate(chains[cid]):
            digest = tx_hash(inst.tx, profile)
            kind = "genesis" if is_genesis(inst.tx) else "transfer"
            lines.append(
                f"  hop {hop_no}: height={height} block={idx} {kind}"
                f" tx={digest[:8].hex()} verified=ok"
            )
    if not order:
        lines.append("no coins on the best chain")
    return lines


def audit(
    data: bytes,
    profile: Profile,
    keys: Optional[KeyRegistry],
    denominations: frozenset[int] = DENOMINATIONS,
) -> AuditResult:
    """Full re-validation; stops at, and names, the first violation."""
    walk = _walk(data, profile, keys, denominations, stop_on_first=True)
    if walk.violations:
        violation = walk.violations[0]
        return AuditResult(ok=False, lines=[f"VIOLATION {violation}"], violation=violation)
    lines = [
        f"ledger: {len(walk.blocks)} blocks, best height {walk.heights[walk.best]},"
        f" tip {walk.best[:8].hex()}"
    ]
    lines.extend(_custody_lines(walk, profile))
    lines.append("audit: OK")
    return AuditResult(ok=True, lines=lines)


@dataclass
class InspectResult:
    found: bool
    ok: bool
    lines: list[str]

    @property
    def report(self) -> str:
        return "\n".join(self.lines) + "\n"


def inspect(
    data: bytes,
    profile: Profile,
    coin_id,
    keys: Optional[KeyRegistry],
    denominations: frozenset[int] = DENOMINATIONS,
) -> InspectResult:
    """Print one coin's transaction chain with per-hop verification marks.

    Tolerates an otherwise-damaged ledger: hops are re-verified individually
    so the marks stay meaningful even when the audit as a whole fails.
    """
    walk = _walk(data, profile, keys, denominations, stop_on_first=False)
    if walk.best is None:
        return InspectResult(found=False, ok=False, lines=["VIOLATION " + walk.violations[0]])
    by_hash = {b.hash: (i, b) for i, b in enumerate(walk.blocks)}
    hops: list[_Hop] = []
    prev_tx = None
    prev_digest = None
    for h in _best_chain(walk):
        idx, block = by_hash[h]
        for inst in block.instances:
            if inst.tx.coin_id != coin_id:
                continue
            tx = inst.tx
            digest = tx_hash(tx, profile)
            genesis = is_genesis(tx)
            if genesis:
                link_ok = prev_tx is None
                dlp_ok = True
                pk = keys.get(coin_id.bank, coin_id.val) if keys else None
            else:
                link_ok = prev_digest is not None and tx.h_prev == prev_digest
                dlp_ok = prev_tx is not None and verify_dlp(
                    prev_tx.dlp_p, prev_tx.dlp_alpha, prev_tx.dlp_beta, tx.x_prev
                )
                pk = SigPublicKey(e=prev_tx.key_e, n=prev_tx.key_n) if prev_tx else None
            sig_ok = bool(
                pk is not None
                and inst.sig < pk.n
                and verify(inst.sig, digest_to_message(digest, pk.n), pk)
            )
            hops.append(
                _Hop(
                    height=walk.heights[h],
                    block_idx=idx,
                    tx_digest=digest,
                    genesis=genesis,
                    link_ok=link_ok,
                    dlp_ok=dlp_ok,
                    sig_ok=sig_ok,
                )
            )
            prev_tx, prev_digest = tx, digest
    if not hops:
        return InspectResult(
            found=False,
            ok=False,
            lines=[f"coin sn={coin_id.sn:064x} val={coin_id.val} bank={coin_id.bank:064x} not found"],
        )
    lines = [f"coin sn={coin_id.sn:064x} val={coin_id.val} bank={coin_id.bank:064x}"]
    all_ok = True
    mark = lambda ok: "ok" if ok else "BAD"
    for hop_no, hop in enumerate(hops):
        kind = "genesis" if hop.genesis else "transfer"
        lines.append(
            f"hop {hop_no}: height={hop.height} block={hop.block_idx} {kind}"
            f" tx={hop.tx_digest[:8].hex()}"
            f" link={mark(hop.link_ok)} dlp={mark(hop.dlp_ok)} sig={mark(hop.sig_ok)}"
        )
        all_ok = all_ok and hop.ok
    lines.append(f"hops: {len(hops)} verified: {'ok' if all_ok else 'BAD'}")
    return InspectResult(found=True, ok=all_ok, lines=lines)
