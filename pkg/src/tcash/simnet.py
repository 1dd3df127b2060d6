"""Deterministic multi-node network simulation.

Everything runs on one logical-tick event loop: broadcasts become delivery
events, mining is a per-tick nonce budget, and all randomness flows from the
run seed, so a (config, scenario) pair always reproduces the same bytes.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from typing import Callable, Optional

from .coinmodel import (
    CoinInstance,
    deserialize_instance,
    is_genesis,
    serialize_instance,
    tx_hash,
)
from .ledger import (
    Block,
    BlockHeader,
    Chain,
    KeyRegistry,
    leading_zero_bits,
    merkle_root,
    parse_block,
    serialize_block,
)
from .numtheory import as_rng
from .profiles import Profile

# reject reasons that may become valid once more blocks arrive
_TRANSIENT = ("unknown-coin", "stale-parent")


@dataclass
class SimConfig:
    profile: Profile
    num_nodes: int = 3
    miners: tuple[int, ...] = (0,)
    difficulty: int = 12
    confirm_depth: int = 1
    seed: int = 0
    delay: tuple = ("fixed", 1)       # or ("uniform", lo, hi)
    mine_budget: int = 500            # nonce attempts per miner per tick
    settle_timeout: int = 400         # ticks a wallet waits before flagging

    def __post_init__(self):
        if not self.miners:
            raise ValueError("at least one miner is required")
        if any(m < 0 or m >= self.num_nodes for m in self.miners):
            raise ValueError("miner ids must name existing nodes")


@dataclass(frozen=True)
class Event:
    tick: int
    seq: int
    kind: str        # "inst" | "block"
    node_id: int
    payload: bytes

    def sort_key(self):
        return (self.tick, self.seq)


@dataclass
class _PoolItem:
    inst: CoinInstance
    raw: bytes
    digest: bytes
    tx_hash: bytes


@dataclass
class _Draft:
    parent: bytes
    pool_digests: tuple[bytes, ...]
    timestamp: int
    instances: list[CoinInstance]
    root: bytes
    nonce: int = 0


def _conflict_key(inst: CoinInstance, txh: bytes):
    if is_genesis(inst.tx):
        return ("genesis", inst.tx.coin_id)
    return ("spend", inst.tx.coin_id, inst.tx.h_prev)


class Node:
    """One participant: a chain replica, a mempool, and optionally a miner."""

    def __init__(self, node_id: int, chain: Chain, net: "Network"):
        self.node_id = node_id
        self.chain = chain
        self.net = net
        self.mempool: dict = {}
        self.reject_log: list[str] = []
        self._seen: set[bytes] = set()
        self._parked: list[_PoolItem] = []
        self._orphans: dict[bytes, list[bytes]] = {}
        self._draft: Optional[_Draft] = None

    def _log(self, tick: int, message: str) -> None:
        self.reject_log.append(f"tick={tick:05d} {message}")

    # -- instance handling -------------------------------------------------

    def deliver_instance(self, raw: bytes, tick: int) -> None:
        digest = hashlib.sha256(raw).digest()
        if digest in self._seen:
            return
        self._seen.add(digest)
        inst = deserialize_instance(raw, self.net.config.profile)
        item = _PoolItem(
            inst=inst,
            raw=raw,
            digest=digest,
            tx_hash=tx_hash(inst.tx, self.net.config.profile),
        )
        self._admit(item, tick, quiet=False)

    def _admit(self, item: _PoolItem, tick: int, quiet: bool) -> bool:
        reason = self.chain.validate_coin_instance(item.inst, self.chain.tip_state())
        if reason is not None:
            if reason in _TRANSIENT:
                self._parked.append(item)
            if not quiet:
                self._log(tick, f"inst={item.digest[:4].hex()} reject {reason}")
            return False
        key = _conflict_key(item.inst, item.tx_hash)
        if key in self.mempool:
            if not quiet:
                self._log(tick, f"inst={item.digest[:4].hex()} reject conflict-first-seen")
            return False
        self.mempool[key] = item
        return True

    def _retry_parked(self, tick: int) -> None:
        pending = self._parked
        self._parked = []
        for item in pending:
            self._admit(item, tick, quiet=True)

    # -- block handling ------------------------------------------------------

    def deliver_block(self, raw: bytes, tick: int) -> None:
        block, _ = parse_block(raw, 0, self.net.config.profile)
        self._receive_block(block, raw, tick)

    def _receive_block(self, block: Block, raw: bytes, tick: int) -> None:
        h = block.hash
        if self.chain.has_block(h):
            return
        prev = block.header.prev_hash
        if not self.chain.has_block(prev):
            self._orphans.setdefault(prev, []).append(raw)
            return
        old_tip = self.chain.best_tip
        reason = self.chain.append_block(block)
        if reason is not None:
            self._log(tick, f"block={h[:4].hex()} reject {reason}")
            return
        if self.chain.best_tip != old_tip:
            self._readmit_orphaned(old_tip, tick)
        self._refresh_mempool(tick)
        self._retry_parked(tick)
        for raw_child in self._orphans.pop(h, []):
            child, _ = parse_block(raw_child, 0, self.net.config.profile)
            self._receive_block(child, raw_child, tick)

    def _readmit_orphaned(self, old_tip: bytes, tick: int) -> None:
        """Instances from blocks no longer on the best branch go back through
        admission so a reorg cannot silently drop them."""
        on_best = set(self.chain.best_chain_hashes())
        cursor: Optional[bytes] = old_tip
        while cursor is not None and cursor not in on_best:
            for inst in self.chain.block(cursor).instances:
                raw = serialize_instance(inst, self.net.config.profile)
                item = _PoolItem(
                    inst=inst,
                    raw=raw,
                    digest=hashlib.sha256(raw).digest(),
                    tx_hash=tx_hash(inst.tx, self.net.config.profile),
                )
                self._admit(item, tick, quiet=True)
            cursor = self.chain.parent_of(cursor)

    def _refresh_mempool(self, tick: int) -> None:
        state = self.chain.tip_state()
        for key, item in list(self.mempool.items()):
            record = state.get(item.inst.tx.coin_id)
            if record is not None and record.tx_hash == item.tx_hash:
                del self.mempool[key]  # landed on the best chain
                continue
            reason = self.chain.validate_coin_instance(item.inst, state)
            if reason is not None:
                del self.mempool[key]
                if reason in _TRANSIENT:
                    self._parked.append(item)
                self._log(tick, f"inst={item.digest[:4].hex()} evict {reason}")

    # -- mining ---------------------------------------------------------------

    def _select_draft_instances(self) -> list[_PoolItem]:
        state = dict(self.chain.tip_state())
        height = self.chain.best_height + 1
        chosen = []
        for item in self.mempool.values():
            if self.chain.validate_coin_instance(item.inst, state) is None:
                chosen.append(item)
                self.chain.apply_instance(state, item.inst, height)
        return chosen

    def burial_pending(self) -> bool:
        """True while an instance-bearing block sits above the confirmation
        horizon: empty blocks are then still worth mining."""
        depth = self.net.config.confirm_depth
        cursor: Optional[bytes] = self.chain.best_tip
        for _ in range(depth - 1):
            if cursor is None or cursor == self.chain.genesis_hash:
                return False
            if self.chain.block(cursor).instances:
                return True
            cursor = self.chain.parent_of(cursor)
        return False

    def mine_step(self, tick: int, budget: int) -> None:
        items = self._select_draft_instances()
        if not items and not self.burial_pending():
            self._draft = None
            return
        tip = self.chain.best_tip
        digests = tuple(item.digest for item in items)
        if self._draft is None or self._draft.parent != tip or self._draft.pool_digests != digests:
            instances = [item.inst for item in items]
            self._draft = _Draft(
                parent=tip,
                pool_digests=digests,
                timestamp=tick,
                instances=instances,
                root=merkle_root(instances, self.net.config.profile) if instances else bytes(32),
            )
        draft = self._draft
        difficulty = self.net.config.difficulty
        for _ in range(budget):
            header = BlockHeader(
                prev_hash=draft.parent,
                merkle_root=draft.root,
                timestamp=draft.timestamp,
                nonce=draft.nonce,
                difficulty=difficulty,
            )
            if leading_zero_bits(header.block_hash()) >= difficulty:
                block = Block(header=header, instances=tuple(draft.instances))
                raw = serialize_block(block, self.net.config.profile)
                self._draft = None
                self._receive_block(block, raw, tick)
                self.net.broadcast_block(raw, origin=self.node_id)
                return
            draft.nonce += 1


class Network:
    """The event loop tying nodes together."""

    def __init__(self, config: SimConfig, registry: KeyRegistry):
        self.config = config
        self.registry = registry
        self.rng = as_rng(config.seed)
        self.tick = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.nodes = [
            Node(i, Chain(config.profile, config.difficulty, registry), self)
            for i in range(config.num_nodes)
        ]

    def now(self) -> int:
        return self.tick

    def _delay(self) -> int:
        model = self.config.delay
        if model[0] == "fixed":
            return max(1, model[1])
        if model[0] == "uniform":
            return self.rng.randint(max(1, model[1]), max(1, model[2]))
        raise ValueError(f"unknown delay model {model!r}")

    def schedule(self, delay: int, kind: str, node_id: int, payload: bytes) -> None:
        event = Event(tick=self.tick + delay, seq=self._seq, kind=kind, node_id=node_id, payload=payload)
        self._seq += 1
        heapq.heappush(self._heap, (event.tick, event.seq, event))

    def broadcast_instance(self, raw: bytes) -> None:
        for node in self.nodes:
            self.schedule(self._delay(), "inst", node.node_id, raw)

    def broadcast_block(self, raw: bytes, origin: int) -> None:
        for node in self.nodes:
            if node.node_id != origin:
                self.schedule(self._delay(), "block", node.node_id, raw)

    def step(self, ticks: int = 1) -> None:
        for _ in range(ticks):
            while self._heap and self._heap[0][0] <= self.tick:
                _, _, event = heapq.heappop(self._heap)
                node = self.nodes[event.node_id]
                if event.kind == "inst":
                    node.deliver_instance(event.payload, self.tick)
                else:
                    node.deliver_block(event.payload, self.tick)
            for miner_id in self.config.miners:
                self.nodes[miner_id].mine_step(self.tick, self.config.mine_budget)
            self.tick += 1

    def run_until(self, predicate: Callable[[], bool], max_ticks: int) -> bool:
        for _ in range(max_ticks):
            if predicate():
                return True
            self.step()
        return predicate()

    def quiescent(self) -> bool:
        return (
            not self._heap
            and all(not n.mempool for n in self.nodes)
            and all(not self.nodes[m].burial_pending() for m in self.config.miners)
        )

    def run_to_quiescence(self, max_ticks: int = 10_000) -> bool:
        return self.run_until(self.quiescent, max_ticks)

    def converged(self) -> bool:
        tips = {n.chain.best_tip for n in self.nodes}
        return len(tips) == 1
