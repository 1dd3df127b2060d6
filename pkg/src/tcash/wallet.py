"""User-side protocol engine: minting, two-phase transfers, coin secrets.

A wallet owns (sn, x, sk) per coin.  Transfers are two exchanges: the payer
reveals x to prove ownership, the payee builds the next transaction and sends
back its blinded digest, and the payer returns a delegated signature.  The
payee only treats the coin as received once the new instance is buried in the
chain at the configured confirmation depth.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from . import blindsig, numtheory
from .blindsig import BlindingFactor, SigPrivateKey, SigPublicKey
from .coinmodel import (
    CoinId,
    CoinInstance,
    FormatError,
    Transaction,
    make_genesis_tx,
    make_transfer_tx,
    serialize_instance,
    tx_hash,
)
from .profiles import ID_SLOT, Profile

PENDING = "pending"
CONFIRMED = "confirmed"
SPENDING = "spending"
SPENT = "spent"

_STATUS_BYTES = {PENDING: 0, CONFIRMED: 1, SPENDING: 2, SPENT: 3}
_STATUS_NAMES = {v: k for k, v in _STATUS_BYTES.items()}


class WalletStateError(RuntimeError):
    """An operation was attempted in the wrong entry state."""


class ProtocolError(RuntimeError):
    """The counterparty misbehaved (bad signature, unknown coin, ...)."""


@dataclass
class WalletEntry:
    coin_id: CoinId
    x: int
    sk: SigPrivateKey
    last_tx_hash: bytes
    status: str = PENDING
    flag: Optional[str] = None
    pk: Optional[SigPublicKey] = None
    group: Optional[numtheory.DlpGroup] = None
    beta: Optional[int] = None

    def secret_core(self, profile: Profile) -> bytes:
        """sn | x | d packed to the profile's fixed widths."""
        return (
            self.coin_id.sn.to_bytes(ID_SLOT, "big")
            + self.x.to_bytes(profile.dlp_slot, "big")
            + self.sk.d.to_bytes(profile.key_slot, "big")
        )


@dataclass(frozen=True)
class PaymentOffer:
    """What the payer reveals to start a transfer."""

    coin_id: CoinId
    x: int


@dataclass
class PendingReceipt:
    """Payee-side state between building the next transaction and settlement."""

    entry: WalletEntry
    tx: Transaction
    digest: bytes
    factor: BlindingFactor
    payer_pk: SigPublicKey
    m_blinded: int
    submitted: bool = False


class Wallet:
    def __init__(self, name: str, profile: Profile, net, seed, home_node: int = 0):
        self.name = name
        self.profile = profile
        self.net = net
        self.home_node = home_node
        self.rng = numtheory.as_rng(seed)
        self.entries: dict[CoinId, WalletEntry] = {}

    def _view(self):
        return self.net.nodes[self.home_node].chain

    def _fresh_secrets(self):
        group = numtheory.gen_dlp_group(
            self.profile.p_bits, self.profile.q_bits, self.rng, self.profile.mr_rounds
        )
        dlp = numtheory.gen_dlp_instance(group, self.rng)
        pk, sk = blindsig.keygen(self.profile.modulus_bits, self.rng, self.profile.mr_rounds)
        return dlp, pk, sk

    # -- minting -----------------------------------------------------------

    def request_mint(self, bank, account_id: str, val: int) -> WalletEntry:
        """Full mint exchange; broadcasts the new instance and stores it pending.

        The bank only ever sees the blinded digest, never the transaction.
        """
        sn = 0
        while sn == 0:
            sn = self.rng.getrandbits(256)
        published = bank.publish_keys()
        if val not in published:
            raise ProtocolError(f"bank publishes no key for denomination {val}")
        dlp, pk, sk = self._fresh_secrets()
        coin_id = CoinId(sn=sn, val=val, bank=bank.bank_id)
        tx = make_genesis_tx(coin_id, (dlp.group.p, dlp.group.alpha, dlp.beta), pk)
        digest = tx_hash(tx, self.profile)
        pk_val = published[val]
        m = blindsig.digest_to_message(digest, pk_val.n)
        factor = blindsig.random_blinding_factor(pk_val.n, self.rng)
        s_blinded = bank.mint(account_id, val, blindsig.blind(m, factor, pk_val))
        s = blindsig.unblind(s_blinded, factor, pk_val.n)
        if not blindsig.verify(s, m, pk_val):
            raise ProtocolError("bank returned a signature that does not verify")
        self.net.broadcast_instance(serialize_instance(CoinInstance(tx=tx, sig=s), self.profile))
        entry = WalletEntry(
            coin_id=coin_id,
            x=dlp.x,
            sk=sk,
            last_tx_hash=digest,
            status=PENDING,
            pk=pk,
            group=dlp.group,
            beta=dlp.beta,
        )
        self.entries[coin_id] = entry
        return entry

    def await_confirmation(self, entry: WalletEntry, timeout_ticks: int = 400) -> bool:
        """Advance the network until the entry's transaction is buried deep
        enough at the home node, or flag it on timeout.

        Judged only on settled network states: while blocks are still in
        flight a tip is provisional and equal-height ties can flip it.
        """
        depth = self.net.config.confirm_depth
        outcome = {"value": None}

        def resolved() -> bool:
            if not self.net.quiescent():
                return False
            record = self._view().lookup_latest(entry.coin_id)
            ours = record is not None and record.tx_hash == entry.last_tx_hash
            outcome["value"] = ours and self._view().confirmations(record) >= depth
            return True

        self.net.run_until(resolved, timeout_ticks)
        if outcome["value"]:
            entry.status = CONFIRMED
            entry.flag = None
            return True
        entry.flag = "timeout"
        return False

    # -- paying ------------------------------------------------------------

    def initiate_payment(self, entry: WalletEntry) -> PaymentOffer:
        """Reveal (coin_id, x).  Each x leaves the wallet exactly once."""
        if entry.status != CONFIRMED:
            raise WalletStateError(f"cannot spend a {entry.status} coin")
        entry.status = SPENDING
        return PaymentOffer(coin_id=entry.coin_id, x=entry.x)

    def receive_payment(self, offer: PaymentOffer) -> tuple[int, PendingReceipt]:
        """Payee side: verify the offer, build the next transaction, and hand
        back its blinded digest for the payer to sign."""
        record = self._view().lookup_latest(offer.coin_id)
        if record is None:
            raise ProtocolError("offered coin is not on the chain")
        prev = record.tx
        if not numtheory.verify_dlp(prev.dlp_p, prev.dlp_alpha, prev.dlp_beta, offer.x):
            raise ProtocolError("offer does not prove ownership of the coin")
        dlp, pk, sk = self._fresh_secrets()
        tx = make_transfer_tx(
            prev, offer.x, (dlp.group.p, dlp.group.alpha, dlp.beta), pk, self.profile
        )
        digest = tx_hash(tx, self.profile)
        payer_pk = SigPublicKey(e=prev.key_e, n=prev.key_n)
        m = blindsig.digest_to_message(digest, payer_pk.n)
        factor = blindsig.random_blinding_factor(payer_pk.n, self.rng)
        m_blinded = blindsig.blind(m, factor, payer_pk)
        entry = WalletEntry(
            coin_id=offer.coin_id,
            x=dlp.x,
            sk=sk,
            last_tx_hash=digest,
            status=PENDING,
            pk=pk,
            group=dlp.group,
            beta=dlp.beta,
        )
        receipt = PendingReceipt(
            entry=entry,
            tx=tx,
            digest=digest,
            factor=factor,
            payer_pk=payer_pk,
            m_blinded=m_blinded,
        )
        return m_blinded, receipt

    def sign_transfer(self, entry: WalletEntry, m_blinded: int) -> int:
        """Delegated signature over the payee's blinded digest.

        One signature per coin lifetime; a second attempt is refused here and
        the network would reject it anyway.
        """
        if entry.status == SPENT:
            raise WalletStateError("coin already signed away once")
        if entry.status != SPENDING:
            raise WalletStateError(f"no payment in progress for this {entry.status} coin")
        s_blinded = blindsig.sign(m_blinded, entry.sk)
        entry.status = SPENT
        return s_blinded

    # -- receiving ----------------------------------------------------------

    def submit_receipt(self, receipt: PendingReceipt, s_blinded: int) -> None:
        """Unblind, verify against the payer's on-chain key, then broadcast.

        Nothing is broadcast if the signature fails; the coin is simply not
        accepted.
        """
        s = blindsig.unblind(s_blinded, receipt.factor, receipt.payer_pk.n)
        m = blindsig.digest_to_message(receipt.digest, receipt.payer_pk.n)
        if not blindsig.verify(s, m, receipt.payer_pk):
            raise ProtocolError("payer signature does not verify; transfer aborted")
        inst = CoinInstance(tx=receipt.tx, sig=s)
        self.net.broadcast_instance(serialize_instance(inst, self.profile))
        self.entries[receipt.entry.coin_id] = receipt.entry
        receipt.submitted = True

    def await_receipt(self, receipt: PendingReceipt, timeout_ticks: int = 400) -> str:
        """Wait for the new instance to confirm.

        Returns "confirmed", or leaves the entry pending and flagged with
        "superseded" (a rival spend of the same parent won) or "timeout".
        The verdict is read only from settled network states, where the
        longest-chain/lowest-hash rule has already resolved any tie, so a
        provisional tip can never declare the wrong winner.
        """
        if not receipt.submitted:
            raise WalletStateError("receipt was never submitted")
        entry = receipt.entry
        depth = self.net.config.confirm_depth
        outcome = {"value": "timeout"}

        def resolved() -> bool:
            if not self.net.quiescent():
                return False
            record = self._view().lookup_latest(entry.coin_id)
            if record is None:
                return False
            if record.tx_hash == entry.last_tx_hash:
                if self._view().confirmations(record) >= depth:
                    outcome["value"] = "confirmed"
                    return True
                return False
            if record.tx.h_prev == receipt.tx.h_prev:
                # the settled chain holds someone else's child of our parent
                outcome["value"] = "superseded"
                return True
            return False

        self.net.run_until(resolved, timeout_ticks)
        if outcome["value"] == "confirmed":
            entry.status = CONFIRMED
            entry.flag = None
        else:
            entry.flag = outcome["value"]
        return outcome["value"]

    def finalize_receipt(
        self, receipt: PendingReceipt, s_blinded: int, timeout_ticks: int = 400
    ) -> str:
        self.submit_receipt(receipt, s_blinded)
        return self.await_receipt(receipt, timeout_ticks)

    # -- bookkeeping ---------------------------------------------------------

    def balance(self) -> int:
        return sum(e.coin_id.val for e in self.entries.values() if e.status == CONFIRMED)

    def save_entries(self, path) -> None:
        """Count-prefixed secret cores plus per-entry bookkeeping."""
        chunks = [struct.pack(">I", len(self.entries))]
        for entry in self.entries.values():
            chunks.append(entry.secret_core(self.profile))
            chunks.append(entry.coin_id.val.to_bytes(ID_SLOT, "big"))
            chunks.append(entry.coin_id.bank.to_bytes(ID_SLOT, "big"))
            chunks.append(bytes([_STATUS_BYTES[entry.status]]))
            chunks.append(entry.last_tx_hash)
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))

    def load_entries(self, path) -> list[WalletEntry]:
        """Rehydrate entries; public key material comes back from the chain.

        Entries whose coin cannot be found on the chain (or whose latest
        on-chain transaction is not ours) are flagged "unresolved" since they
        cannot be spent without their transfer-key modulus.
        """
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) < 4:
            raise FormatError("wallet file too short")
        (count,) = struct.unpack(">I", data[:4])
        core = self.profile.secret_core_size
        entry_size = core + ID_SLOT + ID_SLOT + 1 + 32
        if len(data) != 4 + count * entry_size:
            raise FormatError("wallet file length does not match its entry count")
        loaded = []
        pos = 4
        for _ in range(count):
            sn = int.from_bytes(data[pos : pos + ID_SLOT], "big")
            x = int.from_bytes(data[pos + ID_SLOT : pos + ID_SLOT + self.profile.dlp_slot], "big")
            d = int.from_bytes(data[pos + ID_SLOT + self.profile.dlp_slot : pos + core], "big")
            pos += core
            val = int.from_bytes(data[pos : pos + ID_SLOT], "big")
            bank = int.from_bytes(data[pos + ID_SLOT : pos + 2 * ID_SLOT], "big")
            status = _STATUS_NAMES.get(data[pos + 2 * ID_SLOT])
            if status is None:
                raise FormatError(f"unknown status byte {data[pos + 2 * ID_SLOT]}")
            last_tx_hash = data[pos + 2 * ID_SLOT + 1 : pos + 2 * ID_SLOT + 33]
            pos += 2 * ID_SLOT + 33
            coin_id = CoinId(sn=sn, val=val, bank=bank)
            record = self._view().lookup_latest(coin_id)
            flag = None
            if record is not None and record.tx_hash == last_tx_hash:
                sk = SigPrivateKey(d=d, n=record.tx.key_n)
                pk = SigPublicKey(e=record.tx.key_e, n=record.tx.key_n)
            else:
                sk = SigPrivateKey(d=d, n=0)
                pk = None
                flag = "unresolved"
            entry = WalletEntry(
                coin_id=coin_id,
                x=x,
                sk=sk,
                last_tx_hash=last_tx_hash,
                status=status,
                flag=flag,
                pk=pk,
            )
            self.entries[coin_id] = entry
            loaded.append(entry)
        return loaded
