"""Minting authority: denomination keys, customer accounts, shared escrow.

The bank signs whatever blinded digest a funded customer submits and keeps no
record of it, so it cannot link a coin back to the mint request.  Fiat backing
for every outstanding coin sits in an escrow account shared by all banks;
redemption runs one final on-chain transfer to a bank-held key and then moves
the fiat back out of escrow.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Optional

from . import wallet as wallet_mod
from .blindsig import SigPrivateKey, SigPublicKey, keygen, sign
from .coinmodel import DENOMINATIONS
from .numtheory import as_rng, verify_dlp
from .profiles import Profile


class BankError(Exception):
    pass


class UnknownAccountError(BankError):
    pass


class UnknownDenominationError(BankError):
    pass


class InsufficientFundsError(BankError):
    pass


class UnknownCoinError(BankError):
    pass


class DoubleRedeemError(BankError):
    pass


class RedeemError(BankError):
    """The terminal transfer failed to confirm; no fiat moved."""


class OwnershipError(BankError):
    """The revealed DLP secret does not match the coin's latest transaction."""


@dataclass
class Account:
    account_id: str
    balance: int


class EscrowAccount:
    """Fiat pool backing all coins in circulation, shared across banks."""

    def __init__(self):
        self.balance = 0

    def credit(self, amount: int) -> None:
        self.balance += amount

    def debit(self, amount: int) -> None:
        if amount > self.balance:
            raise BankError("escrow cannot go negative")
        self.balance -= amount


@dataclass(frozen=True)
class MintRecord:
    """Everything the bank keeps about a mint.  Deliberately nothing else."""

    account_id: str
    val: int
    tick: int


@dataclass(frozen=True)
class RedeemReceipt:
    account_id: str
    val: int
    terminal_tx_hash: bytes


def bank_id_from_name(name: str) -> int:
    return int.from_bytes(hashlib.sha256(b"bank:" + name.encode()).digest(), "big")


class Bank:
    """Single-writer state machine; all mutators are totally ordered."""

    def __init__(
        self,
        name: str,
        profile: Profile,
        escrow: EscrowAccount,
        seed,
        denominations: frozenset[int] = DENOMINATIONS,
        keyring: Optional[dict[int, tuple[SigPublicKey, SigPrivateKey]]] = None,
        clock: Optional[Callable[[], int]] = None,
    ):
        self.name = name
        self.bank_id = bank_id_from_name(name)
        self.profile = profile
        self.escrow = escrow
        self.denominations = denominations
        self.rng = as_rng(seed)
        self.clock = clock or (lambda: 0)
        if keyring is None:
            keyring = {
                val: keygen(profile.modulus_bits, self.rng, profile.mr_rounds)
                for val in sorted(denominations)
            }
        self.keyring = keyring
        self.accounts: dict[str, Account] = {}
        self.mint_log: list[MintRecord] = []
        self.redeemed: set = set()
        self._vault: Optional[wallet_mod.Wallet] = None

    def open_account(self, account_id: str, balance: int = 0) -> Account:
        if balance < 0:
            raise BankError("cannot open an account in the red")
        account = Account(account_id=account_id, balance=balance)
        self.accounts[account_id] = account
        return account

    def publish_keys(self) -> dict[int, SigPublicKey]:
        return {val: pair[0] for val, pair in sorted(self.keyring.items())}

    def register_keys(self, registry) -> None:
        for val, pk in self.publish_keys().items():
            registry.register(self.bank_id, val, pk)

    def mint(self, account_id: str, val: int, m_blinded: int) -> int:
        """Debit the account, back the coin in escrow, sign the blinded digest.

        Whether the digest describes a well-formed coin is the customer's
        problem; the network will refuse a malformed one.
        """
        if val not in self.denominations:
            raise UnknownDenominationError(f"no signing key for denomination {val}")
        account = self.accounts.get(account_id)
        if account is None:
            raise UnknownAccountError(account_id)
        if account.balance < val:
            raise InsufficientFundsError(
                f"{account_id} holds {account.balance}, needs {val}"
            )
        s_blinded = sign(m_blinded, self.keyring[val][1])
        account.balance -= val
        self.escrow.credit(val)
        self.mint_log.append(MintRecord(account_id=account_id, val=val, tick=self.clock()))
        return s_blinded

    def redeem(
        self,
        account_id: str,
        offer: wallet_mod.PaymentOffer,
        signer: Callable[[int], int],
        net,
        timeout_ticks: int = 400,
    ) -> RedeemReceipt:
        """Cash a coin back in: terminal transfer to a bank key, then credit.

        `signer` is the owner's side of the exchange, producing the delegated
        signature over the blinded digest of the terminal transaction.  Fiat
        moves only after the terminal instance confirms on chain.
        """
        account = self.accounts.get(account_id)
        if account is None:
            raise UnknownAccountError(account_id)
        if offer.coin_id in self.redeemed:
            raise DoubleRedeemError("coin was already redeemed")
        if self._vault is None:
            self._vault = wallet_mod.Wallet(
                f"{self.name}-vault", self.profile, net, self.rng.getrandbits(64)
            )
        record = self._vault._view().lookup_latest(offer.coin_id)
        if record is None:
            raise UnknownCoinError("coin is not on the chain")
        prev = record.tx
        if not verify_dlp(prev.dlp_p, prev.dlp_alpha, prev.dlp_beta, offer.x):
            raise OwnershipError("revealed secret does not prove ownership")
        m_blinded, receipt = self._vault.receive_payment(offer)
        outcome = self._vault.finalize_receipt(receipt, signer(m_blinded), timeout_ticks)
        if outcome != "confirmed":
            raise RedeemError(f"terminal transfer did not confirm ({outcome})")
        account.balance += offer.coin_id.val
        self.escrow.debit(offer.coin_id.val)
        self.redeemed.add(offer.coin_id)
        return RedeemReceipt(
            account_id=account_id,
            val=offer.coin_id.val,
            terminal_tx_hash=receipt.digest,
        )

    def audit_escrow(self) -> int:
        """Snapshot of the shared escrow balance, for cross-bank monitoring."""
        return self.escrow.balance
