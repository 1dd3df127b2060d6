"""Line-oriented scenario scripts and the engine that replays them.

A scenario declares banks, accounts and wallets, then drives mints, transfers
(including deliberate double-spends) and redemptions against the simulated
network, with assertions along the way.  The engine re-checks escrow backing
after every command and emits a report whose bytes depend only on the
(manifest, script) pair.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from . import blindsig
from .bank import Bank, BankError, EscrowAccount
from .coinmodel import CoinId
from .ledger import KeyRegistry
from .profiles import Profile
from .simnet import Network, SimConfig
from .wallet import ProtocolError, Wallet, WalletStateError


class ScenarioError(Exception):
    """Bad script: unknown command, wrong arguments, unknown actor."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Command:
    line_no: int
    name: str
    args: tuple[str, ...]


_KNOWN = {
    "config": (2, 2),
    "bank": (1, 1),
    "account": (3, 3),
    "wallet": (1, 1),
    "mint": (3, 3),
    "transfer": (3, 3),
    "double-spend": (4, 4),
    "redeem": (2, 2),
    "advance-ticks": (1, 1),
    "assert-balance": (2, 2),
    "assert-account": (2, 2),
    "assert-escrow": (1, 1),
    "assert-coin-instances": (2, 2),
    "dump-ledger": (0, 0),
}


def parse_scenario(text: str) -> list[Command]:
    commands = []
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        name, args = parts[0], tuple(parts[1:])
        if name not in _KNOWN:
            raise ScenarioError(line_no, f"unknown command {name!r}")
        lo, hi = _KNOWN[name]
        if not lo <= len(args) <= hi:
            raise ScenarioError(line_no, f"{name} takes {lo} argument(s), got {len(args)}")
        commands.append(Command(line_no=line_no, name=name, args=args))
    return commands


def _parse_int(cmd: Command, value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioError(cmd.line_no, f"{what} must be an integer, got {value!r}") from None


@dataclass
class CoinRef:
    coin_id: CoinId
    owner: Optional[str]          # wallet name, None once redeemed
    redeemed: bool = False


@dataclass
class ScenarioResult:
    report: str
    ok: bool
    assertions_total: int
    assertions_passed: int
    escrow_checks_total: int
    escrow_checks_passed: int
    protocol_failures: int
    ledger_bytes: bytes
    keys_mapping: dict


class ScenarioEngine:
    def __init__(
        self,
        scenario_text: str,
        profile: Profile,
        seed: int = 0,
        difficulty: int = 12,
        confirm_depth: int = 1,
    ):
        self.commands = parse_scenario(scenario_text)
        self.profile = profile
        self.seed = seed
        self.difficulty = difficulty
        self.confirm_depth = confirm_depth

    # -- setup ------------------------------------------------------------

    def _build_network(self) -> Network:
        num_nodes, miners = 3, (0,)
        delay: tuple = ("fixed", 1)
        mine_budget, settle_timeout = 500, 400
        for cmd in self.commands:
            if cmd.name != "config":
                continue
            key, value = cmd.args
            if key == "nodes":
                num_nodes = _parse_int(cmd, value, "nodes")
            elif key == "miners":
                miners = tuple(_parse_int(cmd, v, "miner id") for v in value.split(","))
            elif key == "delay":
                parts = value.split(":")
                if parts[0] == "fixed" and len(parts) == 2:
                    delay = ("fixed", int(parts[1]))
                elif parts[0] == "uniform" and len(parts) == 3:
                    delay = ("uniform", int(parts[1]), int(parts[2]))
                else:
                    raise ScenarioError(cmd.line_no, f"bad delay spec {value!r}")
            elif key == "mine-budget":
                mine_budget = _parse_int(cmd, value, "mine-budget")
            elif key == "timeout":
                settle_timeout = _parse_int(cmd, value, "timeout")
            else:
                raise ScenarioError(cmd.line_no, f"unknown config key {key!r}")
        config = SimConfig(
            profile=self.profile,
            num_nodes=num_nodes,
            miners=miners,
            difficulty=self.difficulty,
            confirm_depth=self.confirm_depth,
            seed=self.seed,
            delay=delay,
            mine_budget=mine_budget,
            settle_timeout=settle_timeout,
        )
        self.registry = KeyRegistry()
        return Network(config, self.registry)

    # -- execution ----------------------------------------------------------

    def run(self) -> ScenarioResult:
        self.net = self._build_network()
        self.master_rng = random.Random(f"actors-{self.seed}")
        self.escrow = EscrowAccount()
        self.banks: dict[str, Bank] = {}
        self.wallets: dict[str, Wallet] = {}
        self.accounts: dict[str, str] = {}   # account holder -> bank name
        self.coins: dict[str, CoinRef] = {}
        self.outstanding = 0
        self._next_home = 0
        self.lines: list[str] = []
        self.assertions: list[bool] = []
        self.escrow_checks: list[bool] = []
        self.protocol_failures = 0
        self._dumped: Optional[bytes] = None

        cfg = self.net.config
        self.lines.append("tcash run report")
        self.lines.append(f"profile: {self.profile.name}")
        self.lines.append(f"seed: {self.seed}")
        self.lines.append(f"difficulty: {self.difficulty}")
        self.lines.append(f"confirm-depth: {self.confirm_depth}")
        self.lines.append(f"nodes: {cfg.num_nodes}")
        self.lines.append(f"miners: {','.join(str(m) for m in cfg.miners)}")
        self.lines.append(f"delay: {':'.join(str(p) for p in cfg.delay)}")
        self.lines.append("script:")

        for cmd in self.commands:
            handler = getattr(self, "_cmd_" + cmd.name.replace("-", "_"))
            try:
                outcome = handler(cmd)
            except (BankError, ProtocolError, WalletStateError) as exc:
                self.protocol_failures += 1
                outcome = f"FAILED {type(exc).__name__}: {exc}"
            self.lines.append(f"  [{cmd.line_no:03d}] {cmd.name} {' '.join(cmd.args)} :: {outcome}")
            if cmd.name in ("mint", "transfer", "double-spend", "redeem"):
                # commands happen at human timescale: let the network drain
                # fully before the next one acts on it
                self.net.run_to_quiescence()
                self._check_escrow(cmd.line_no)

        self.net.run_to_quiescence()
        self._final_sections()
        ok = (
            all(self.assertions)
            and all(self.escrow_checks)
            and self.protocol_failures == 0
        )
        status = "PASS" if ok else "FAIL"
        self.lines.append(
            f"result: {status} (assertions {sum(self.assertions)}/{len(self.assertions)},"
            f" escrow {sum(self.escrow_checks)}/{len(self.escrow_checks)},"
            f" protocol failures {self.protocol_failures})"
        )
        ledger_bytes = self._dumped if self._dumped is not None else self.net.nodes[0].chain.serialize()
        return ScenarioResult(
            report="\n".join(self.lines) + "\n",
            ok=ok,
            assertions_total=len(self.assertions),
            assertions_passed=sum(self.assertions),
            escrow_checks_total=len(self.escrow_checks),
            escrow_checks_passed=sum(self.escrow_checks),
            protocol_failures=self.protocol_failures,
            ledger_bytes=ledger_bytes,
            keys_mapping=self.registry.to_mapping(),
        )

    # -- helpers -------------------------------------------------------------

    def _wallet(self, cmd: Command, name: str) -> Wallet:
        try:
            return self.wallets[name]
        except KeyError:
            raise ScenarioError(cmd.line_no, f"unknown wallet {name!r}") from None

    def _coin(self, cmd: Command, name: str) -> CoinRef:
        try:
            return self.coins[name]
        except KeyError:
            raise ScenarioError(cmd.line_no, f"unknown coin {name!r}") from None

    def _entry_of(self, cmd: Command, ref: CoinRef):
        if ref.owner is None:
            raise ScenarioError(cmd.line_no, "coin was already redeemed")
        return self.wallets[ref.owner].entries[ref.coin_id]

    def _check_escrow(self, line_no: int) -> None:
        ok = self.escrow.balance == self.outstanding
        self.escrow_checks.append(ok)
        verdict = "ok" if ok else "FAIL"
        self.lines.append(
            f"  [{line_no:03d}] escrow-check :: {verdict}"
            f" balance={self.escrow.balance} outstanding={self.outstanding}"
        )

    def _record_assert(self, ok: bool, detail: str) -> str:
        self.assertions.append(ok)
        return f"{'PASS' if ok else 'FAIL'} {detail}"

    # -- command handlers ------------------------------------------------------

    def _cmd_config(self, cmd: Command) -> str:
        return "ok"  # consumed while building the network

    def _cmd_bank(self, cmd: Command) -> str:
        (name,) = cmd.args
        bank = Bank(
            name,
            self.profile,
            self.escrow,
            seed=self.master_rng.getrandbits(64),
            clock=self.net.now,
        )
        bank.register_keys(self.registry)
        self.banks[name] = bank
        return f"ok id={bank.bank_id:064x}"

    def _cmd_account(self, cmd: Command) -> str:
        holder, bank_name, amount = cmd.args
        bank = self.banks.get(bank_name)
        if bank is None:
            raise ScenarioError(cmd.line_no, f"unknown bank {bank_name!r}")
        bank.open_account(holder, _parse_int(cmd, amount, "balance"))
        self.accounts[holder] = bank_name
        return f"ok balance={amount}"

    def _cmd_wallet(self, cmd: Command) -> str:
        (name,) = cmd.args
        home = self._next_home % self.net.config.num_nodes
        self._next_home += 1
        self.wallets[name] = Wallet(
            name,
            self.profile,
            self.net,
            seed=self.master_rng.getrandbits(64),
            home_node=home,
        )
        return f"ok node={home}"

    def _cmd_mint(self, cmd: Command) -> str:
        holder, coin_name, amount = cmd.args
        wallet = self._wallet(cmd, holder)
        bank_name = self.accounts.get(holder)
        if bank_name is None:
            raise ScenarioError(cmd.line_no, f"{holder!r} has no bank account")
        val = _parse_int(cmd, amount, "denomination")
        entry = wallet.request_mint(self.banks[bank_name], holder, val)
        self.outstanding += val
        self.coins[coin_name] = CoinRef(coin_id=entry.coin_id, owner=holder)
        if wallet.await_confirmation(entry, self.net.config.settle_timeout):
            return f"confirmed height={self.net.nodes[wallet.home_node].chain.best_height}"
        self.protocol_failures += 1
        return "FLAGGED timeout"

    def _cmd_transfer(self, cmd: Command) -> str:
        payer_name, payee_name, coin_name = cmd.args
        payer = self._wallet(cmd, payer_name)
        payee = self._wallet(cmd, payee_name)
        ref = self._coin(cmd, coin_name)
        if ref.owner != payer_name:
            raise ScenarioError(cmd.line_no, f"{payer_name!r} does not own {coin_name!r}")
        entry = self._entry_of(cmd, ref)
        offer = payer.initiate_payment(entry)
        m_blinded, receipt = payee.receive_payment(offer)
        s_blinded = payer.sign_transfer(entry, m_blinded)
        outcome = payee.finalize_receipt(receipt, s_blinded, self.net.config.settle_timeout)
        if outcome == "confirmed":
            ref.owner = payee_name
            return f"confirmed height={self.net.nodes[payee.home_node].chain.best_height}"
        self.protocol_failures += 1
        return f"FLAGGED {outcome}"

    def _cmd_double_spend(self, cmd: Command) -> str:
        payer_name, first_name, second_name, coin_name = cmd.args
        payer = self._wallet(cmd, payer_name)
        first = self._wallet(cmd, first_name)
        second = self._wallet(cmd, second_name)
        ref = self._coin(cmd, coin_name)
        if ref.owner != payer_name:
            raise ScenarioError(cmd.line_no, f"{payer_name!r} does not own {coin_name!r}")
        entry = self._entry_of(cmd, ref)
        offer = payer.initiate_payment(entry)
        m1, receipt1 = first.receive_payment(offer)
        m2, receipt2 = second.receive_payment(offer)
        s1 = payer.sign_transfer(entry, m1)
        # the dishonest second signature bypasses the wallet and uses the raw key
        s2 = blindsig.sign(m2, entry.sk)
        first.submit_receipt(receipt1, s1)
        second.submit_receipt(receipt2, s2)
        out1 = first.await_receipt(receipt1, self.net.config.settle_timeout)
        out2 = second.await_receipt(receipt2, self.net.config.settle_timeout)
        confirmed = [
            name for name, out in ((first_name, out1), (second_name, out2)) if out == "confirmed"
        ]
        ok = len(confirmed) == 1
        if ok:
            ref.owner = confirmed[0]
            loser, flag = (
                (second_name, out2) if confirmed[0] == first_name else (first_name, out1)
            )
            detail = f"winner={confirmed[0]} loser={loser}({flag}) confirmed=1/2"
        else:
            detail = f"confirmed={len(confirmed)}/2 outcomes={out1},{out2}"
        return self._record_assert(ok, detail)

    def _cmd_redeem(self, cmd: Command) -> str:
        holder, coin_name = cmd.args
        wallet = self._wallet(cmd, holder)
        ref = self._coin(cmd, coin_name)
        if ref.owner != holder:
            raise ScenarioError(cmd.line_no, f"{holder!r} does not own {coin_name!r}")
        bank_name = self.accounts.get(holder)
        if bank_name is None:
            raise ScenarioError(cmd.line_no, f"{holder!r} has no bank account")
        entry = self._entry_of(cmd, ref)
        offer = wallet.initiate_payment(entry)
        receipt = self.banks[bank_name].redeem(
            holder,
            offer,
            signer=lambda m: wallet.sign_transfer(entry, m),
            net=self.net,
            timeout_ticks=self.net.config.settle_timeout,
        )
        self.outstanding -= receipt.val
        ref.owner = None
        ref.redeemed = True
        return f"ok credited={receipt.val}"

    def _cmd_advance_ticks(self, cmd: Command) -> str:
        self.net.step(_parse_int(cmd, cmd.args[0], "ticks"))
        return "ok"

    def _cmd_assert_balance(self, cmd: Command) -> str:
        holder, expected = cmd.args
        actual = self._wallet(cmd, holder).balance()
        want = _parse_int(cmd, expected, "amount")
        return self._record_assert(actual == want, f"wallet={holder} actual={actual} expected={want}")

    def _cmd_assert_account(self, cmd: Command) -> str:
        holder, expected = cmd.args
        bank_name = self.accounts.get(holder)
        if bank_name is None:
            raise ScenarioError(cmd.line_no, f"{holder!r} has no bank account")
        actual = self.banks[bank_name].accounts[holder].balance
        want = _parse_int(cmd, expected, "amount")
        return self._record_assert(actual == want, f"account={holder} actual={actual} expected={want}")

    def _cmd_assert_escrow(self, cmd: Command) -> str:
        want = _parse_int(cmd, cmd.args[0], "amount")
        actual = self.escrow.balance
        return self._record_assert(actual == want, f"actual={actual} expected={want}")

    def _cmd_assert_coin_instances(self, cmd: Command) -> str:
        coin_name, expected = cmd.args
        ref = self._coin(cmd, coin_name)
        actual = len(self.net.nodes[0].chain.instances_of(ref.coin_id))
        want = _parse_int(cmd, expected, "count")
        return self._record_assert(actual == want, f"coin={coin_name} actual={actual} expected={want}")

    def _cmd_dump_ledger(self, cmd: Command) -> str:
        self._dumped = self.net.nodes[0].chain.serialize()
        return f"ok bytes={len(self._dumped)}"

    # -- report tail -------------------------------------------------------------

    def _final_sections(self) -> None:
        self.lines.append("network:")
        for node in self.net.nodes:
            chain = node.chain
            self.lines.append(
                f"  node {node.node_id}: height={chain.best_height}"
                f" tip={chain.best_tip[:8].hex()} blocks={len(list(chain.blocks_in_order()))}"
                f" rejects={len(node.reject_log)}"
            )
            for line in node.reject_log:
                self.lines.append(f"    {line}")
        self.lines.append("wallets:")
        for name in self.wallets:
            wallet = self.wallets[name]
            self.lines.append(f"  {name}: balance={wallet.balance()}")
            for coin_id, entry in wallet.entries.items():
                flag = f" flag={entry.flag}" if entry.flag else ""
                self.lines.append(
                    f"    coin sn={coin_id.sn:064x} val={coin_id.val} status={entry.status}{flag}"
                )
        self.lines.append("coins:")
        for name in self.coins:
            ref = self.coins[name]
            count = len(self.net.nodes[0].chain.instances_of(ref.coin_id))
            owner = ref.owner if ref.owner is not None else "(redeemed)"
            self.lines.append(
                f"  {name}: sn={ref.coin_id.sn:064x} val={ref.coin_id.val}"
                f" bank={ref.coin_id.bank:064x} instances={count} owner={owner}"
            )
        converged = "yes" if self.net.converged() else "NO"
        self.lines.append(f"converged: {converged}")
