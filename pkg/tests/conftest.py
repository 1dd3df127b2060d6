import pytest

from tcash import STANDARD, TOY
from tcash import blindsig, numtheory
from tcash.coinmodel import CoinId, CoinInstance, make_genesis_tx, make_transfer_tx, tx_hash
from tcash.ledger import KeyRegistry


@pytest.fixture
def toy_pk():
    return blindsig.SigPublicKey(e=5, n=35)


@pytest.fixture
def toy_sk():
    return blindsig.SigPrivateKey(d=5, n=35)


@pytest.fixture
def toy_group():
    return numtheory.DlpGroup(p=23, q=11, alpha=2)


@pytest.fixture(scope="session")
def std_keypair():
    """One real 2048-bit keypair, shared so the suite pays for keygen once."""
    return blindsig.keygen(STANDARD.modulus_bits, seed=2026, rounds=STANDARD.mr_rounds)


@pytest.fixture(scope="session")
def std_group():
    return numtheory.gen_dlp_group(
        STANDARD.p_bits, STANDARD.q_bits, seed=2026, rounds=STANDARD.mr_rounds
    )


class CoinFactory:
    """Hand-built coin chains with real toy keys, for ledger-level tests."""

    def __init__(self, profile=TOY, seed=1000):
        self.profile = profile
        self.rng = numtheory.as_rng(seed)
        self.registry = KeyRegistry()
        self.bank_id = 0xB001
        self.bank_keys = {}
        for val in (100, 500, 1000):
            pk, sk = blindsig.keygen(profile.modulus_bits, self.rng, profile.mr_rounds)
            self.bank_keys[val] = (pk, sk)
            self.registry.register(self.bank_id, val, pk)

    def _secrets(self):
        group = numtheory.gen_dlp_group(
            self.profile.p_bits, self.profile.q_bits, self.rng, self.profile.mr_rounds
        )
        dlp = numtheory.gen_dlp_instance(group, self.rng)
        pk, sk = blindsig.keygen(self.profile.modulus_bits, self.rng, self.profile.mr_rounds)
        return dlp, pk, sk

    def genesis(self, val=500, sn=None):
        """Returns (instance, owner_secrets) with a valid bank signature."""
        sn = sn if sn is not None else self.rng.getrandbits(256) | 1
        dlp, pk, sk = self._secrets()
        tx = make_genesis_tx(
            CoinId(sn=sn, val=val, bank=self.bank_id),
            (dlp.group.p, dlp.group.alpha, dlp.beta),
            pk,
        )
        digest = tx_hash(tx, self.profile)
        bank_pk, bank_sk = self.bank_keys[val]
        sig = blindsig.sign(blindsig.digest_to_message(digest, bank_pk.n), bank_sk)
        return CoinInstance(tx=tx, sig=sig), (dlp, pk, sk)

    def transfer(self, prev_inst, prev_secrets, x_override=None):
        """Next hop signed by the previous owner; returns (instance, secrets)."""
        prev_dlp, prev_pk, prev_sk = prev_secrets
        dlp, pk, sk = self._secrets()
        revealed = x_override if x_override is not None else prev_dlp.x
        tx = make_transfer_tx(
            prev_inst.tx, revealed, (dlp.group.p, dlp.group.alpha, dlp.beta), pk, self.profile
        )
        digest = tx_hash(tx, self.profile)
        sig = blindsig.sign(blindsig.digest_to_message(digest, prev_sk.n), prev_sk)
        return CoinInstance(tx=tx, sig=sig), (dlp, pk, sk)


@pytest.fixture
def coin_factory():
    return CoinFactory()
