import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcash import STANDARD, TOY
from tcash import coinmodel as cm
from tcash.blindsig import SigPublicKey

# digests of the fixed golden transaction, computed once with sha256sum
GOLDEN_TOY = "e6f5ca3c64e453e07832720f37ce00093eb945120b51653b6905ea9c23d05286"
GOLDEN_STD = "be7e87e99d3a8b85fc999079bb82c0191284c588711a716b6d5ca388d2e62741"


def golden_tx():
    return cm.Transaction(
        coin_id=cm.CoinId(sn=0x11, val=500, bank=0x22),
        dlp_p=23,
        dlp_alpha=2,
        dlp_beta=9,
        key_n=35,
        key_e=5,
        x_prev=0,
        h_prev=cm.ZERO_HASH,
    )


def random_tx(rng, profile):
    genesis = rng.random() < 0.5
    p = rng.getrandbits(profile.p_bits - 1) | (1 << (profile.p_bits - 1)) | 1
    return cm.Transaction(
        coin_id=cm.CoinId(
            sn=rng.getrandbits(256) | 1,
            val=rng.choice(sorted(cm.DENOMINATIONS)),
            bank=rng.getrandbits(256),
        ),
        dlp_p=p,
        dlp_alpha=rng.randrange(2, p),
        dlp_beta=rng.randrange(1, p),
        key_n=rng.getrandbits(profile.modulus_bits) | 3,
        key_e=rng.getrandbits(250) | 5,
        x_prev=0 if genesis else rng.getrandbits(256) | 1,
        h_prev=cm.ZERO_HASH if genesis else rng.getrandbits(256).to_bytes(32, "big"),
    )


class TestSerializeTx:
    def test_standard_width(self):
        assert len(cm.serialize_tx(golden_tx(), STANDARD)) == 832

    def test_toy_width(self):
        assert len(cm.serialize_tx(golden_tx(), TOY)) == TOY.tx_size

    def test_genesis_tail_is_null(self):
        raw = cm.serialize_tx(golden_tx(), TOY)
        assert raw[-64:] == bytes(64)  # x_prev slot then h_prev slot

    def test_overflow_rejected(self):
        tx = golden_tx()
        fat = cm.Transaction(
            coin_id=tx.coin_id,
            dlp_p=1 << (TOY.p_bits + 1),
            dlp_alpha=2,
            dlp_beta=9,
            key_n=35,
            key_e=5,
            x_prev=0,
            h_prev=cm.ZERO_HASH,
        )
        with pytest.raises(cm.EncodingError):
            cm.serialize_tx(fat, TOY)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=2**63))
    def test_roundtrip(self, seed):
        rng = random.Random(seed)
        tx = random_tx(rng, TOY)
        assert cm.deserialize_tx(cm.serialize_tx(tx, TOY), TOY) == tx


class TestTxHash:
    def test_equal_transactions_equal_digests(self):
        assert cm.tx_hash(golden_tx(), TOY) == cm.tx_hash(golden_tx(), TOY)

    def test_any_byte_flip_changes_digest(self):
        raw = bytearray(cm.serialize_tx(golden_tx(), TOY))
        base = cm.tx_hash(golden_tx(), TOY)
        rng = random.Random(3)
        for _ in range(32):
            pos = rng.randrange(len(raw))
            flipped = bytearray(raw)
            flipped[pos] ^= 0xFF
            mutated = cm.deserialize_tx(bytes(flipped), TOY)
            assert cm.tx_hash(mutated, TOY) != base

    def test_golden_vector(self):
        assert cm.tx_hash(golden_tx(), TOY).hex() == GOLDEN_TOY
        assert cm.tx_hash(golden_tx(), STANDARD).hex() == GOLDEN_STD


class TestInstanceSerialization:
    def test_standard_is_1088_bytes(self):
        inst = cm.CoinInstance(tx=golden_tx(), sig=123)
        assert len(cm.serialize_instance(inst, STANDARD)) == 1088

    def test_truncated_rejected(self):
        inst = cm.CoinInstance(tx=golden_tx(), sig=123)
        raw = cm.serialize_instance(inst, STANDARD)
        with pytest.raises(cm.FormatError):
            cm.deserialize_instance(raw[:-1], STANDARD)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=2**63))
    def test_roundtrip(self, seed):
        rng = random.Random(seed)
        inst = cm.CoinInstance(tx=random_tx(rng, TOY), sig=rng.getrandbits(TOY.modulus_bits))
        assert cm.deserialize_instance(cm.serialize_instance(inst, TOY), TOY) == inst

    def test_thousand_randomized_roundtrips(self):
        rng = random.Random(0xC0)
        seen = set()
        for _ in range(1000):
            inst = cm.CoinInstance(tx=random_tx(rng, TOY), sig=rng.getrandbits(TOY.modulus_bits))
            raw = cm.serialize_instance(inst, TOY)
            assert len(raw) == TOY.instance_size
            assert cm.deserialize_instance(raw, TOY) == inst
            seen.add(raw)
        assert len(seen) == 1000  # distinct instances encode distinctly


class TestMakeGenesisTx:
    def test_null_links(self):
        tx = cm.make_genesis_tx(cm.CoinId(sn=9, val=500, bank=3), (23, 2, 9), SigPublicKey(e=5, n=35))
        assert tx.x_prev == 0 and tx.h_prev == cm.ZERO_HASH

    def test_coin_id_preserved(self):
        cid = cm.CoinId(sn=9, val=500, bank=3)
        assert cm.make_genesis_tx(cid, (23, 2, 9), SigPublicKey(e=5, n=35)).coin_id == cid

    def test_zero_serial_rejected(self):
        with pytest.raises(ValueError):
            cm.make_genesis_tx(cm.CoinId(sn=0, val=500, bank=3), (23, 2, 9), SigPublicKey(e=5, n=35))

    def test_bad_denomination_rejected(self):
        with pytest.raises(ValueError):
            cm.make_genesis_tx(cm.CoinId(sn=9, val=123, bank=3), (23, 2, 9), SigPublicKey(e=5, n=35))


class TestMakeTransferTx:
    def prev(self):
        return cm.Transaction(
            coin_id=cm.CoinId(sn=9, val=500, bank=3),
            dlp_p=23,
            dlp_alpha=2,
            dlp_beta=9,
            key_n=35,
            key_e=5,
            x_prev=0,
            h_prev=cm.ZERO_HASH,
        )

    def test_accepts_correct_secret(self):
        prev = self.prev()
        child = cm.make_transfer_tx(prev, 5, (23, 2, 4), SigPublicKey(e=5, n=35), TOY)
        assert child.h_prev == cm.tx_hash(prev, TOY)
        assert child.x_prev == 5
        assert child.coin_id == prev.coin_id

    def test_rejects_wrong_secret(self):
        with pytest.raises(cm.OwnershipError):
            cm.make_transfer_tx(self.prev(), 6, (23, 2, 4), SigPublicKey(e=5, n=35), TOY)

    def test_chain_link_soundness(self, coin_factory):
        inst, secrets = coin_factory.genesis()
        child, _ = coin_factory.transfer(inst, secrets)
        assert child.tx.h_prev == cm.tx_hash(inst.tx, TOY)
        from tcash.numtheory import verify_dlp

        assert verify_dlp(inst.tx.dlp_p, inst.tx.dlp_alpha, inst.tx.dlp_beta, child.tx.x_prev)
        assert child.tx.coin_id == inst.tx.coin_id


class TestValidateSyntactic:
    def good(self):
        return cm.CoinInstance(tx=golden_tx(), sig=7)

    def test_well_formed_genesis(self):
        assert cm.validate_syntactic(self.good(), TOY)

    def test_beta_at_least_p(self):
        tx = golden_tx()
        bad = cm.CoinInstance(
            tx=cm.Transaction(
                coin_id=tx.coin_id,
                dlp_p=23,
                dlp_alpha=2,
                dlp_beta=23,
                key_n=35,
                key_e=5,
                x_prev=0,
                h_prev=cm.ZERO_HASH,
            ),
            sig=7,
        )
        assert not cm.validate_syntactic(bad, TOY)

    def test_null_coupling(self):
        tx = golden_tx()
        bad = cm.CoinInstance(
            tx=cm.Transaction(
                coin_id=tx.coin_id,
                dlp_p=23,
                dlp_alpha=2,
                dlp_beta=9,
                key_n=35,
                key_e=5,
                x_prev=0,
                h_prev=b"\x01" + bytes(31),
            ),
            sig=7,
        )
        assert cm.syntactic_violation(bad, TOY) == "genesis-null-coupling"

    def test_bad_denomination(self):
        tx = golden_tx()
        bad = cm.CoinInstance(
            tx=cm.Transaction(
                coin_id=cm.CoinId(sn=1, val=123, bank=2),
                dlp_p=23,
                dlp_alpha=2,
                dlp_beta=9,
                key_n=35,
                key_e=5,
                x_prev=0,
                h_prev=cm.ZERO_HASH,
            ),
            sig=7,
        )
        assert cm.syntactic_violation(bad, TOY) == "bad-denomination"
