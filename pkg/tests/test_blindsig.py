import math
import random

import pytest

from tcash import TOY
from tcash import blindsig as bs
from tcash.numtheory import NoInverseError


class TestKeygen:
    def test_toy_roundtrip_key(self, toy_pk, toy_sk):
        # (3^5)^5 mod 35 == 3, verified by brute-force modular arithmetic
        assert pow(pow(3, toy_pk.e, 35), toy_sk.d, 35) == 3

    def test_sign_then_verify_twenty_messages(self):
        pk, sk = bs.keygen(128, seed=11)
        rng = random.Random(0)
        for _ in range(20):
            m = rng.randrange(0, pk.n)
            assert bs.verify(bs.sign(m, sk), m, pk)

    def test_deterministic(self):
        assert bs.keygen(128, seed=4) == bs.keygen(128, seed=4)
        assert bs.keygen(128, seed=4) != bs.keygen(128, seed=5)

    def test_modulus_width_exact(self):
        pk, _ = bs.keygen(128, seed=3)
        assert pk.n.bit_length() == 128

    def test_bad_width(self):
        with pytest.raises(ValueError):
            bs.keygen(127, seed=1)

    def test_key_invariant_checks(self):
        with pytest.raises(ValueError):
            bs.SigPublicKey(e=4, n=35)  # even exponent
        with pytest.raises(ValueError):
            bs.SigPublicKey(e=5, n=2)   # modulus too small


class TestBlind:
    def test_worked_value(self, toy_pk):
        factor = bs.BlindingFactor.from_r(2, 35)
        # 3 * 2^5 mod 35 = 96 mod 35 = 26
        assert bs.blind(3, factor, toy_pk) == 26

    def test_unit_blinding(self, toy_pk):
        factor = bs.BlindingFactor.from_r(1, 35)
        assert bs.blind(3, factor, toy_pk) == 3

    def test_zero_annihilates(self, toy_pk):
        factor = bs.BlindingFactor.from_r(2, 35)
        assert bs.blind(0, factor, toy_pk) == 0

    def test_message_out_of_range(self, toy_pk):
        factor = bs.BlindingFactor.from_r(2, 35)
        with pytest.raises(ValueError):
            bs.blind(35, factor, toy_pk)


class TestSign:
    def test_worked_values(self, toy_sk):
        assert bs.sign(26, toy_sk) == 31   # 26^5 mod 35
        assert bs.sign(3, toy_sk) == 33    # 243 mod 35
        assert bs.sign(1, toy_sk) == 1


class TestUnblind:
    def test_derivation_chain(self, toy_sk):
        # unblinding the blind signature equals signing directly
        factor = bs.BlindingFactor.from_r(2, 35)
        assert bs.unblind(31, factor, 35) == 33
        assert bs.unblind(31, factor, 35) == bs.sign(3, toy_sk)

    def test_unit_factor(self):
        factor = bs.BlindingFactor.from_r(1, 35)
        assert bs.unblind(31, factor, 35) == 31

    def test_no_inverse(self):
        with pytest.raises(NoInverseError):
            bs.BlindingFactor.from_r(5, 35)


class TestVerify:
    def test_valid(self, toy_pk):
        assert bs.verify(33, 3, toy_pk)   # 33^5 == (-2)^5 == 3 mod 35

    def test_wrong_message(self, toy_pk):
        assert not bs.verify(33, 4, toy_pk)

    def test_trivial(self, toy_pk):
        assert bs.verify(1, 1, toy_pk)


class TestHomomorphism:
    def test_exact_for_seeded_pairs(self):
        pk, sk = bs.keygen(TOY.modulus_bits, seed=21)
        rng = random.Random(77)
        for _ in range(50):
            m = rng.randrange(0, pk.n)
            factor = bs.random_blinding_factor(pk.n, rng)
            unblinded = bs.unblind(bs.sign(bs.blind(m, factor, pk), sk), factor, pk.n)
            assert unblinded == bs.sign(m, sk)

    def test_exhaustive_toy_soundness(self, toy_pk, toy_sk):
        # n = 35 is squarefree, so s -> s^e is a bijection on Z_35 and
        # verify(s, m) must hold exactly when s == m^d mod n
        for m in range(35):
            expected = pow(m, toy_sk.d, 35)
            for s in range(35):
                assert bs.verify(s, m, toy_pk) == (s == expected)

    def test_blinded_message_sweeps_unit_group(self, toy_pk):
        # with m a unit and r uniform over units, blind(m, r) is a bijection
        # of the unit group: the signer learns nothing about m
        units = {r for r in range(1, 35) if math.gcd(r, 35) == 1}
        blinded = {bs.blind(3, bs.BlindingFactor.from_r(r, 35), toy_pk) for r in units}
        assert blinded == units


class TestDigestToMessage:
    def test_zero_digest(self):
        assert bs.digest_to_message(bytes(32), 1 << 257) == 0

    def test_low_bit(self):
        digest = bytes(31) + b"\x01"
        assert bs.digest_to_message(digest, 1 << 257) == 1

    def test_roundtrip_bijection(self):
        rng = random.Random(8)
        n = 1 << 300
        for _ in range(50):
            digest = rng.getrandbits(256).to_bytes(32, "big")
            m = bs.digest_to_message(digest, n)
            assert m.to_bytes(32, "big") == digest

    def test_small_modulus_folds(self):
        digest = b"\xff" * 32
        n = 35
        assert bs.digest_to_message(digest, n) == int.from_bytes(digest, "big") % n

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            bs.digest_to_message(b"\x00" * 31, 1 << 257)
