import math

import numpy as np
import pytest

from helpers import assert_within_sigma
from qkdsim.postprocessing import (
    EveBound,
    KeyMaterial,
    confirm_key,
    default_block_schedule,
    estimate_qber,
    eve_bound,
    key_digest,
    parity_reconcile,
    privacy_amplify,
    random_subset_masks,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestEstimateQber:
    def test_identical_keys(self):
        key = rng().integers(0, 2, 1000)
        est, a, b, k = estimate_qber(key, key, 0.2, rng(1))
        assert est == 0.0
        assert k == 200
        assert a.size == b.size == 800
        np.testing.assert_array_equal(a, b)

    def test_complementary_keys(self):
        key = rng().integers(0, 2, 1000)
        est, *_ = estimate_qber(key, 1 - key, 0.5, rng(1))
        assert est == 1.0

    def test_independent_keys(self):
        a, b = rng(1).integers(0, 2, 40_000), rng(2).integers(0, 2, 40_000)
        est, _, _, k = estimate_qber(a, b, 0.5, rng(3))
        assert_within_sigma(est, 0.5, k)

    def test_sample_is_discarded(self):
        key = np.arange(100) % 2
        _, a, _, k = estimate_qber(key, key, 0.3, rng(4))
        assert a.size + k == 100

    def test_sample_has_at_least_one_bit(self):
        _, a, _, k = estimate_qber([1, 0], [1, 0], 0.1, rng())
        assert k == 1 and a.size == 1

    @pytest.mark.parametrize(
        "a, b, frac",
        [([], [], 0.5), ([0, 1], [0], 0.5), ([0, 1], [0, 1], 0.0), ([0, 1], [0, 1], 1.0), ([0, 2], [0, 1], 0.5)],
    )
    def test_invalid_inputs(self, a, b, frac):
        with pytest.raises(ValueError):
            estimate_qber(a, b, frac, rng())


class TestReconciliation:
    def test_single_error_leak_bound(self):
        a = rng(5).integers(0, 2, 64)
        b = a.copy()
        b[37] ^= 1
        fixed, leaked = parity_reconcile(a, b, [8])
        np.testing.assert_array_equal(fixed, a)
        # 8 block parities plus log2(8) bisection parities
        assert leaked <= 11

    @pytest.mark.parametrize("pos", [0, 7, 8, 63])
    def test_single_error_any_position(self, pos):
        a = rng(6).integers(0, 2, 64)
        b = a.copy()
        b[pos] ^= 1
        fixed, leaked = parity_reconcile(a, b, [8])
        np.testing.assert_array_equal(fixed, a)
        assert leaked == 11

    def test_equal_keys_leak_only_block_parities(self):
        a = rng(7).integers(0, 2, 1000)
        schedule = (10, 20, 40)
        fixed, leaked = parity_reconcile(a, a.copy(), schedule, rng(8))
        np.testing.assert_array_equal(fixed, a)
        assert leaked == sum(math.ceil(1000 / k) for k in schedule)

    def test_five_percent_errors_corrected(self):
        n = 10_000
        a = rng(9).integers(0, 2, n)
        flips = rng(10).random(n) < 0.05
        b = a ^ flips
        fixed, leaked = parity_reconcile(a, b, default_block_schedule(0.05, n), rng(11))
        residual = int(np.count_nonzero(fixed != a))
        assert residual == 0
        # the Shannon limit n*h(0.05) is about 2864 bits
        assert leaked < 0.6 * n

    def test_back_tracking_fixes_even_block(self):
        # two errors in one first-pass block are invisible until a later pass splits them
        a = np.zeros(32, dtype=int)
        b = a.copy()
        b[[0, 1]] = 1
        fixed, _ = parity_reconcile(a, b, (8, 16, 32, 32), rng(12))
        np.testing.assert_array_equal(fixed, a)

    def test_empty_keys(self):
        fixed, leaked = parity_reconcile([], [], [4])
        assert fixed.size == 0 and leaked == 0

    def test_multi_pass_requires_rng(self):
        with pytest.raises(ValueError):
            parity_reconcile([0, 1], [0, 1], [1, 2])

    def test_rejects_bad_blocks(self):
        with pytest.raises(ValueError):
            parity_reconcile([0, 1], [0, 1], [0])

    def test_default_schedule(self):
        assert default_block_schedule(0.05, 10_000) == (15, 30, 60, 120)
        assert default_block_schedule(0.0, 10_000)[0] == 73
        assert default_block_schedule(0.0, 100) == (73, 100, 100, 100)


class TestPrivacyAmplification:
    def test_worked_example(self):
        key = [1, 0, 1, 1, 0, 1]
        out = privacy_amplify(key, EveBound(3), 1, subsets=[[0, 1, 2, 3], [2, 3, 4, 5]])
        np.testing.assert_array_equal(out, [1, 1])

    def test_output_length(self):
        key = rng(13).integers(0, 2, 500)
        out = privacy_amplify(key, EveBound(40), 16, rng(14))
        assert out.size == 500 - 40 - 16

    def test_zero_bound_keeps_length(self):
        key = rng(15).integers(0, 2, 64)
        assert privacy_amplify(key, EveBound(0), 0, rng(16)).size == 64

    def test_same_seed_same_output(self):
        key = rng(17).integers(0, 2, 300)
        a = privacy_amplify(key, EveBound(10), 16, rng(18))
        b = privacy_amplify(key, EveBound(10), 16, rng(18))
        np.testing.assert_array_equal(a, b)

    def test_packed_parities_match_explicit_masks(self):
        key = rng(19).integers(0, 2, 77)
        masks = random_subset_masks(77, 77 - 5 - 3, rng(20))
        out = privacy_amplify(key, EveBound(5), 3, rng(20))
        expected = (masks.astype(int) @ key) % 2
        np.testing.assert_array_equal(out, expected)

    def test_subset_inclusion_half(self):
        masks = random_subset_masks(200, 500, rng(21))
        assert_within_sigma(float(masks.mean()), 0.5, masks.size)

    def test_eve_guess_is_coin_flip(self):
        # Eve knows the first t bits and predicts each output parity from them
        n, t, s = 32, 8, 4
        r = rng(22)
        hits = total = 0
        for _ in range(500):
            key = r.integers(0, 2, n)
            seed = int(r.integers(0, 2**32))
            out = privacy_amplify(key, EveBound(t), s, np.random.default_rng(seed))
            masks = random_subset_masks(n, n - t - s, np.random.default_rng(seed))
            guess = (masks[:, :t].astype(int) @ key[:t]) % 2
            hits += int(np.count_nonzero(guess == out))
            total += out.size
        assert total == 10_000
        assert_within_sigma(hits / total, 0.5, total)

    def test_bound_too_large(self):
        with pytest.raises(ValueError):
            privacy_amplify([0, 1, 1, 0], EveBound(2), 2, rng())

    def test_explicit_subset_validation(self):
        with pytest.raises(ValueError):
            privacy_amplify([0, 1, 1, 0], EveBound(0), 2, subsets=[[0, 1]])
        with pytest.raises(ValueError):
            privacy_amplify([0, 1, 1, 0], EveBound(0), 3, subsets=[[4]])

    def test_random_subsets_need_rng(self):
        with pytest.raises(ValueError):
            privacy_amplify([0, 1, 1, 0], EveBound(0), 0)


class TestConfirmation:
    def test_equal_keys_confirm(self):
        key = rng(23).integers(0, 2, 1000)
        assert confirm_key(key, key.copy())

    def test_one_bit_difference_detected(self):
        key = rng(24).integers(0, 2, 1000)
        other = key.copy()
        other[500] ^= 1
        assert not confirm_key(key, other)

    def test_length_is_part_of_digest(self):
        assert not confirm_key([0], [0, 0])
        assert confirm_key([], [])

    def test_digest_size(self):
        assert len(key_digest([1, 0, 1])) == 8


class TestKeyMaterial:
    def test_forward_only(self):
        raw = KeyMaterial(np.array([0, 1, 1, 0]), "raw")
        sifted = raw.advance("sifted", np.array([0, 1]), leaked=0)
        rec = sifted.advance("reconciled", np.array([0, 1]), leaked=3)
        assert rec.leaked_bits == 3
        with pytest.raises(ValueError):
            rec.advance("sifted", np.array([0]))
        with pytest.raises(ValueError):
            rec.advance("reconciled", np.array([0]))

    def test_never_lengthens(self):
        with pytest.raises(ValueError):
            KeyMaterial(np.array([0]), "raw").advance("sifted", np.array([0, 1]))

    def test_rejects_unknown_stage(self):
        with pytest.raises(ValueError):
            KeyMaterial(np.array([0]), "cooked")


class TestEveBound:
    def test_formula(self):
        assert eve_bound(1000, 0.05).t == 100
        assert eve_bound(1000, 0.05, leaked_bits=30).t == 130
        assert eve_bound(1000, 0.0).t == 0
        assert eve_bound(999, 0.01).t == math.ceil(999 * 0.02)

    def test_capped_at_key_length(self):
        assert eve_bound(10, 0.5, leaked_bits=20).t == 10

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            EveBound(-1)
