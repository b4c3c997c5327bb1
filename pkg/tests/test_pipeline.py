import numpy as np
import pytest

from qkdsim.channel import AdversaryConfig, ChannelConfig
from qkdsim.pipeline import PostprocessingParams, postprocess
from qkdsim.postprocessing import CONFIRM_DIGEST_BITS, STAGES
from qkdsim.protocols import run_bb84, run_e91, run_sarg04
from qkdsim.rng import Streams


def processed(record, seed, **params):
    return postprocess(record, PostprocessingParams(**params), Streams(seed, 0))


@pytest.fixture(scope="module")
def noisy_bb84():
    rec = run_bb84(40_000, channel=ChannelConfig(flip_probability=0.03), seed=31)
    return processed(rec, 31)


class TestStages:
    def test_established(self, noisy_bb84):
        assert noisy_bb84.stats["decision"] == "continue"
        assert not noisy_bb84.aborted
        assert noisy_bb84.stats["confirmed"]

    def test_lengths_never_grow(self, noisy_bb84):
        lengths = [len(noisy_bb84.stages[s]) for s in STAGES]
        assert lengths == sorted(lengths, reverse=True)

    def test_sample_removed_before_reconciliation(self, noisy_bb84):
        st = noisy_bb84.stats
        assert len(noisy_bb84.stages["reconciled"]) == st["n_sifted"] - st["n_sampled"]

    def test_final_length_formula(self, noisy_bb84):
        st = noisy_bb84.stats
        reconciled = len(noisy_bb84.stages["reconciled"])
        assert st["final_key_length"] == reconciled - st["eve_bound"] - 16
        assert st["final_key_rate"] == st["final_key_length"] / noisy_bb84.n_slots

    def test_both_final_keys_equal(self, noisy_bb84):
        np.testing.assert_array_equal(noisy_bb84.stages["final"].bits, noisy_bb84.stages["final_b"].bits)
        assert noisy_bb84.stats["residual_errors"] == 0

    def test_leak_accounting_nondecreasing(self, noisy_bb84):
        leaks = [noisy_bb84.stages[s].leaked_bits for s in STAGES]
        assert leaks == sorted(leaks)
        assert leaks[2] == noisy_bb84.stats["reconciliation_leak"]
        assert leaks[3] == leaks[2] + CONFIRM_DIGEST_BITS
        assert noisy_bb84.stats["leaked_bits"] == leaks[3]

    def test_eve_bound_includes_leak(self, noisy_bb84):
        st = noisy_bb84.stats
        assert st["eve_bound"] >= st["reconciliation_leak"]

    def test_deterministic(self):
        runs = [processed(run_bb84(5000, seed=3), 3) for _ in range(2)]
        np.testing.assert_array_equal(runs[0].stages["final"].bits, runs[1].stages["final"].bits)
        assert runs[0].stats == runs[1].stats


class TestDecisions:
    def test_intercept_resend_aborts_before_reconciliation(self):
        rec = processed(run_bb84(20_000, adversary=AdversaryConfig("intercept-resend"), seed=32), 32)
        assert rec.aborted
        assert "sifted_qber" in rec.abort_reason
        assert "reconciled" not in rec.stages
        assert rec.stats["final_key_length"] == 0 and rec.stats["final_key_rate"] == 0.0

    def test_aggregate_metric_strict_threshold(self):
        rec = processed(run_bb84(20_000, seed=33), 33, decision_metric="aggregate", threshold=0.5)
        # a clean channel sits near 0.5; the outcome must follow the strict rule exactly
        expected = "abort" if rec.stats["aggregate_error_rate"] > 0.5 else "continue"
        assert rec.stats["decision"] == expected

    def test_protocol_abort_propagates(self):
        rec = run_e91(2000, source_state=None, channel=ChannelConfig(flip_probability=0.5), seed=34)
        assert rec.aborted
        out = processed(rec, 34)
        assert out.stats["decision"] == "abort"
        assert out.stats["final_key_length"] == 0

    def test_tiny_key_aborts_in_privacy_amplification(self):
        rec = processed(run_bb84(40, seed=35), 35)
        assert rec.aborted
        assert rec.stats["final_key_length"] == 0

    def test_e91_key_established(self):
        rec = processed(run_e91(20_000, seed=36), 36)
        assert rec.stats["decision"] == "continue"
        assert rec.stats["final_key_length"] > 0

    def test_sarg04_key_established(self):
        rec = processed(run_sarg04(20_000, seed=37), 37)
        assert rec.stats["decision"] == "continue"


class TestParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(sample_fraction=0.0),
            dict(sample_fraction=1.0),
            dict(block_schedule=()),
            dict(block_schedule=(0,)),
            dict(eve_factor=-1.0),
            dict(safety_margin=-1),
            dict(decision_metric="vibes"),
            dict(threshold=1.5),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PostprocessingParams(**kwargs)

    def test_explicit_schedule_used(self):
        rec = processed(run_bb84(8000, seed=38), 38, block_schedule=(50, 100))
        assert rec.stats["block_schedule"] == [50, 100]
