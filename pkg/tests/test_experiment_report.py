import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from qkdsim import __version__
from qkdsim.config import ExperimentConfig, ReplayConfig, load_replay
from qkdsim.experiment import (
    AGGREGATED_METRICS,
    EXIT_ABORTED,
    EXIT_ESTABLISHED,
    TRIAL_FIELDS,
    aggregate,
    replay,
    run_experiment,
)
from qkdsim.report import (
    AGGREGATE_LABEL,
    REPLAY_FIELDS,
    SIFTED_QBER_LABEL,
    emit_replay,
    emit_report,
    replay_rows,
    write_output,
)

HERE = Path(__file__).resolve().parent
GOLDEN = HERE / "golden"
CONFIGS = HERE.parent / "configs"

SMALL = {"protocol": "bb84", "n_slots": 2000, "seed": 42, "trials": 2, "channel": {"flip_probability": 0.02}}


def config(**overrides):
    return ExperimentConfig.from_dict({**SMALL, **overrides})


@pytest.fixture(scope="module")
def small_report():
    return run_experiment(config())


class TestDeterminism:
    def test_golden_json_lines(self, small_report):
        assert emit_report(small_report, "json-lines") == (GOLDEN / "bb84_small.jsonl").read_text()

    def test_golden_csv(self, small_report):
        assert emit_report(small_report, "csv") == (GOLDEN / "bb84_small.csv").read_text()

    def test_repeat_run_identical(self, small_report):
        for fmt in ("json-lines", "csv", "human"):
            assert emit_report(run_experiment(config()), fmt) == emit_report(small_report, fmt)

    def test_seed_changes_output(self, small_report):
        assert emit_report(run_experiment(config(seed=43)), "csv") != emit_report(small_report, "csv")

    def test_trials_are_independent_streams(self, small_report):
        a, b = small_report.trials
        assert a["n_sifted"] != b["n_sifted"] or a["n_errors"] != b["n_errors"]

    def test_workers_do_not_change_trials(self, small_report):
        pooled = run_experiment(config(workers=2))
        assert pooled.trials == small_report.trials
        assert pooled.aggregate == small_report.aggregate


class TestAggregates:
    def test_recomputable_from_rows(self, small_report):
        for key in AGGREGATED_METRICS:
            values = [t[key] for t in small_report.trials if t[key] is not None]
            if not values:
                assert small_report.aggregate[f"{key}_mean"] is None
                continue
            assert small_report.aggregate[f"{key}_mean"] == pytest.approx(np.mean(values))
            assert small_report.aggregate[f"{key}_std"] == pytest.approx(np.std(values, ddof=1))

    def test_counts(self):
        rows = [{"decision": "continue"}, {"decision": "abort"}, {"decision": "abort"}]
        agg = aggregate([{**r, **{k: None for k in AGGREGATED_METRICS}} for r in rows])
        assert (agg["n_trials"], agg["n_continue"], agg["n_abort"]) == (3, 1, 2)

    def test_single_trial_std_zero(self):
        agg = aggregate([{"decision": "continue", **{k: 0.5 for k in AGGREGATED_METRICS}}])
        assert agg["qber_std"] == 0.0

    def test_key_rate_definition(self, small_report):
        for t in small_report.trials:
            assert t["final_key_rate"] == pytest.approx(t["final_key_length"] / t["n_slots"])

    def test_exit_code_follows_decisions(self, small_report):
        assert small_report.exit_code == EXIT_ESTABLISHED
        aborted = run_experiment(config(n_slots=3000, adversary={"strategy": "intercept-resend"}))
        assert all(t["decision"] == "abort" for t in aborted.trials)
        assert aborted.exit_code == EXIT_ABORTED


class TestFormats:
    def test_json_lines_structure(self):
        report = run_experiment(config(trials=3, n_slots=500))
        lines = emit_report(report, "json-lines").splitlines()
        assert len(lines) == 4
        records = [json.loads(line) for line in lines]
        assert [r["record"] for r in records] == ["trial"] * 3 + ["aggregate"]
        assert list(records[0])[1:] == list(TRIAL_FIELDS)
        assert records[-1]["version"] == __version__

    def test_config_echo_round_trips(self, small_report):
        tail = json.loads(emit_report(small_report, "json-lines").splitlines()[-1])
        assert ExperimentConfig.from_dict(tail["config"]) == config()

    def test_floats_have_twelve_significant_digits(self, small_report):
        first = json.loads(emit_report(small_report, "json-lines").splitlines()[0])
        assert first["qber"] == float(f"{small_report.trials[0]['qber']:.12g}")

    def test_csv_header(self, small_report):
        rows = list(csv.reader(io.StringIO(emit_report(small_report, "csv"))))
        assert tuple(rows[0]) == TRIAL_FIELDS
        assert len(rows) == 3

    def test_human_labels(self, small_report):
        text = emit_report(small_report, "human")
        assert SIFTED_QBER_LABEL in text
        assert AGGREGATE_LABEL in text
        assert "key established in 2/2 trials" in text

    def test_e91_reports_s(self):
        report = run_experiment(ExperimentConfig.from_dict({"protocol": "e91", "n_pairs": 4000, "seed": 1}))
        row = report.trials[0]
        assert row["chsh_s"] is not None and row["bell_verdict"] == "violated"
        assert "CHSH S" in emit_report(report, "human")

    def test_unknown_format(self, small_report):
        with pytest.raises(ValueError):
            emit_report(small_report, "yaml")

    def test_unwritable_destination(self, tmp_path):
        with pytest.raises(OSError):
            write_output("x", tmp_path / "missing" / "out.txt")


class TestReplay:
    def test_clean_transcript(self):
        rec = replay(load_replay(CONFIGS / "replay_clean.yaml"))
        st = rec.stats
        assert (st["n_sifted"], st["n_errors"]) == (18, 2)
        assert st["aggregate_error_rate"] == pytest.approx(13 / 29)
        assert st["decision"] == "continue"
        assert not rec.aborted

    def test_eve_transcript(self):
        rec = replay(load_replay(CONFIGS / "replay_eve.yaml"))
        st = rec.stats
        assert (st["n_sifted"], st["n_errors"]) == (7, 2)
        assert st["aggregate_error_rate"] == pytest.approx(24 / 29)
        assert st["decision"] == "abort" and rec.aborted

    def test_keys_differ_exactly_at_forced_matched_errors(self):
        cfg = load_replay(CONFIGS / "replay_clean.yaml")
        rows = replay_rows(replay(cfg))
        mismatched = [r["slot"] for r in rows if r["alice_key_bit"] is not None and r["alice_key_bit"] != r["bob_key_bit"]]
        forced_matched = [s for s in cfg.error_slots if cfg.alice_bases[s] == cfg.bob_bases[s]]
        assert mismatched == forced_matched == [3, 23]

    def test_all_bases_equal(self):
        cfg = ReplayConfig.from_dict({"alice_bits": "01101", "alice_bases": "+x+x+", "bob_bases": "+x+x+"})
        rec = replay(cfg)
        assert rec.stats["sift_fraction"] == 1.0
        np.testing.assert_array_equal(rec.sifted_key_a, rec.sifted_key_b)

    def test_conjugate_eve_brute_force(self):
        # Eve always in the wrong basis: every matched slot is a fair coin for Bob
        n = 200
        bits = "".join("01"[i % 2] for i in range(n))
        bases = "+" * n
        cfg = ReplayConfig.from_dict({"alice_bits": bits, "alice_bases": bases, "bob_bases": bases, "eve_bases": "x" * n})
        rec = replay(cfg)
        assert rec.stats["n_sifted"] == n
        q = rec.stats["qber"]
        assert abs(q - 0.5) <= 3 * math.sqrt(0.25 / n)

    def test_outputs(self):
        rec = replay(load_replay(CONFIGS / "replay_eve.yaml"))
        text = emit_replay(rec, "human")
        assert "24/29" in text and "Eve basis" in text
        lines = emit_replay(rec, "json-lines").splitlines()
        assert len(lines) == 30
        summary = json.loads(lines[-1])
        assert summary["record"] == "summary" and summary["decision"] == "abort"
        rows = list(csv.reader(io.StringIO(emit_replay(rec, "csv"))))
        assert tuple(rows[0]) == REPLAY_FIELDS and len(rows) == 30

    def test_replay_deterministic(self):
        cfg = load_replay(CONFIGS / "replay_eve.yaml")
        assert emit_replay(replay(cfg), "json-lines") == emit_replay(replay(cfg), "json-lines")
