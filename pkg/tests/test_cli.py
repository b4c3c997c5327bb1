import json
import subprocess
import sys
from pathlib import Path

import pytest

from qkdsim.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_BB84 = "protocol: bb84\nn_slots: 2000\nseed: 5\ntrials: 2\n"
SMALL_IR = SMALL_BB84 + "adversary:\n  strategy: intercept-resend\n"
SMALL_E91 = "protocol: e91\nn_pairs: 3000\nseed: 5\n"


class TestRun:
    def test_established_exits_zero(self, tmp_config, capsys):
        assert main(["run", "--config", str(tmp_config(SMALL_BB84))]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3

    def test_abort_exits_two(self, tmp_config, capsys):
        assert main(["run", "--config", str(tmp_config(SMALL_IR))]) == 2
        capsys.readouterr()

    def test_flags_override_config(self, tmp_config, capsys):
        path = str(tmp_config(SMALL_BB84))
        assert main(["run", "--config", path, "--trials", "3", "--seed", "9", "--format", "csv"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 4 and out[0].startswith("trial,protocol")

    def test_out_file(self, tmp_config, tmp_path, capsys):
        out = tmp_path / "report.jsonl"
        assert main(["run", "--config", str(tmp_config(SMALL_BB84)), "--out", str(out)]) == 0
        assert capsys.readouterr().out == ""
        assert json.loads(out.read_text().splitlines()[-1])["record"] == "aggregate"

    def test_unwritable_out_exits_one(self, tmp_config, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_config(SMALL_BB84)), "--out", str(tmp_path / "no" / "x.txt")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_invalid_config_exits_one(self, tmp_config, capsys):
        assert main(["run", "--config", str(tmp_config("protocol: bb84\nn_slots: 10\n"))]) == 1
        assert "seed" in capsys.readouterr().err

    def test_missing_config_exits_one(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.yaml")]) == 1
        capsys.readouterr()

    def test_invalid_override_exits_one(self, tmp_config, capsys):
        assert main(["run", "--config", str(tmp_config(SMALL_BB84)), "--trials", "0"]) == 1
        assert "trials" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [[], ["run"], ["run", "--config"], ["fly"], ["run", "--config", "x", "--seed", "abc"]])
    def test_usage_errors_exit_one(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 1
        capsys.readouterr()

    def test_figures(self, tmp_config, tmp_path, capsys):
        figs = tmp_path / "figs"
        assert main(["run", "--config", str(tmp_config(SMALL_E91)), "--figures", str(figs)]) == 0
        capsys.readouterr()
        names = sorted(p.name for p in figs.iterdir())
        assert names == ["chsh.png", "correlations.png", "error_rates.png", "key_rate.png"]
        assert all((figs / n).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for n in names)


class TestReplay:
    def test_clean_exits_zero(self, capsys):
        assert main(["replay", "--config", str(CONFIGS / "replay_clean.yaml")]) == 0
        out = capsys.readouterr().out
        assert "13/29" in out and "continue" in out

    def test_eve_exits_two(self, capsys):
        assert main(["replay", "--config", str(CONFIGS / "replay_eve.yaml"), "--format", "json-lines"]) == 2
        summary = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert summary["aggregate_fraction"] == "24/29"

    def test_figure(self, tmp_path, capsys):
        code = main(["replay", "--config", str(CONFIGS / "replay_eve.yaml"), "--figures", str(tmp_path)])
        assert code == 2
        capsys.readouterr()
        assert (tmp_path / "replay_transcript.png").stat().st_size > 0

    def test_length_mismatch_exits_one(self, tmp_config, capsys):
        path = tmp_config("alice_bits: '0101'\nalice_bases: '++++'\nbob_bases: '+++'\n")
        assert main(["replay", "--config", str(path)]) == 1
        assert "bob_bases" in capsys.readouterr().err


class TestValidate:
    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
    def test_shipped_configs_valid(self, path, capsys):
        assert main(["validate", "--config", str(path)]) == 0
        assert capsys.readouterr().out.startswith("valid ")

    def test_invalid_reports_field_path(self, tmp_config, capsys):
        path = tmp_config("protocol: e91\nn_pairs: 10\nseed: 1\nadversary:\n  strategy: pns\n")
        assert main(["validate", "--config", str(path)]) == 1
        assert "adversary.strategy" in capsys.readouterr().err


class TestModuleEntryPoint:
    def test_python_dash_m(self):
        proc = subprocess.run(
            [sys.executable, "-m", "qkdsim", "validate", "--config", str(CONFIGS / "bb84_clean.yaml")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.startswith("valid experiment config")
