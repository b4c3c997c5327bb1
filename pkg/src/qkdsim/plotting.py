"""Figures for run reports and replay transcripts (written to files, never shown)."""
from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bell import LHV_BOUND, TSIRELSON_BOUND, estimate_correlation  # noqa: E402
from .experiment import RunReport  # noqa: E402
from .protocols.record import SessionRecord  # noqa: E402
from .report import replay_rows  # noqa: E402

golden = (math.sqrt(5) - 1.0) / 2.0
fig_width = 6.0

STYLE = {
    "axes": dict(labelsize=9, titlesize=9, linewidth=0.6, grid=True),
    "grid": dict(linewidth=0.4, alpha=0.4),
    "figure": dict(dpi=110, figsize=[fig_width, fig_width * golden], facecolor="white"),
    "font": dict(family="sans-serif", size=8),
    "legend": dict(fontsize=7, frameon=False),
    "lines": dict(linewidth=1.0, markersize=4),
    "xtick": dict(labelsize=8),
    "ytick": dict(labelsize=8),
    "savefig": dict(dpi=150, bbox="tight"),
}

colors = ["#08589e", "#d95f0e", "#31a354", "#756bb1"]


@contextmanager
def _styled() -> Iterator[None]:
    params = {f"{group}.{k}": v for group, vals in STYLE.items() for k, v in vals.items()}
    with matplotlib.rc_context(params):
        yield


def _values(trials: list[dict], key: str) -> np.ndarray:
    return np.array([np.nan if t.get(key) is None else t[key] for t in trials], dtype=float)


def plot_error_rates(report: RunReport, path: Path) -> Path:
    trials = report.trials
    x = np.arange(len(trials))
    with _styled():
        fig, ax = plt.subplots()
        ax.plot(x, _values(trials, "qber"), "o-", color=colors[0], label="sifted QBER")
        ax.plot(x, _values(trials, "aggregate_error_rate"), "s--", color=colors[1], label="aggregate error rate")
        threshold = report.config["decision"]["threshold"]
        ax.axhline(threshold, color="0.3", ls=":", label=f"threshold ({report.config['decision']['metric']})")
        ax.set_xlabel("trial")
        ax.set_ylabel("error rate")
        ax.set_ylim(0, 1)
        ax.legend(loc="best")
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_key_rate(report: RunReport, path: Path) -> Path:
    trials = report.trials
    x = np.arange(len(trials))
    rate = _values(trials, "final_key_rate")
    aborted = np.array([t["decision"] != "continue" for t in trials])
    with _styled():
        fig, ax = plt.subplots()
        ax.bar(x[~aborted], rate[~aborted], color=colors[2], label="key established")
        ax.bar(x[aborted], np.zeros(aborted.sum()), color=colors[1], label="aborted")
        ax.plot(x[aborted], np.zeros(aborted.sum()), "x", color=colors[1])
        ax.set_xlabel("trial")
        ax.set_ylabel("final key bits per slot")
        ax.legend(loc="best")
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_chsh(report: RunReport, path: Path) -> Path:
    trials = report.trials
    x = np.arange(len(trials))
    s = np.abs(_values(trials, "chsh_s"))
    sigma = _values(trials, "chsh_sigma")
    with _styled():
        fig, ax = plt.subplots()
        ax.errorbar(x, s, yerr=3 * sigma, fmt="o", color=colors[0], capsize=2, label="|S| with 3 sigma")
        ax.axhline(LHV_BOUND, color=colors[1], ls="--", label="local bound 2")
        ax.axhline(TSIRELSON_BOUND, color=colors[2], ls=":", label="Tsirelson bound")
        ax.set_xlabel("trial")
        ax.set_ylabel("|S|")
        ax.set_ylim(0, 3.2)
        ax.legend(loc="lower right")
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_correlations(record: SessionRecord, path: Path) -> Optional[Path]:
    tally = record.tally
    if tally is None:
        return None
    pairs = [(p, q) for p, q in tally.pairs() if tally.total(p, q) > 0]
    if not pairs:
        return None
    labels = [f"{p},{q}" for p, q in pairs]
    e = [estimate_correlation(tally, p, q) for p, q in pairs]
    with _styled():
        fig, ax = plt.subplots()
        ax.bar(np.arange(len(pairs)), e, color=colors[3])
        ax.axhline(0, color="0.3", lw=0.6)
        ax.set_xticks(np.arange(len(pairs)))
        ax.set_xticklabels(labels, rotation=45, ha="right")
        ax.set_ylim(-1.05, 1.05)
        ax.set_ylabel("E(p, q)")
        ax.set_title(f"{record.protocol} correlations, trial 0")
        fig.savefig(path)
        plt.close(fig)
    return path


def render_run_figures(report: RunReport, directory) -> list[Path]:
    """Write the figures for a run into ``directory`` and return their paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = [plot_error_rates(report, out / "error_rates.png"), plot_key_rate(report, out / "key_rate.png")]
    if any(t.get("chsh_s") is not None for t in report.trials):
        paths.append(plot_chsh(report, out / "chsh.png"))
    if report.records:
        corr = plot_correlations(report.records[0], out / "correlations.png")
        if corr is not None:
            paths.append(corr)
    return paths


def render_replay_figure(record: SessionRecord, directory) -> Path:
    """Slot-by-slot transcript: basis agreement, forced errors and sifted-key mismatches."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rows = replay_rows(record)
    n = len(rows)
    grid = np.zeros((4, n))
    for i, r in enumerate(rows):
        grid[0, i] = r["basis_match"] == "C"
        grid[1, i] = r["eve_basis"] is not None and r["eve_basis"] != r["alice_basis"]
        grid[2, i] = r["forced_error"]
        grid[3, i] = r["alice_key_bit"] is not None and r["alice_key_bit"] != r["bob_key_bit"]
    path = out / "replay_transcript.png"
    with _styled():
        fig, ax = plt.subplots(figsize=(max(fig_width, 0.22 * n), 2.2))
        ax.imshow(grid, aspect="auto", cmap="Blues", vmin=0, vmax=1.4, interpolation="nearest")
        ax.set_yticks(range(4))
        ax.set_yticklabels(["bases agree", "Eve basis differs", "forced error", "sifted mismatch"])
        ax.set_xticks(range(n))
        ax.set_xticklabels([str(i) for i in range(n)], fontsize=6)
        ax.set_xlabel("slot")
        ax.grid(False)
        fig.savefig(path)
        plt.close(fig)
    return path
