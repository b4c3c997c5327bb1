"""Batch trials and replays built on the protocol and post-processing layers."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, ReplayConfig, resolve_state
from .pipeline import postprocess
from .protocols import run_agm06, run_bb84, run_e91, run_sarg04
from .protocols.bb84 import bb84_decision, decision_value, replay_bb84
from .protocols.record import SessionRecord
from .rng import Streams

# Column order of per-trial summaries; also the CSV header.
TRIAL_FIELDS = (
    "trial",
    "protocol",
    "n_slots",
    "n_detected",
    "n_sifted",
    "sift_fraction",
    "sifted_yield",
    "n_errors",
    "qber",
    "qber_estimate",
    "aggregate_error_rate",
    "eve_agreement",
    "chsh_s",
    "chsh_sigma",
    "bell_verdict",
    "agm06_q",
    "agm06_s_raw",
    "reconciliation_leak",
    "residual_errors",
    "eve_bound",
    "leaked_bits",
    "final_key_length",
    "final_key_rate",
    "decision",
    "abort_reason",
)

# Per-trial metrics summarized by mean and standard deviation.
AGGREGATED_METRICS = ("sift_fraction", "qber", "qber_estimate", "aggregate_error_rate", "chsh_s", "final_key_rate")

EXIT_ESTABLISHED = 0
EXIT_USAGE = 1
EXIT_ABORTED = 2


@dataclass
class RunReport:
    version: str
    config: dict
    trials: list[dict]
    aggregate: dict
    records: list[SessionRecord] = field(default_factory=list, repr=False, compare=False)

    @property
    def exit_code(self) -> int:
        return EXIT_ESTABLISHED if all(t["decision"] == "continue" for t in self.trials) else EXIT_ABORTED


def run_session(config: ExperimentConfig, trial: int = 0) -> SessionRecord:
    """One protocol session plus post-processing for trial index ``trial``."""
    common = dict(channel=config.channel, adversary=config.adversary, seed=config.seed, trial=trial)
    if config.protocol == "bb84":
        record = run_bb84(config.n_slots, **common)
    elif config.protocol == "sarg04":
        record = run_sarg04(config.n_slots, **common)
    elif config.protocol == "e91":
        state = resolve_state(config.source_state)
        record = run_e91(config.n_slots, source_state=state, check_fraction=config.check_fraction, **common)
    else:
        record = run_agm06(config.n_slots, source_state=resolve_state(config.source_state), **common)
    return postprocess(record, config.postprocessing, Streams(config.seed, trial))


def summarize(record: SessionRecord, trial: int) -> dict[str, Any]:
    stats = record.stats
    row: dict[str, Any] = {"trial": trial, "protocol": record.protocol}
    for key in TRIAL_FIELDS[2:]:
        row[key] = stats.get(key)
    row["decision"] = "abort" if record.aborted else stats.get("decision", "continue")
    row["abort_reason"] = record.abort_reason
    return row


def _mean_std(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def aggregate(trials: list[dict]) -> dict[str, Any]:
    """Summary statistics recomputable from the per-trial rows alone."""
    n_abort = sum(1 for t in trials if t["decision"] != "continue")
    out: dict[str, Any] = {"n_trials": len(trials), "n_continue": len(trials) - n_abort, "n_abort": n_abort}
    for key in AGGREGATED_METRICS:
        values = [t[key] for t in trials if t.get(key) is not None and not math.isnan(t[key])]
        mean, std = _mean_std(values)
        out[f"{key}_mean"] = mean
        out[f"{key}_std"] = std
    return out


def _run_indexed(args: tuple[ExperimentConfig, int]) -> SessionRecord:
    config, trial = args
    return run_session(config, trial)


def run_experiment(config: ExperimentConfig, keep_records: bool = False) -> RunReport:
    """Run ``config.trials`` independent trials; results merge in trial order."""
    jobs = [(config, t) for t in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.trials)) as pool:
            records = list(pool.map(_run_indexed, jobs))
    else:
        records = [_run_indexed(job) for job in jobs]
    trials = [summarize(rec, t) for t, rec in enumerate(records)]
    return RunReport(
        version=__version__,
        config=config.to_dict(),
        trials=trials,
        aggregate=aggregate(trials),
        records=records if keep_records else [],
    )


def replay(config: ReplayConfig) -> SessionRecord:
    """Replay an explicit BB84 transcript and apply the configured decision."""
    record = replay_bb84(
        config.alice_bits,
        config.alice_bases,
        config.bob_bases,
        eve_bases=config.eve_bases,
        error_slots=config.error_slots,
        seed=config.seed,
    )
    decision = bb84_decision(record, config.threshold, config.metric)
    record.stats["decision"] = decision
    record.stats["decision_metric"] = config.metric
    record.stats["threshold"] = config.threshold
    if decision == "abort":
        value = decision_value(record, config.metric)
        record.abort(
            f"{config.metric} {value:.4f} exceeds threshold {config.threshold}" if value is not None else "no sifted key"
        )
    return record
