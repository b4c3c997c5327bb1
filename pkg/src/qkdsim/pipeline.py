"""Classical stages that follow the quantum exchange, applied to a SessionRecord.

Order: sifted key -> public error sample -> continue/abort decision ->
reconciliation -> Eve bound -> privacy amplification -> key confirmation.
Authentication of the public channel is assumed, not simulated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .postprocessing import (
    CONFIRM_DIGEST_BITS,
    KeyMaterial,
    confirm_key,
    default_block_schedule,
    estimate_qber,
    eve_bound,
    parity_reconcile,
    privacy_amplify,
)
from .protocols.bb84 import DECISION_METRICS, bb84_decision, decision_value
from .protocols.record import SessionRecord
from .rng import Streams


@dataclass(frozen=True)
class PostprocessingParams:
    sample_fraction: float = 0.25
    block_schedule: Optional[tuple[int, ...]] = None
    eve_factor: float = 2.0
    safety_margin: int = 16
    decision_metric: str = "sifted_qber"
    threshold: float = 0.11

    def __post_init__(self) -> None:
        if not 0.0 < self.sample_fraction < 1.0:
            raise ValueError("sample_fraction must lie strictly between 0 and 1")
        if self.block_schedule is not None:
            sched = tuple(int(k) for k in self.block_schedule)
            if not sched or any(k < 1 for k in sched):
                raise ValueError("block_schedule must be a nonempty list of positive sizes")
            object.__setattr__(self, "block_schedule", sched)
        if self.eve_factor < 0:
            raise ValueError("eve_factor must be nonnegative")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be nonnegative")
        if self.decision_metric not in DECISION_METRICS:
            raise ValueError(f"decision_metric must be one of {DECISION_METRICS}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")


def _empty_outputs(record: SessionRecord) -> None:
    record.stats.setdefault("final_key_length", 0)
    record.stats.setdefault("final_key_rate", 0.0)
    record.stats.setdefault("leaked_bits", 0)


def postprocess(record: SessionRecord, params: PostprocessingParams, streams: Streams) -> SessionRecord:
    """Run the classical stages in place; aborts are recorded, never raised."""
    stats = record.stats
    stats["decision"] = "abort"
    record.stages["raw"] = KeyMaterial(record.raw_key_a, "raw")
    if record.aborted:
        _empty_outputs(record)
        return record
    if record.sifted_indices.size == 0:
        record.abort("empty sifted key")
        _empty_outputs(record)
        return record

    sifted = record.stages["raw"].advance("sifted", record.sifted_key_a)
    record.stages["sifted"] = sifted
    public = streams["postprocess"]
    est, rem_a, rem_b, n_sampled = estimate_qber(record.sifted_key_a, record.sifted_key_b, params.sample_fraction, public)
    stats["qber_estimate"] = est
    stats["n_sampled"] = n_sampled

    if bb84_decision(record, params.threshold, params.decision_metric) == "abort":
        value = decision_value(record, params.decision_metric)
        record.abort(f"{params.decision_metric} {value:.4f} exceeds threshold {params.threshold}")
        _empty_outputs(record)
        return record
    if rem_a.size == 0:
        record.abort("no key left after error estimation")
        _empty_outputs(record)
        return record

    schedule = params.block_schedule or default_block_schedule(est, rem_a.size)
    corrected_b, leaked = parity_reconcile(rem_a, rem_b, schedule, public)
    reconciled = sifted.advance("reconciled", rem_a, leaked)
    record.stages["reconciled"] = reconciled
    stats["block_schedule"] = list(schedule)
    stats["reconciliation_leak"] = leaked
    stats["residual_errors"] = int(np.count_nonzero(rem_a != corrected_b))

    bound = eve_bound(rem_a.size, est, params.eve_factor, leaked)
    stats["eve_bound"] = bound.t
    pa_seed = int(public.integers(0, 2**63 - 1))
    try:
        final_a = privacy_amplify(rem_a, bound, params.safety_margin, np.random.default_rng(pa_seed))
        final_b = privacy_amplify(corrected_b, bound, params.safety_margin, np.random.default_rng(pa_seed))
    except ValueError as exc:
        record.abort(str(exc))
        stats["leaked_bits"] = reconciled.leaked_bits
        _empty_outputs(record)
        return record

    final = reconciled.advance("final", final_a, CONFIRM_DIGEST_BITS)
    record.stages["final"] = final
    record.stages["final_b"] = KeyMaterial(final_b, "final", final.leaked_bits)
    stats["leaked_bits"] = final.leaked_bits
    stats["confirmed"] = confirm_key(final_a, final_b)
    if not stats["confirmed"]:
        record.abort("key confirmation failed")
        stats["final_key_length"] = 0
        stats["final_key_rate"] = 0.0
        return record
    stats["final_key_length"] = int(final_a.size)
    stats["final_key_rate"] = final_a.size / record.n_slots
    stats["decision"] = "continue"
    return record
