"""Session transcript shared by every protocol."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..bell import CorrelationTally
from ..channel import EveRecord

NO_BIT = -1


@dataclass
class SessionRecord:
    """Full transcript of one protocol run.

    Per-slot arrays all have length ``n_slots``. For prepare-and-measure
    protocols ``alice_bits`` are the encoded bits and ``bob_outcomes`` Bob's
    raw measurement results; for pair protocols both hold outcome bits
    (0 for spin +1, 1 for spin -1). Undetected slots carry ``NO_BIT``.
    ``public`` holds protocol-specific announcements, one array per field.
    """

    protocol: str
    n_slots: int
    alice_bits: np.ndarray
    alice_bases: np.ndarray
    bob_bases: np.ndarray
    bob_outcomes: np.ndarray
    detected: np.ndarray
    public: dict[str, np.ndarray] = field(default_factory=dict)
    sifted_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sifted_key_a: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    sifted_key_b: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    eve: Optional[EveRecord] = None
    eve_bits: Optional[np.ndarray] = None
    tally: Optional[CorrelationTally] = None
    stats: dict[str, Any] = field(default_factory=dict)
    aborted: bool = False
    abort_reason: Optional[str] = None
    # filled by the post-processing pipeline
    stages: dict[str, Any] = field(default_factory=dict)

    @property
    def detected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.detected)

    @property
    def raw_key_a(self) -> np.ndarray:
        return self.alice_bits[self.detected].astype(np.int8)

    @property
    def raw_key_b(self) -> np.ndarray:
        return self.bob_outcomes[self.detected].astype(np.int8)

    def abort(self, reason: str) -> None:
        if not self.aborted:
            self.aborted = True
            self.abort_reason = reason


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def key_statistics(record: SessionRecord) -> dict[str, Any]:
    """Counts and rates every protocol reports, derived from the transcript."""
    n = record.n_slots
    n_detected = int(np.count_nonzero(record.detected))
    n_sifted = int(record.sifted_indices.size)
    errors = int(np.count_nonzero(record.sifted_key_a != record.sifted_key_b))
    stats: dict[str, Any] = {
        "n_slots": n,
        "n_detected": n_detected,
        "n_sifted": n_sifted,
        "n_errors": errors,
        "sift_fraction": _ratio(n_sifted, n_detected),
        "sifted_yield": _ratio(n_sifted, n),
        "qber": _ratio(errors, n_sifted),
        # slots that did not end as an agreeing sifted bit, over all slots sent
        "aggregate_error_rate": _ratio(n - (n_sifted - errors), n),
    }
    if record.eve_bits is not None and n_sifted:
        eve = record.eve_bits[record.sifted_indices]
        known = eve != NO_BIT
        stats["eve_coverage"] = float(np.mean(known))
        stats["eve_agreement"] = (
            float(np.mean(eve[known] == record.sifted_key_a[known])) if np.any(known) else None
        )
    return stats


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)
