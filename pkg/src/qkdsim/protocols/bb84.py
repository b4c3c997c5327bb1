"""BB84: four polarizations in two conjugate bases, sifting by basis match."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..channel import AdversaryConfig, ChannelConfig
from ..quantum import BB84_BASES, measure_photon
from ..rng import Streams
from .optical import send_slots
from .record import NO_BIT, SessionRecord, key_statistics

DECISION_METRICS = ("aggregate", "sifted_qber")


def sift_bb84(record: SessionRecord) -> np.ndarray:
    """Indices of detected slots where Alice's and Bob's bases agree."""
    return np.flatnonzero(record.detected & (record.alice_bases == record.bob_bases))


def _finish(record: SessionRecord, transport, streams: Streams) -> SessionRecord:
    idx = sift_bb84(record)
    record.sifted_indices = idx
    record.sifted_key_a = record.alice_bits[idx].astype(np.int8)
    record.sifted_key_b = record.bob_outcomes[idx].astype(np.int8)
    record.eve = transport.eve
    if transport.eve is not None:
        eve_bits = np.full(record.n_slots, NO_BIT, dtype=np.int8)
        for e in transport.eve.entries:
            if e.bit is not None:
                eve_bits[e.slot] = e.bit
        # PNS: the stored photon is read in Alice's basis once it is announced
        entries = transport.eve.by_slot()
        for slot, pol in transport.stored.items():
            if record.detected[slot]:
                basis = BB84_BASES[record.alice_bases[slot]]
                bit = measure_photon(pol, basis, streams.eve)
                eve_bits[slot] = bit
                entry = entries[slot]
                entry.basis, entry.bit = basis.analyzer_angle, bit
        record.eve_bits = eve_bits
    record.stats = key_statistics(record)
    return record


def run_bb84(
    n_slots: int,
    channel: ChannelConfig = ChannelConfig(),
    adversary: AdversaryConfig = AdversaryConfig(),
    seed: int = 0,
    trial: int = 0,
) -> SessionRecord:
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    streams = Streams(seed, trial)
    bits = streams.alice.integers(0, 2, n_slots, dtype=np.int8)
    a_bases = streams.alice.integers(0, 2, n_slots, dtype=np.int8)
    b_bases = streams.bob.integers(0, 2, n_slots, dtype=np.int8)
    pols = [BB84_BASES[b].polarization(x) for x, b in zip(bits, a_bases)]
    transport = send_slots(pols, b_bases, channel, adversary, streams)
    record = SessionRecord("bb84", n_slots, bits, a_bases, b_bases, transport.bob_outcomes, transport.detected)
    return _finish(record, transport, streams)


def replay_bb84(
    alice_bits: Sequence[int],
    alice_bases: Sequence[int],
    bob_bases: Sequence[int],
    eve_bases: Optional[Sequence[Optional[int]]] = None,
    error_slots: Sequence[int] = (),
    seed: int = 0,
    channel: ChannelConfig = ChannelConfig(),
) -> SessionRecord:
    """BB84 with every choice supplied explicitly.

    Bases are indices into ``(rectilinear, diagonal)``. ``eve_bases`` entries
    may be None where Eve leaves the slot alone. ``error_slots`` (0-based)
    receive a forced transmission error. Measurement outcomes that are
    genuinely random (mismatched bases) still come from the seeded streams.
    """
    n = len(alice_bits)
    if n < 1:
        raise ValueError("replay needs at least one slot")
    lengths = {"alice_bases": len(alice_bases), "bob_bases": len(bob_bases)}
    if eve_bases is not None:
        lengths["eve_bases"] = len(eve_bases)
    for name, length in lengths.items():
        if length != n:
            raise ValueError(f"{name} has length {length}, expected {n}")
    for name, seq in (("alice_bits", alice_bits), ("alice_bases", alice_bases), ("bob_bases", bob_bases)):
        if any(v not in (0, 1) for v in seq):
            raise ValueError(f"{name} entries must be 0 or 1")
    if eve_bases is not None and any(v not in (0, 1, None) for v in eve_bases):
        raise ValueError("eve_bases entries must be 0, 1 or null")
    bad = [s for s in error_slots if not 0 <= s < n]
    if bad:
        raise ValueError(f"error slots out of range: {bad}")

    streams = Streams(seed)
    bits = np.asarray(alice_bits, dtype=np.int8)
    a_bases = np.asarray(alice_bases, dtype=np.int8)
    b_bases = np.asarray(bob_bases, dtype=np.int8)
    pols = [BB84_BASES[b].polarization(x) for x, b in zip(bits, a_bases)]
    transport = send_slots(pols, b_bases, channel, AdversaryConfig(), streams, eve_bases=eve_bases, error_slots=error_slots)
    record = SessionRecord("bb84", n, bits, a_bases, b_bases, transport.bob_outcomes, transport.detected)
    if eve_bases is not None:
        record.public["eve_bases"] = np.array([-1 if e is None else e for e in eve_bases], dtype=np.int8)
    if error_slots:
        record.public["error_slots"] = np.asarray(sorted(error_slots), dtype=np.int64)
    return _finish(record, transport, streams)


def decision_value(record: SessionRecord, metric: str = "aggregate") -> Optional[float]:
    if metric not in DECISION_METRICS:
        raise ValueError(f"metric must be one of {DECISION_METRICS}")
    if metric == "aggregate":
        return record.stats.get("aggregate_error_rate")
    est = record.stats.get("qber_estimate")
    return est if est is not None else record.stats.get("qber")


def bb84_decision(record: SessionRecord, threshold: float = 0.5, metric: str = "aggregate") -> str:
    """``"abort"`` iff the chosen error metric strictly exceeds ``threshold``."""
    value = decision_value(record, metric)
    if value is None:
        return "abort"
    return "abort" if value > threshold else "continue"
