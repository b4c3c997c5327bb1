"""Entangled-pair protocols: E91 and AGM06.

Both use spin measurements in the x-z plane (see :mod:`qkdsim.quantum`).
For the singlet Bob's outcomes are anticorrelated with Alice's at equal
settings, so Bob inverts his key bits; AGM06 inverts all of Bob's outcomes
so that its agreement probabilities read naturally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..bell import CorrelationTally, agm06_s, bell_verdict, chsh_from_tally, p_equal
from ..channel import AdversaryConfig, ChannelConfig, EveRecord, eve_intercept_pair
from ..quantum import (
    PAULI_Y,
    JointDistribution,
    TwoQubitState,
    apply_to_bob,
    exact_joint_distribution,
    measure_bob_qubit,
    sample_from,
)
from ..rng import Streams
from .record import NO_BIT, SessionRecord, key_statistics

KEY_PHASE, CHECK_PHASE = 0, 1


@dataclass(frozen=True)
class E91Settings:
    """Analyzer directions and their roles.

    The check phase uses a = alice_angles[2], a' = alice_angles[0],
    b = bob_angles[0], b' = bob_angles[2]; with the singlet this reaches
    |S| = 2*sqrt(2).
    """

    alice_angles: tuple[float, float, float] = (0.0, math.pi / 4, math.pi / 2)
    bob_angles: tuple[float, float, float] = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)
    # (alice index, bob index) pairs whose outcomes are perfectly (anti)correlated
    key_pairs: tuple[tuple[int, int], ...] = ((1, 0), (2, 1))
    # indices of a, a' on Alice's side and b, b' on Bob's
    check_alice: tuple[int, int] = (2, 0)
    check_bob: tuple[int, int] = (0, 2)

    def __post_init__(self) -> None:
        for ia, ib in self.key_pairs:
            if abs(self.alice_angles[ia] - self.bob_angles[ib]) > 1e-12:
                raise ValueError("key-phase pairs must be equal-angle pairs")
        if len(set(self.check_alice)) != 2 or len(set(self.check_bob)) != 2:
            raise ValueError("the check phase needs two distinct settings per side")


@dataclass(frozen=True)
class Agm06Settings:
    """Alice measures A0, A1, A2; Bob B1, B2. A0 = B1 carries the key."""

    alice_angles: tuple[float, float, float] = (math.pi / 4, 0.0, math.pi / 2)
    bob_angles: tuple[float, float] = (math.pi / 4, -math.pi / 4)

    def __post_init__(self) -> None:
        if abs(self.alice_angles[0] - self.bob_angles[0]) > 1e-12:
            raise ValueError("A0 and B1 must coincide for key agreement")


def _bit(outcome: int) -> int:
    return 0 if outcome == 1 else 1


class _PairSource:
    """Source state plus every state an attacker or the channel can turn it into.

    Joint distributions are memoized per (state, settings) because the set of
    reachable states is finite.
    """

    def __init__(self, state: TwoQubitState, adversary: AdversaryConfig) -> None:
        self.source = state
        self.flipped_source = apply_to_bob(state, PAULI_Y)
        self.branches = {a: measure_bob_qubit(state, a) for a in adversary.pair_angles()} if adversary.strategy == "intercept-resend" else {}
        self._flipped: dict[int, TwoQubitState] = {}
        self._dists: dict[tuple[int, float, float], JointDistribution] = {}

    def flipped(self, state: TwoQubitState) -> TwoQubitState:
        if state is self.source:
            return self.flipped_source
        key = id(state)
        if key not in self._flipped:
            self._flipped[key] = apply_to_bob(state, PAULI_Y)
        return self._flipped[key]

    def distribution(self, state: TwoQubitState, a: float, b: float) -> JointDistribution:
        key = (id(state), a, b)
        d = self._dists.get(key)
        if d is None:
            d = self._dists[key] = exact_joint_distribution(state, a, b)
        return d


def _validate_pair_inputs(n_pairs: int, channel: ChannelConfig, adversary: AdversaryConfig) -> None:
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if adversary.strategy == "pns":
        raise ValueError("photon-number splitting does not apply to entangled-pair protocols")
    if channel.source_mode != "single-photon":
        raise ValueError("entangled-pair protocols need a single-pair source")


def _distribute(
    settings_a: np.ndarray,
    settings_b: np.ndarray,
    angles_a,
    angles_b,
    source: _PairSource,
    channel: ChannelConfig,
    adversary: AdversaryConfig,
    streams: Streams,
):
    """Run every pair through Eve, the channel and both analyzers."""
    n = settings_a.size
    a_bits = np.full(n, NO_BIT, dtype=np.int8)
    b_bits = np.full(n, NO_BIT, dtype=np.int8)
    detected = np.zeros(n, dtype=bool)
    eve = EveRecord() if adversary.active else None
    eve_outcomes = np.full(n, NO_BIT, dtype=np.int8)
    for i in range(n):
        state = source.source
        if adversary.strategy == "intercept-resend":
            state, entry, outcome = eve_intercept_pair(state, adversary, streams.eve, source.branches)
            if entry is not None:
                entry.slot = i
                eve.append(entry)
                eve_outcomes[i] = _bit(outcome)
        lost = streams.channel.random() < channel.loss_probability
        flip = streams.channel.random() < channel.flip_probability
        if lost:
            continue
        if flip:
            state = source.flipped(state)
        dist = source.distribution(state, angles_a[settings_a[i]], angles_b[settings_b[i]])
        sa, sb = sample_from(dist, streams.source)
        a_bits[i], b_bits[i] = _bit(sa), _bit(sb)
        detected[i] = True
    return a_bits, b_bits, detected, eve, eve_outcomes


def sift_e91(record: SessionRecord, settings: E91Settings = E91Settings()) -> np.ndarray:
    key_mask = np.zeros(record.n_slots, dtype=bool)
    for ia, ib in settings.key_pairs:
        key_mask |= (record.alice_bases == ia) & (record.bob_bases == ib)
    return np.flatnonzero(record.detected & (record.public["phase"] == KEY_PHASE) & key_mask)


def e91_tally(record: SessionRecord, settings: E91Settings = E91Settings()) -> CorrelationTally:
    """Check-phase counts keyed by the labels a, a', b, b'."""
    names_a = {settings.check_alice[0]: "a", settings.check_alice[1]: "a'"}
    names_b = {settings.check_bob[0]: "b", settings.check_bob[1]: "b'"}
    tally = CorrelationTally()
    mask = record.detected & (record.public["phase"] == CHECK_PHASE)
    for i in np.flatnonzero(mask):
        tally.add(
            names_a[int(record.alice_bases[i])],
            names_b[int(record.bob_bases[i])],
            1 - 2 * int(record.alice_bits[i]),
            1 - 2 * int(record.bob_outcomes[i]),
        )
    return tally


def e91_statistics(record: SessionRecord) -> dict:
    stats = key_statistics(record)
    tally = record.tally
    try:
        s, sigma = chsh_from_tally(tally, "a", "a'", "b", "b'")
    except ValueError:
        s, sigma = None, None
    stats["chsh_s"] = s
    stats["chsh_sigma"] = sigma
    stats["bell_verdict"] = bell_verdict(s, sigma) if s is not None else "insufficient-data"
    return stats


def run_e91(
    n_pairs: int,
    source_state: Optional[TwoQubitState] = None,
    adversary: AdversaryConfig = AdversaryConfig(),
    seed: int = 0,
    channel: ChannelConfig = ChannelConfig(),
    check_fraction: float = 0.5,
    settings: E91Settings = E91Settings(),
    trial: int = 0,
) -> SessionRecord:
    """E91 session.

    Each pair is assigned to the check phase by a public coin with
    probability ``check_fraction``. Check pairs use a/a' and b/b'; key pairs
    use all three settings per side and keep equal-angle matches. The session
    aborts unless |S| exceeds 2 by three standard errors.
    """
    _validate_pair_inputs(n_pairs, channel, adversary)
    if not 0.0 < check_fraction < 1.0:
        raise ValueError("check_fraction must lie strictly between 0 and 1")
    state = TwoQubitState.singlet() if source_state is None else source_state
    streams = Streams(seed, trial)

    phase = (streams.public.random(n_pairs) < check_fraction).astype(np.int8)
    free_a = streams.alice.integers(0, 3, n_pairs)
    pick_a = streams.alice.integers(0, 2, n_pairs)
    free_b = streams.bob.integers(0, 3, n_pairs)
    pick_b = streams.bob.integers(0, 2, n_pairs)
    check_a = np.asarray(settings.check_alice)[pick_a]
    check_b = np.asarray(settings.check_bob)[pick_b]
    set_a = np.where(phase == CHECK_PHASE, check_a, free_a).astype(np.int8)
    set_b = np.where(phase == CHECK_PHASE, check_b, free_b).astype(np.int8)

    source = _PairSource(state, adversary)
    a_bits, b_bits, detected, eve, eve_outcomes = _distribute(
        set_a, set_b, settings.alice_angles, settings.bob_angles, source, channel, adversary, streams
    )
    record = SessionRecord("e91", n_pairs, a_bits, set_a, set_b, b_bits, detected)
    record.public["phase"] = phase
    idx = sift_e91(record, settings)
    record.sifted_indices = idx
    record.sifted_key_a = a_bits[idx].astype(np.int8)
    record.sifted_key_b = (1 - b_bits[idx]).astype(np.int8)
    record.eve = eve
    if eve is not None:
        # Eve's outcome on Bob's qubit predicts Bob's raw bit; Alice's key bit is its inverse
        record.eve_bits = np.where(eve_outcomes == NO_BIT, NO_BIT, 1 - eve_outcomes).astype(np.int8)
    record.tally = e91_tally(record, settings)
    record.stats = e91_statistics(record)
    if record.stats["bell_verdict"] != "violated":
        record.abort(f"CHSH inequality not violated (verdict: {record.stats['bell_verdict']})")
    return record


def agm06_tally(record: SessionRecord) -> CorrelationTally:
    """Counts keyed by ("A<x>", "B<y>"), with Bob's outcomes inverted."""
    tally = CorrelationTally()
    for i in np.flatnonzero(record.detected):
        tally.add(
            f"A{int(record.alice_bases[i])}",
            f"B{int(record.bob_bases[i]) + 1}",
            1 - 2 * int(record.alice_bits[i]),
            1 - 2 * (1 - int(record.bob_outcomes[i])),
        )
    return tally


def sift_agm06(record: SessionRecord) -> np.ndarray:
    return np.flatnonzero(record.detected & (record.alice_bases == 0) & (record.bob_bases == 0))


def agm06_statistics(record: SessionRecord) -> dict:
    stats = key_statistics(record)
    tally = record.tally
    try:
        q = 1.0 - p_equal(tally, "A0", "B1")
    except ValueError:
        q = None
    stats["agm06_q"] = q
    try:
        probs = (
            p_equal(tally, "A1", "B1"),
            p_equal(tally, "A1", "B2"),
            p_equal(tally, "A2", "B1"),
            1.0 - p_equal(tally, "A2", "B2"),
        )
        stats["agm06_s_raw"] = agm06_s(*probs)
        # equals bell.agm06_chsh(*probs); the tally form also yields sigma
        s, sigma = chsh_from_tally(tally, "A1", "A2", "B1", "B2")
        stats["chsh_s"] = s
        stats["chsh_sigma"] = sigma
        stats["bell_verdict"] = bell_verdict(s, sigma)
    except ValueError:
        stats["agm06_s_raw"] = stats["chsh_s"] = stats["chsh_sigma"] = None
        stats["bell_verdict"] = "insufficient-data"
    return stats


def run_agm06(
    n_pairs: int,
    source_state: Optional[TwoQubitState] = None,
    adversary: AdversaryConfig = AdversaryConfig(),
    seed: int = 0,
    channel: ChannelConfig = ChannelConfig(),
    settings: Agm06Settings = Agm06Settings(),
    trial: int = 0,
) -> SessionRecord:
    """AGM06 session: x in {0,1,2}, y in {1,2}; key from (A0, B1).

    ``alice_bases`` stores x and ``bob_bases`` stores y - 1.
    """
    _validate_pair_inputs(n_pairs, channel, adversary)
    state = TwoQubitState.singlet() if source_state is None else source_state
    streams = Streams(seed, trial)
    xs = streams.alice.integers(0, 3, n_pairs).astype(np.int8)
    ys = streams.bob.integers(0, 2, n_pairs).astype(np.int8)
    source = _PairSource(state, adversary)
    a_bits, b_bits, detected, eve, eve_outcomes = _distribute(
        xs, ys, settings.alice_angles, settings.bob_angles, source, channel, adversary, streams
    )
    record = SessionRecord("agm06", n_pairs, a_bits, xs, ys, b_bits, detected)
    idx = sift_agm06(record)
    record.sifted_indices = idx
    record.sifted_key_a = a_bits[idx].astype(np.int8)
    record.sifted_key_b = (1 - b_bits[idx]).astype(np.int8)
    record.eve = eve
    if eve is not None:
        record.eve_bits = np.where(eve_outcomes == NO_BIT, NO_BIT, 1 - eve_outcomes).astype(np.int8)
    record.tally = agm06_tally(record)
    record.stats = agm06_statistics(record)
    if record.stats["bell_verdict"] != "violated":
        record.abort(f"CHSH inequality not violated (verdict: {record.stats['bell_verdict']})")
    return record
