"""SARG04: BB84 states, but Alice announces a non-orthogonal pair instead of her basis.

States ``|+z>, |-z>`` sit in the rectilinear basis (polarization 0, pi/2)
and encode bit 1; ``|+x>, |-x>`` sit in the diagonal basis (pi/4, 3pi/4)
and encode bit 0. A ``+`` sign is the basis's outcome 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..channel import AdversaryConfig, ChannelConfig, discriminating_basis
from ..quantum import DIAGONAL, RECTILINEAR, Basis, Polarization, measure_photon, prob_zero
from ..rng import Streams
from .optical import send_slots
from .record import NO_BIT, SessionRecord, key_statistics

Z_BASIS, X_BASIS = 0, 1  # indices into BB84_BASES
X_FAMILY_BIT, Z_FAMILY_BIT = 0, 1


def state_polarization(family_bit: int, sign: int) -> Polarization:
    basis = DIAGONAL if family_bit == X_FAMILY_BIT else RECTILINEAR
    return basis.polarization(0 if sign > 0 else 1)


@dataclass(frozen=True)
class Sarg04Announcement:
    """The public pair ``{|x_sign x>, |z_sign z>}``; Alice's state is one of them."""

    x_sign: int
    z_sign: int

    def __post_init__(self) -> None:
        if self.x_sign not in (1, -1) or self.z_sign not in (1, -1):
            raise ValueError("announcement signs must be +1 or -1")

    def states(self) -> tuple[Polarization, Polarization]:
        return state_polarization(X_FAMILY_BIT, self.x_sign), state_polarization(Z_FAMILY_BIT, self.z_sign)


def sarg04_conclusive(bob_basis: int, bob_outcome: int, announcement: Sarg04Announcement) -> Optional[int]:
    """Bob's bit if his result rules out one announced state, else None.

    ``bob_basis`` indexes ``(rectilinear=z, diagonal=x)``; ``bob_outcome`` 0
    means the ``+`` state of that basis.
    """
    sign = 1 if bob_outcome == 0 else -1
    if bob_basis == Z_BASIS:
        # -z_sign is orthogonal to the announced z state, so it must be the x state
        return X_FAMILY_BIT if sign == -announcement.z_sign else None
    if bob_basis == X_BASIS:
        return Z_FAMILY_BIT if sign == -announcement.x_sign else None
    raise ValueError("bob_basis must be 0 (z) or 1 (x)")


def eve_guess(basis: float, bit: int, announcement: Sarg04Announcement) -> int:
    """Intercept-resend Eve's key guess: the announced state likelier to give her result."""
    b = Basis(basis)
    pol_x, pol_z = announcement.states()
    px, pz = prob_zero(pol_x, b), prob_zero(pol_z, b)
    if bit:
        px, pz = 1 - px, 1 - pz
    return X_FAMILY_BIT if px >= pz else Z_FAMILY_BIT


def _announcements(record: SessionRecord) -> list[Sarg04Announcement]:
    return [Sarg04Announcement(int(x), int(z)) for x, z in zip(record.public["ann_x_sign"], record.public["ann_z_sign"])]


def sift_sarg04(record: SessionRecord) -> tuple[np.ndarray, np.ndarray]:
    """Conclusive detected slots and Bob's decoded bits there."""
    idx, bits = [], []
    for i, ann in enumerate(_announcements(record)):
        if not record.detected[i]:
            continue
        bit = sarg04_conclusive(int(record.bob_bases[i]), int(record.bob_outcomes[i]), ann)
        if bit is not None:
            idx.append(i)
            bits.append(bit)
    return np.asarray(idx, dtype=np.int64), np.asarray(bits, dtype=np.int8)


def run_sarg04(
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
    signs = 1 - 2 * streams.alice.integers(0, 2, n_slots, dtype=np.int8)
    partner = 1 - 2 * streams.alice.integers(0, 2, n_slots, dtype=np.int8)
    b_bases = streams.bob.integers(0, 2, n_slots, dtype=np.int8)

    x_sign = np.where(bits == X_FAMILY_BIT, signs, partner).astype(np.int8)
    z_sign = np.where(bits == Z_FAMILY_BIT, signs, partner).astype(np.int8)
    a_bases = np.where(bits == X_FAMILY_BIT, X_BASIS, Z_BASIS).astype(np.int8)
    pols = [state_polarization(b, s) for b, s in zip(bits, signs)]

    transport = send_slots(pols, b_bases, channel, adversary, streams)
    record = SessionRecord("sarg04", n_slots, bits, a_bases, b_bases, transport.bob_outcomes, transport.detected)
    record.public["alice_signs"] = signs.astype(np.int8)
    record.public["ann_x_sign"] = x_sign
    record.public["ann_z_sign"] = z_sign

    idx, bob_bits = sift_sarg04(record)
    record.sifted_indices = idx
    record.sifted_key_a = bits[idx].astype(np.int8)
    record.sifted_key_b = bob_bits
    record.eve = transport.eve

    if transport.eve is not None:
        eve_bits = np.full(n_slots, NO_BIT, dtype=np.int8)
        anns = _announcements(record)
        entries = transport.eve.by_slot()
        for e in transport.eve.entries:
            if e.bit is not None:
                eve_bits[e.slot] = eve_guess(e.basis, e.bit, anns[e.slot])
        # PNS: minimum-error discrimination of the announced pair on the stored photon
        for slot, pol in transport.stored.items():
            if not record.detected[slot]:
                continue
            pol_x, pol_z = anns[slot].states()
            basis, outcome_for_x = discriminating_basis(pol_x, pol_z)
            outcome = measure_photon(pol, basis, streams.eve)
            guess = X_FAMILY_BIT if outcome == outcome_for_x else Z_FAMILY_BIT
            eve_bits[slot] = guess
            entries[slot].basis, entries[slot].bit = basis.analyzer_angle, outcome
        record.eve_bits = eve_bits

    record.stats = key_statistics(record)
    return record
