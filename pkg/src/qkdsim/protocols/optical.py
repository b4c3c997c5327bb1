"""Per-slot photon transport shared by BB84 and SARG04."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..channel import (
    AdversaryConfig,
    ChannelConfig,
    EveRecord,
    emit_pulse,
    eve_intercept_resend,
    eve_pns,
    force_flip,
    transmit,
)
from ..quantum import BB84_BASES, Basis, Polarization, measure_photon
from ..rng import Streams
from .record import NO_BIT


@dataclass
class Transport:
    detected: np.ndarray
    bob_outcomes: np.ndarray
    eve: Optional[EveRecord]
    # slots where Eve holds a stored photon (PNS), polarization as sent by Alice
    stored: dict[int, Polarization]


def send_slots(
    polarizations: Sequence[Polarization],
    bob_bases: np.ndarray,
    channel: ChannelConfig,
    adversary: AdversaryConfig,
    streams: Streams,
    eve_bases: Optional[Sequence[Optional[int]]] = None,
    error_slots: Sequence[int] = (),
) -> Transport:
    """Emit, (attack), transmit and measure every slot.

    ``eve_bases`` forces Eve's basis index per slot (None = Eve leaves the
    slot alone); ``error_slots`` get a forced pi/2 flip after the channel.
    """
    n = len(polarizations)
    detected = np.zeros(n, dtype=bool)
    outcomes = np.full(n, NO_BIT, dtype=np.int8)
    forced_errors = set(int(s) for s in error_slots)
    eve = EveRecord() if (adversary.active or eve_bases is not None) else None
    stored: dict[int, Polarization] = {}
    eve_photon_bases: tuple[Basis, ...] = adversary.photon_bases() if adversary.strategy == "intercept-resend" else BB84_BASES
    ir_config = adversary if adversary.strategy == "intercept-resend" else AdversaryConfig("intercept-resend")

    for i in range(n):
        pulse = emit_pulse(channel, polarizations[i], i, streams.source)
        lossless = False
        entry = None
        if eve_bases is not None:
            forced = eve_bases[i]
            if forced is not None:
                pulse, entry = eve_intercept_resend(pulse, ir_config, streams.eve, basis=eve_photon_bases[forced])
        elif adversary.strategy == "intercept-resend":
            pulse, entry = eve_intercept_resend(pulse, adversary, streams.eve)
        elif adversary.strategy == "pns":
            pulse, entry, lossless = eve_pns(pulse, streams.eve, adversary)
            if entry is not None and entry.stored:
                stored[i] = polarizations[i]
        if entry is not None:
            eve.append(entry)
        pulse = transmit(pulse, channel, streams.channel, lossless=lossless)
        if i in forced_errors and not pulse.is_vacuum:
            pulse = force_flip(pulse)
        if not pulse.is_vacuum:
            detected[i] = True
            outcomes[i] = measure_photon(pulse.polarization, BB84_BASES[bob_bases[i]], streams.bob)
    return Transport(detected, outcomes, eve, stored)
