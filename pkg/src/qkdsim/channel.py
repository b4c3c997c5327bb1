"""Lossy, noisy quantum channel and pulse-by-pulse eavesdroppers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .quantum import (
    BB84_BASES,
    Basis,
    Polarization,
    Pulse,
    TwoQubitState,
    measure_bob_qubit,
    measure_photon,
)

SOURCE_MODES = ("single-photon", "weak-coherent")
STRATEGIES = ("none", "intercept-resend", "pns")

# Eve's default conjugate pairs in each encoding.
PHOTON_EVE_ANGLES = (0.0, math.pi / 4)
PAIR_EVE_ANGLES = (0.0, math.pi / 2)


def _check_probability(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ChannelConfig:
    flip_probability: float = 0.0
    loss_probability: float = 0.0
    source_mode: str = "single-photon"
    mean_photon_number: Optional[float] = None

    def __post_init__(self) -> None:
        _check_probability("flip_probability", self.flip_probability)
        _check_probability("loss_probability", self.loss_probability)
        if self.source_mode not in SOURCE_MODES:
            raise ValueError(f"source_mode must be one of {SOURCE_MODES}, got {self.source_mode!r}")
        if self.source_mode == "weak-coherent":
            mu = self.mean_photon_number
            if mu is None or not (isinstance(mu, (int, float)) and math.isfinite(mu) and mu > 0):
                raise ValueError(f"mean_photon_number must be > 0 for a weak-coherent source, got {mu!r}")
        elif self.mean_photon_number is not None:
            raise ValueError("mean_photon_number only applies to a weak-coherent source")


@dataclass(frozen=True)
class AdversaryConfig:
    """Eve's strategy.

    ``eve_angles`` are analyzer angles (polarization protocols) or spin
    directions (pair protocols); ``None`` picks the conjugate pair native to
    the protocol's encoding. ``intercept_fraction`` is the share of pulses
    Eve attacks with intercept-resend. For PNS, pulses with fewer than
    ``min_split`` photons are blocked with probability ``blocking_fraction``.
    """

    strategy: str = "none"
    eve_angles: Optional[tuple[float, ...]] = None
    intercept_fraction: float = 1.0
    blocking_fraction: float = 0.0
    min_split: int = 2

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        _check_probability("intercept_fraction", self.intercept_fraction)
        _check_probability("blocking_fraction", self.blocking_fraction)
        if not isinstance(self.min_split, int) or self.min_split < 2:
            raise ValueError("min_split must be an integer >= 2")
        if self.eve_angles is not None:
            angles = tuple(float(a) for a in self.eve_angles)
            if not angles or not all(math.isfinite(a) for a in angles):
                raise ValueError("eve_angles must be a nonempty list of finite angles")
            object.__setattr__(self, "eve_angles", angles)
        if self.strategy != "intercept-resend" and (self.eve_angles is not None or self.intercept_fraction != 1.0):
            raise ValueError("eve_angles/intercept_fraction only apply to intercept-resend")
        if self.strategy != "pns" and (self.blocking_fraction != 0.0 or self.min_split != 2):
            raise ValueError("blocking_fraction/min_split only apply to pns")

    @property
    def active(self) -> bool:
        return self.strategy != "none"

    def photon_bases(self) -> tuple[Basis, ...]:
        if self.eve_angles is None:
            return BB84_BASES
        return tuple(Basis(a % (math.pi / 2)) for a in self.eve_angles)

    def pair_angles(self) -> tuple[float, ...]:
        return PAIR_EVE_ANGLES if self.eve_angles is None else self.eve_angles


@dataclass
class EveEntry:
    slot: int
    basis: Optional[float] = None  # analyzer angle / spin direction, None until measured
    bit: Optional[int] = None
    stored: int = 0
    blocked: bool = False


@dataclass
class EveRecord:
    entries: list[EveEntry] = field(default_factory=list)

    def append(self, entry: EveEntry) -> None:
        if self.entries and entry.slot <= self.entries[-1].slot:
            raise ValueError("Eve record slots must be strictly increasing")
        self.entries.append(entry)

    def by_slot(self) -> dict[int, EveEntry]:
        return {e.slot: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# source and channel


def emit_pulse(config: ChannelConfig, pol: Polarization, slot: int, rng: np.random.Generator) -> Pulse:
    if config.source_mode == "single-photon":
        return Pulse(1, pol, slot)
    return Pulse(int(rng.poisson(config.mean_photon_number)), pol, slot)


def transmit(pulse: Pulse, config: ChannelConfig, rng: np.random.Generator, lossless: bool = False) -> Pulse:
    """Independent per-photon loss, then a pi/2 polarization flip.

    A pulse of ``n`` photons always consumes ``n + 1`` uniform draws, so the
    stream stays aligned whatever the loss settings.
    """
    if pulse.is_vacuum:
        return pulse
    n = pulse.photon_count
    survivors = int(np.count_nonzero(rng.random(n) >= config.loss_probability))
    flip = rng.random() < config.flip_probability
    if lossless:
        survivors = n
    if survivors == 0:
        return Pulse(0, pulse.polarization, pulse.slot)
    pol = pulse.polarization.rotated(math.pi / 2) if flip else pulse.polarization
    return Pulse(survivors, pol, pulse.slot)


def force_flip(pulse: Pulse) -> Pulse:
    return Pulse(pulse.photon_count, pulse.polarization.rotated(math.pi / 2), pulse.slot)


# ---------------------------------------------------------------------------
# eavesdroppers on photons


def eve_intercept_resend(
    pulse: Pulse,
    config: AdversaryConfig,
    rng: np.random.Generator,
    basis: Optional[Basis] = None,
) -> tuple[Pulse, Optional[EveEntry]]:
    """Measure in a random basis from Eve's set and resend her result.

    ``basis`` forces Eve's choice (replay). Vacuum passes untouched.
    """
    if config.strategy != "intercept-resend":
        raise ValueError("eve_intercept_resend requires the intercept-resend strategy")
    if pulse.is_vacuum:
        return pulse, None
    if basis is None:
        if config.intercept_fraction < 1.0 and rng.random() >= config.intercept_fraction:
            return pulse, None
        bases = config.photon_bases()
        basis = bases[int(rng.integers(len(bases)))]
    bit = measure_photon(pulse.polarization, basis, rng)
    resent = Pulse(pulse.photon_count, basis.polarization(bit), pulse.slot)
    return resent, EveEntry(pulse.slot, basis.analyzer_angle, bit, 0)


def eve_pns(
    pulse: Pulse, rng: np.random.Generator, config: AdversaryConfig = AdversaryConfig("pns")
) -> tuple[Pulse, Optional[EveEntry], bool]:
    """Photon-number splitting.

    Returns ``(forwarded, entry, lossless)``; ``lossless`` tells the caller the
    pulse travels on Eve's lossless line instead of the lossy channel. The
    stored photon's bit is read only after the public announcement.
    """
    if config.strategy != "pns":
        raise ValueError("eve_pns requires the pns strategy")
    n = pulse.photon_count
    if n == 0:
        return pulse, None, False
    if n >= config.min_split:
        forwarded = Pulse(n - 1, pulse.polarization, pulse.slot)
        return forwarded, EveEntry(pulse.slot, stored=1), True
    # one draw per splittable-too-small pulse keeps the stream aligned
    if rng.random() < config.blocking_fraction:
        return Pulse(0, pulse.polarization, pulse.slot), EveEntry(pulse.slot, blocked=True), False
    return pulse, None, False


def discriminating_basis(pol_a: Polarization, pol_b: Polarization) -> tuple[Basis, int]:
    """Minimum-error measurement for telling ``pol_a`` from ``pol_b``.

    Returns ``(basis, outcome_for_a)``: the outcome which should be read as
    ``pol_a``. The analyzer sits pi/4 either side of the bisector.
    """
    d = pol_a.angle - pol_b.angle
    d = (d + math.pi / 2) % math.pi - math.pi / 2  # wrap to [-pi/2, pi/2)
    mid = pol_b.angle + d / 2
    toward_a = mid + (math.pi / 4 if d >= 0 else -math.pi / 4)
    toward_a = toward_a % math.pi
    if toward_a < math.pi / 2:
        return Basis(toward_a), 0
    return Basis(toward_a - math.pi / 2), 1


# ---------------------------------------------------------------------------
# eavesdropper on entangled pairs


def eve_intercept_pair(
    state: TwoQubitState,
    config: AdversaryConfig,
    rng: np.random.Generator,
    branches: Optional[dict] = None,
) -> tuple[TwoQubitState, Optional[EveEntry], int]:
    """Measure Bob's qubit along one of Eve's spin directions and resend it.

    Returns the post-measurement state, an entry (slot left at 0 for the
    caller to fill) and Eve's outcome (+1/-1, or 0 when she let the pair
    through). ``branches`` may hold precomputed :func:`measure_bob_qubit`
    results per angle for ``state``.
    """
    if config.intercept_fraction < 1.0 and rng.random() >= config.intercept_fraction:
        return state, None, 0
    angles = config.pair_angles()
    angle = angles[int(rng.integers(len(angles)))]
    if branches is not None and angle in branches:
        (s_plus, p_plus, st_plus), (s_minus, _, st_minus) = branches[angle]
    else:
        (s_plus, p_plus, st_plus), (s_minus, _, st_minus) = measure_bob_qubit(state, angle)
    u = rng.random()
    if st_minus is None or (st_plus is not None and u < p_plus):
        outcome, post = s_plus, st_plus
    else:
        outcome, post = s_minus, st_minus
    return post, EveEntry(0, angle, 0 if outcome == 1 else 1, 0), outcome
