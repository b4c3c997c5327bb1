"""Born-rule probabilities and sampling for polarized photons and qubit pairs.

Two encodings are used and never mixed:

* Prepare-and-measure protocols (BB84, SARG04) describe a photon by its
  linear polarization angle. Measuring polarization ``theta`` with an
  analyzer at ``phi`` yields bit 0 with probability ``cos^2(theta - phi)``.
* Entangled-pair protocols (E91, AGM06) use a two-outcome spin measurement
  along a direction in the x-z plane of the Bloch sphere, at angle ``theta``
  from +z. The +1 outcome vector is ``cos(theta/2)|0> + sin(theta/2)|1>``.
  For the singlet this gives ``E(a, b) = -cos(a - b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

PROB_TOL = 1e-12
_HALF_PI = math.pi / 2


def _clip_probability(p: float) -> float:
    # keeps cos^2(pi/2) ~ 3.7e-33 from ever beating a uniform draw of 0.0
    if p < 1e-15:
        return 0.0
    if p > 1.0 - 1e-15:
        return 1.0
    return p


@dataclass(frozen=True)
class Polarization:
    """Linear polarization; ``angle`` is normalized into ``[0, pi)``."""

    angle: float

    def __post_init__(self) -> None:
        a = float(self.angle)
        if not math.isfinite(a):
            raise ValueError(f"polarization angle must be finite, got {a}")
        a = math.fmod(a, math.pi)
        if a < 0:
            a += math.pi
        if a >= math.pi:  # fmod rounding at the boundary
            a = 0.0
        object.__setattr__(self, "angle", a)

    def rotated(self, delta: float) -> "Polarization":
        return Polarization(self.angle + delta)


@dataclass(frozen=True)
class Basis:
    """Two-outcome polarization analyzer.

    Outcome 0 corresponds to ``analyzer_angle`` and outcome 1 to
    ``analyzer_angle + pi/2``.
    """

    analyzer_angle: float
    label: str = ""

    def __post_init__(self) -> None:
        a = float(self.analyzer_angle)
        if not (0.0 <= a < _HALF_PI):
            raise ValueError(f"analyzer angle must lie in [0, pi/2), got {a}")
        object.__setattr__(self, "analyzer_angle", a)

    def polarization(self, bit: int) -> Polarization:
        """The polarization that this basis reads as ``bit`` with certainty."""
        return Polarization(self.analyzer_angle + (_HALF_PI if bit else 0.0))


RECTILINEAR = Basis(0.0, "+")
DIAGONAL = Basis(math.pi / 4, "x")
BB84_BASES = (RECTILINEAR, DIAGONAL)


@dataclass(frozen=True)
class Pulse:
    """A light pulse; every photon in it shares one polarization."""

    photon_count: int
    polarization: Polarization
    slot: int

    def __post_init__(self) -> None:
        if self.photon_count < 0:
            raise ValueError("photon_count must be nonnegative")
        if self.slot < 0:
            raise ValueError("slot must be nonnegative")

    @property
    def is_vacuum(self) -> bool:
        return self.photon_count == 0


def prob_zero(pol: Polarization, basis: Basis) -> float:
    """Born probability of outcome 0."""
    return math.cos(pol.angle - basis.analyzer_angle) ** 2


def measure_photon(pol: Polarization, basis: Basis, rng: np.random.Generator) -> int:
    """Measure one photon; consumes exactly one uniform draw from ``rng``."""
    p0 = _clip_probability(prob_zero(pol, basis))
    return 0 if rng.random() < p0 else 1


# ---------------------------------------------------------------------------
# two-qubit states


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Normalized pure state with amplitudes ordered |00>, |01>, |10>, |11>."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        amp = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape != (4,):
            raise ValueError("a two-qubit state needs exactly 4 amplitudes")
        if not np.all(np.isfinite(amp)):
            raise ValueError("amplitudes must be finite")
        norm = float(np.sum(np.abs(amp) ** 2))
        if abs(norm - 1.0) > PROB_TOL:
            raise ValueError(f"state is not normalized (sum |amp|^2 = {norm!r})")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @classmethod
    def normalized(cls, amplitudes) -> "TwoQubitState":
        amp = np.asarray(amplitudes, dtype=complex)
        n = np.linalg.norm(amp)
        if n == 0:
            raise ValueError("zero vector cannot be normalized")
        return cls(amp / n)

    @classmethod
    def singlet(cls) -> "TwoQubitState":
        s = 1 / math.sqrt(2)
        return cls([0, s, -s, 0])

    @classmethod
    def psi_plus(cls) -> "TwoQubitState":
        """(|01> + |10>)/sqrt(2), the symmetric triplet-zero state."""
        s = 1 / math.sqrt(2)
        return cls([0, s, s, 0])

    @classmethod
    def product(cls, qubit_a, qubit_b) -> "TwoQubitState":
        """Tensor product of two single-qubit vectors (normalized here)."""
        a = np.asarray(qubit_a, dtype=complex)
        b = np.asarray(qubit_b, dtype=complex)
        return cls.normalized(np.kron(a, b))

    def matrix(self) -> np.ndarray:
        """Amplitudes as a 2x2 array indexed ``[alice, bob]``."""
        return self.amplitudes.reshape(2, 2)

    def __repr__(self) -> str:
        amps = ", ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in self.amplitudes)
        return f"TwoQubitState([{amps}])"


@dataclass(frozen=True)
class MeasurementSetting:
    """Spin analyzer direction, radians from +z in the x-z plane."""

    angle: float

    def __post_init__(self) -> None:
        if not math.isfinite(float(self.angle)):
            raise ValueError("measurement angle must be finite")
        object.__setattr__(self, "angle", float(self.angle))


def _angle(setting) -> float:
    return setting.angle if isinstance(setting, MeasurementSetting) else float(setting)


def spin_vector(angle: float, outcome: int) -> np.ndarray:
    """Eigenvector of the spin observable at ``angle`` for outcome +1 or -1."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if outcome == 1:
        return np.array([c, s])
    if outcome == -1:
        return np.array([-s, c])
    raise ValueError("spin outcome must be +1 or -1")


class JointDistribution(NamedTuple):
    """P(alice, bob) for outcomes in {+1, -1}."""

    pp: float
    pm: float
    mp: float
    mm: float

    @property
    def correlation(self) -> float:
        return self.pp + self.mm - self.pm - self.mp

    @property
    def alice_plus(self) -> float:
        return self.pp + self.pm

    @property
    def bob_plus(self) -> float:
        return self.pp + self.mp


OUTCOME_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def exact_joint_distribution(state: TwoQubitState, a, b) -> JointDistribution:
    """Project ``state`` on the rotated-basis product vectors."""
    if not isinstance(state, TwoQubitState):
        raise TypeError("state must be a TwoQubitState")
    m = state.matrix()
    ta, tb = _angle(a), _angle(b)
    probs = []
    for sa, sb in OUTCOME_PAIRS:
        amp = spin_vector(ta, sa) @ m @ spin_vector(tb, sb)
        probs.append(float(abs(amp) ** 2))
    return JointDistribution(*probs)


def sample_from(dist: JointDistribution, rng: np.random.Generator) -> tuple[int, int]:
    """Draw one outcome pair using a single uniform draw."""
    u = rng.random()
    acc = 0.0
    for (sa, sb), p in zip(OUTCOME_PAIRS, dist):
        acc += p
        if u < acc:
            return sa, sb
    # u landed in the rounding gap above the cumulative sum; take the last nonzero cell
    for (sa, sb), p in zip(reversed(OUTCOME_PAIRS), reversed(dist)):
        if p > 0:
            return sa, sb
    raise AssertionError("empty distribution")


def sample_pair(state: TwoQubitState, a, b, rng: np.random.Generator) -> tuple[int, int]:
    """Sample one joint outcome of spin measurements ``a`` (Alice) and ``b`` (Bob)."""
    return sample_from(exact_joint_distribution(state, a, b), rng)


def measure_bob_qubit(state: TwoQubitState, angle: float) -> list[tuple[int, float, TwoQubitState | None]]:
    """Projective spin measurement of Bob's qubit alone.

    Returns ``(outcome, probability, post_measurement_state)`` for both outcomes;
    the state is None when the outcome has zero probability.
    """
    m = state.matrix()
    branches = []
    for s in (1, -1):
        v = spin_vector(angle, s)
        projector = np.outer(v, v)
        post = m @ projector.T
        p = float(np.sum(np.abs(post) ** 2))
        branches.append((s, p, TwoQubitState(post.reshape(-1) / math.sqrt(p)) if p > PROB_TOL else None))
    return branches


PAULI_Y = np.array([[0, -1j], [1j, 0]])


def apply_to_bob(state: TwoQubitState, op: np.ndarray) -> TwoQubitState:
    """Apply a single-qubit unitary to Bob's half."""
    return TwoQubitState((state.matrix() @ np.asarray(op).T).reshape(-1))
