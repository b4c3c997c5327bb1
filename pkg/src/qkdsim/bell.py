"""Correlation tallies, CHSH statistics and the no-signalling check."""
from __future__ import annotations

import math
from collections.abc import Hashable
from typing import Iterable

import numpy as np

from .quantum import OUTCOME_PAIRS, JointDistribution

LHV_BOUND = 2.0
TSIRELSON_BOUND = 2 * math.sqrt(2)
_CELL = {pair: i for i, pair in enumerate(OUTCOME_PAIRS)}


class CorrelationTally:
    """Counts ``[n++, n+-, n-+, n--]`` per setting pair ``(p, q)``.

    Settings are any hashable labels. Counts may be fractional so that exact
    probabilities can be fed in as weights. Tallies add component-wise.
    """

    def __init__(self) -> None:
        self._counts: dict[tuple[Hashable, Hashable], np.ndarray] = {}

    def _cell(self, p, q) -> np.ndarray:
        key = (p, q)
        arr = self._counts.get(key)
        if arr is None:
            arr = self._counts[key] = np.zeros(4)
        return arr

    def add(self, p, q, a: int, b: int, weight: float = 1.0) -> None:
        if weight < 0:
            raise ValueError("tally weights must be nonnegative")
        self._cell(p, q)[_CELL[(a, b)]] += weight

    def add_distribution(self, p, q, dist: JointDistribution, weight: float = 1.0) -> None:
        self._cell(p, q)[:] += weight * np.asarray(dist, dtype=float)

    def counts(self, p, q) -> np.ndarray:
        return self._counts.get((p, q), np.zeros(4)).copy()

    def total(self, p, q) -> float:
        return float(self.counts(p, q).sum())

    def pairs(self) -> list[tuple[Hashable, Hashable]]:
        return list(self._counts)

    def __add__(self, other: "CorrelationTally") -> "CorrelationTally":
        out = CorrelationTally()
        for src in (self, other):
            for key, arr in src._counts.items():
                out._cell(*key)[:] += arr
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorrelationTally):
            return NotImplemented
        keys = set(self._counts) | set(other._counts)
        return all(np.array_equal(self.counts(*k), other.counts(*k)) for k in keys)

    def to_dict(self) -> dict[str, list[float]]:
        return {f"{p}|{q}": [float(x) for x in arr] for (p, q), arr in self._counts.items()}


def estimate_correlation(tally: CorrelationTally, p, q) -> float:
    c = tally.counts(p, q)
    total = c.sum()
    if total <= 0:
        raise ValueError(f"no counts recorded for setting pair ({p}, {q})")
    return float((c[0] + c[3] - c[1] - c[2]) / total)


def correlation_sigma(tally: CorrelationTally, p, q) -> float:
    """Binomial standard error of the correlation estimate."""
    e = estimate_correlation(tally, p, q)
    return math.sqrt(max(1.0 - e * e, 0.0) / tally.total(p, q))


def chsh_value(e_ab: float, e_abp: float, e_apb: float, e_apbp: float) -> float:
    """``S = E(a,b) + E(a,b') + E(a',b) - E(a',b')``; |S| <= 2 under LHV."""
    for e in (e_ab, e_abp, e_apb, e_apbp):
        if not -1.0 - 1e-12 <= e <= 1.0 + 1e-12:
            raise ValueError(f"correlation {e} outside [-1, 1]")
    return e_ab + e_abp + e_apb - e_apbp


def chsh_from_tally(tally: CorrelationTally, a, a_prime, b, b_prime) -> tuple[float, float]:
    """CHSH value and its standard error from sampled counts."""
    combos = ((a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime))
    es = [estimate_correlation(tally, p, q) for p, q in combos]
    var = sum((1.0 - e * e) / tally.total(p, q) for e, (p, q) in zip(es, combos))
    return chsh_value(*es), math.sqrt(max(var, 0.0))


def bell_verdict(s: float, sigma: float, bound: float = LHV_BOUND, n_sigma: float = 3.0) -> str:
    """Classify |S| against the local bound with a finite-sample band."""
    if abs(s) - n_sigma * sigma > bound:
        return "violated"
    if abs(s) + n_sigma * sigma <= bound:
        return "not-violated"
    return "inconclusive"


def _check_probs(*ps: float) -> None:
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")


def agm06_s(p_eq_11: float, p_eq_12: float, p_eq_21: float, p_neq_22: float) -> float:
    """The three-agree-minus-one-disagree combination, taken literally.

    This is not a Bell expression: an all-equal deterministic strategy scores
    3. Security decisions use :func:`agm06_chsh` instead.
    """
    _check_probs(p_eq_11, p_eq_12, p_eq_21, p_neq_22)
    return p_eq_11 + p_eq_12 + p_eq_21 - p_neq_22


def agm06_chsh(p_eq_11: float, p_eq_12: float, p_eq_21: float, p_neq_22: float) -> float:
    """CHSH value from the same four probabilities, via ``E = P(=) - P(!=)``.

    ``S = E11 + E12 + E21 - E22``, bounded by 2 for local strategies and by
    ``2*sqrt(2)`` quantum mechanically.
    """
    _check_probs(p_eq_11, p_eq_12, p_eq_21, p_neq_22)
    return (2 * p_eq_11 - 1) + (2 * p_eq_12 - 1) + (2 * p_eq_21 - 1) + (2 * p_neq_22 - 1)


def p_equal(tally: CorrelationTally, p, q) -> float:
    """P(a = b | p, q) estimated from counts."""
    c = tally.counts(p, q)
    total = c.sum()
    if total <= 0:
        raise ValueError(f"no counts recorded for setting pair ({p}, {q})")
    return float((c[0] + c[3]) / total)


def _marginal_spread(groups: Iterable[list[float]]) -> float:
    worst = None
    for vals in groups:
        if len(vals) >= 2:
            spread = max(vals) - min(vals)
            worst = spread if worst is None else max(worst, spread)
    if worst is None:
        raise ValueError("no-signalling check needs two setting pairs sharing a setting")
    return worst


def no_signalling_deviation(tally: CorrelationTally) -> float:
    """Largest shift of one side's marginal caused by the other side's setting."""
    alice: dict = {}
    bob: dict = {}
    for p, q in tally.pairs():
        c = tally.counts(p, q)
        total = c.sum()
        if total <= 0:
            continue
        alice.setdefault(p, []).append((c[0] + c[1]) / total)
        bob.setdefault(q, []).append((c[0] + c[2]) / total)
    groups = [v for v in alice.values() if len(v) >= 2] + [v for v in bob.values() if len(v) >= 2]
    return float(_marginal_spread(groups))
