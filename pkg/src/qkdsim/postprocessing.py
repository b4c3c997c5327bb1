"""Classical post-processing: error estimation, reconciliation, privacy amplification, confirmation."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

STAGES = ("raw", "sifted", "reconciled", "final")
CONFIRM_DIGEST_BITS = 64


@dataclass(frozen=True)
class KeyMaterial:
    bits: np.ndarray
    stage: str
    leaked_bits: int = 0

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown key stage {self.stage!r}")
        if self.leaked_bits < 0:
            raise ValueError("leaked_bits must be nonnegative")

    def advance(self, stage: str, bits: np.ndarray, leaked: int = 0) -> "KeyMaterial":
        if STAGES.index(stage) <= STAGES.index(self.stage):
            raise ValueError(f"cannot move key material from {self.stage} back to {stage}")
        if len(bits) > len(self.bits):
            raise ValueError("post-processing never lengthens a key")
        return KeyMaterial(np.asarray(bits, dtype=np.int8), stage, self.leaked_bits + leaked)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class EveBound:
    """Upper bound ``t`` on the number of key bits Eve may know."""

    t: int

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError("Eve bound must be nonnegative")


def eve_bound(key_length: int, qber: float, factor: float = 2.0, leaked_bits: int = 0) -> EveBound:
    """``ceil(key_length * factor * qber)`` plus disclosed parities, capped at the key length.

    The default factor 2 is what intercept-resend on BB84 actually yields:
    Eve knows exactly the sifted bits where she guessed the basis, which is
    twice the error rate she causes.
    """
    t = math.ceil(key_length * factor * qber - 1e-9) + leaked_bits
    return EveBound(min(max(t, 0), key_length))


def _as_bits(key) -> np.ndarray:
    arr = np.asarray(key, dtype=np.int8).reshape(-1)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("keys must contain only 0 and 1")
    return arr


# ---------------------------------------------------------------------------
# error estimation


def estimate_qber(key_a, key_b, sample_fraction: float, rng: np.random.Generator):
    """Compare a public random sample and discard it.

    Returns ``(estimate, remaining_a, remaining_b, n_sampled)``.
    """
    a, b = _as_bits(key_a), _as_bits(key_b)
    if a.size != b.size:
        raise ValueError("keys must have equal length")
    if a.size == 0:
        raise ValueError("cannot estimate the error rate of an empty key")
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError("sample_fraction must lie strictly between 0 and 1")
    n = a.size
    k = min(max(1, round(sample_fraction * n)), n)
    sample = rng.choice(n, size=k, replace=False)
    keep = np.ones(n, dtype=bool)
    keep[sample] = False
    estimate = float(np.count_nonzero(a[sample] != b[sample])) / k
    return estimate, a[keep], b[keep], k


# ---------------------------------------------------------------------------
# reconciliation


def default_block_schedule(qber: float, n: int, passes: int = 4) -> tuple[int, ...]:
    """Cascade-style sizes: first block ~0.73/qber, doubling each pass."""
    q = max(qber, 0.01)
    k1 = max(4, math.ceil(0.73 / q))
    return tuple(min(max(k1 * 2**i, 1), max(n, 1)) for i in range(passes))


class _Pass:
    __slots__ = ("perm", "block_of", "k", "alice_par", "bob_par")

    def __init__(self, perm, k, a, b):
        n = perm.size
        pos = np.empty(n, dtype=np.int64)
        pos[perm] = np.arange(n)
        self.perm = perm
        self.k = k
        self.block_of = pos // k
        nblocks = -(-n // k)
        self.alice_par = np.bincount(self.block_of, weights=a, minlength=nblocks).astype(np.int64) % 2
        self.bob_par = np.bincount(self.block_of, weights=b, minlength=nblocks).astype(np.int64) % 2


def parity_reconcile(
    key_a,
    key_b,
    block_size_schedule: Sequence[int],
    rng: Optional[np.random.Generator] = None,
):
    """Block-parity reconciliation with bisection and back-tracking.

    The first pass uses the natural order; later passes use public random
    permutations drawn from ``rng``. Whenever a bit is corrected, blocks of
    earlier passes that contain it turn odd and are bisected again.

    Returns ``(corrected_key_b, leaked_bits)`` where ``leaked_bits`` counts
    every parity Alice disclosed.
    """
    a = _as_bits(key_a).astype(np.int64)
    b = _as_bits(key_b).astype(np.int64).copy()
    if a.size != b.size:
        raise ValueError("keys must have equal length")
    n = a.size
    if n == 0:
        return b.astype(np.int8), 0
    if any(k < 1 for k in block_size_schedule):
        raise ValueError("block sizes must be positive")
    if len(block_size_schedule) > 1 and rng is None:
        raise ValueError("multi-pass reconciliation needs a public rng for the shuffles")

    leaked = 0
    passes: list[_Pass] = []
    for idx, k in enumerate(block_size_schedule):
        k = min(int(k), n)
        perm = np.arange(n) if idx == 0 else rng.permutation(n)
        cur = _Pass(perm, k, a, b)
        passes.append(cur)
        leaked += cur.alice_par.size
        queue = [(idx, int(blk)) for blk in np.flatnonzero(cur.alice_par != cur.bob_par)]
        while queue:
            p, blk = queue.pop()
            P = passes[p]
            if P.alice_par[blk] == P.bob_par[blk]:
                continue
            positions = P.perm[blk * P.k:(blk + 1) * P.k]
            lo, hi = 0, positions.size
            while hi - lo > 1:
                mid = (lo + hi) // 2
                sub = positions[lo:mid]
                leaked += 1
                if (a[sub].sum() - b[sub].sum()) % 2:
                    hi = mid
                else:
                    lo = mid
            err = positions[lo]
            b[err] ^= 1
            for q, Q in enumerate(passes):
                bl = Q.block_of[err]
                Q.bob_par[bl] ^= 1
                if q != p and Q.alice_par[bl] != Q.bob_par[bl]:
                    queue.append((q, int(bl)))
    return b.astype(np.int8), leaked


# ---------------------------------------------------------------------------
# privacy amplification


def _mask_chunks(n: int, m: int, rng: np.random.Generator):
    nbytes = -(-n // 8)
    chunk = max(1, 8_000_000 // max(nbytes, 1))
    for start in range(0, m, chunk):
        rows = min(chunk, m - start)
        yield start, rng.integers(0, 256, size=(rows, nbytes), dtype=np.uint8)


def random_subset_masks(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` public subsets of ``range(n)`` as a boolean matrix.

    Every position joins each subset independently with probability 1/2,
    so subsets hold half the key on average.
    """
    out = np.empty((m, n), dtype=bool)
    for start, raw in _mask_chunks(n, m, rng):
        out[start:start + raw.shape[0]] = np.unpackbits(raw, axis=1, count=n).astype(bool)
    return out


def _parities_packed(bits: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    # same draws as random_subset_masks, evaluated without unpacking
    packed = np.packbits(bits.astype(np.uint8))
    out = np.empty(m, dtype=np.int8)
    for start, raw in _mask_chunks(bits.size, m, rng):
        out[start:start + raw.shape[0]] = np.bitwise_count(raw & packed).sum(axis=1, dtype=np.int64) & 1
    return out


def privacy_amplify(
    key,
    bound: EveBound,
    safety_margin: int,
    rng: Optional[np.random.Generator] = None,
    subsets: Optional[Sequence[Sequence[int]]] = None,
) -> np.ndarray:
    """Compress ``key`` to ``len(key) - t - s`` parities of public subsets.

    ``subsets`` (0-based positions) may be given explicitly; otherwise they
    are drawn from ``rng``, which both parties seed identically.
    """
    bits = _as_bits(key)
    n = bits.size
    if safety_margin < 0:
        raise ValueError("safety margin must be nonnegative")
    m = n - bound.t - safety_margin
    if m <= 0:
        raise ValueError(
            f"no extractable key: length {n} does not exceed Eve bound {bound.t} + margin {safety_margin}"
        )
    if subsets is not None:
        if len(subsets) != m:
            raise ValueError(f"expected {m} subsets, got {len(subsets)}")
        out = np.empty(m, dtype=np.int8)
        for j, subset in enumerate(subsets):
            idx = np.asarray(subset, dtype=np.int64)
            if idx.size == 0 or idx.min() < 0 or idx.max() >= n:
                raise ValueError(f"subset {j} is empty or out of range")
            out[j] = int(bits[idx].sum()) & 1
        return out
    if rng is None:
        raise ValueError("random subsets need a public rng")
    return _parities_packed(bits, m, rng)


# ---------------------------------------------------------------------------
# confirmation


def key_digest(key, bits: int = CONFIRM_DIGEST_BITS) -> bytes:
    arr = _as_bits(key)
    h = hashlib.blake2b(digest_size=bits // 8)
    h.update(arr.size.to_bytes(8, "big"))
    h.update(np.packbits(arr.astype(np.uint8)).tobytes())
    return h.digest()


def confirm_key(key_a, key_b) -> bool:
    """Compare 64-bit digests of both final keys."""
    return key_digest(key_a) == key_digest(key_b)
