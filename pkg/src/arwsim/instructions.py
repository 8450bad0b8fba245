"""Deterministic per-site instruction streams.

Each lattice site carries an infinite sequence of instructions: with
probability lam/(1+lam) an instruction is a sleep attempt, otherwise it moves
one particle to a uniformly chosen neighbor.  The sequence is a pure function
of (master seed, site, index, lam), realized by hashing a 64-bit counter
(splitmix64 finalizer), so no state is stored and any prefix can be replayed
under any toppling schedule.

The raw stream is the primitive.  The movement subsequence and the run
lengths of sleeps between movements (geometric on {0,1,...} with success
1/(1+lam)) are derived views; interleaving them reconstructs the raw stream
exactly.
"""

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

#: Recorded in every output file so results are replayable.
GENERATOR_ID = "splitmix64-v1"

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

#: Instruction codes: -1 sleep, 0..3 move in the fixed neighbor order.
SLEEP = -1


def mix64(z):
    """Splitmix64 finalizer; bijective on 64-bit words."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64_array(z):
    """Vectorized :func:`mix64` on a uint64 ndarray (wraparound intended)."""
    with np.errstate(over="ignore"):
        z = z.astype(np.uint64, copy=True)
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


def site_key(master_seed, x, y):
    """64-bit stream key for one site under one master seed."""
    h = mix64(master_seed & MASK64)
    h = mix64((h + GAMMA + (x & MASK64)) & MASK64)
    return mix64((h + GAMMA + (y & MASK64)) & MASK64)


def site_keys_for_box(master_seed, b):
    """uint64 keys for every interior site of a box, in flat-index order."""
    with np.errstate(over="ignore"):
        coords = b.coords().astype(np.uint64)
        h = np.uint64(mix64(master_seed & MASK64))
        g = np.uint64(GAMMA)
        k = mix64_array(coords[:, 0] + (h + g))
        out = mix64_array(coords[:, 1] + (k + g))
    return out


def derive_seed(master_seed, tag, index=0):
    """Independent derived seed; used for replica, policy and init streams."""
    h = mix64((master_seed ^ tag) & MASK64)
    return mix64((h + GAMMA + (index & MASK64)) & MASK64)


def word(key, k):
    """The k-th raw 64-bit word of a stream (k >= 1)."""
    return mix64((int(key) + k * GAMMA) & MASK64)


def word_to_unit(w):
    """Map a 64-bit word to a float in [0, 1) using the top 53 bits."""
    return (w >> 11) * 2.0**-53


def validate_lambda(lam):
    """Reject negative or non-finite sleep rates; warn above 1."""
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"sleep rate must be finite and >= 0, got {lam}")
    if lam >= 1:
        warnings.warn(
            f"sleep rate {lam} >= 1: dynamics are well-defined but outside "
            "the regime the tail bounds target",
            stacklevel=2,
        )
    return lam


def sleep_threshold(lam):
    """Integer T with P(word < T) = lam/(1+lam) up to 2^-64.

    Computed from the exact rational value of the float lam, so every kernel
    and every re-scan sees the same threshold.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"sleep rate must be finite and >= 0, got {lam}")
    frac = Fraction(lam)
    return int((frac * (1 << 64)) / (1 + frac))


def code_at(key, k, threshold):
    """Instruction code at index k: SLEEP or a direction 0..3."""
    w = word(key, k)
    if w < threshold:
        return SLEEP
    return w & 3


def codes_block(key, k0, count, threshold):
    """Codes for indices k0..k0+count-1 as an int64 array (vectorized)."""
    with np.errstate(over="ignore"):
        ks = np.arange(k0, k0 + count, dtype=np.uint64)
        w = mix64_array(np.uint64(int(key)) + ks * np.uint64(GAMMA))
    out = (w & np.uint64(3)).astype(np.int64)
    out[w < np.uint64(threshold)] = SLEEP
    return out


@dataclass(frozen=True)
class Instruction:
    """A single decoded instruction: kind 'sleep' or 'move' (with direction)."""

    kind: str
    direction: int | None = None

    @property
    def is_sleep(self):
        return self.kind == "sleep"


@dataclass(frozen=True)
class InstructionStream:
    """Value-like handle on one site's instruction sequence."""

    master_seed: int
    site: tuple
    lam: float
    key: int = field(init=False, repr=False)
    threshold: int = field(init=False, repr=False)

    def __post_init__(self):
        validate_lambda(self.lam)
        object.__setattr__(self, "key",
                           site_key(self.master_seed, self.site[0], self.site[1]))
        object.__setattr__(self, "threshold", sleep_threshold(self.lam))

    def code(self, k):
        return code_at(self.key, k, self.threshold)

    def codes(self, k0, count):
        return codes_block(self.key, k0, count, self.threshold)


def instruction_at(stream, k):
    """The k-th instruction of a stream (k >= 1); pure and replayable."""
    if k < 1:
        raise ValueError(f"instruction index must be >= 1, got {k}")
    c = stream.code(k)
    if c == SLEEP:
        return Instruction("sleep")
    return Instruction("move", int(c))


def _movement_position(stream, m):
    """Raw index of the m-th movement (m >= 1); position 0 for m = 0."""
    if m == 0:
        return 0
    seen = 0
    k0 = 1
    block = max(16, min(1024, 2 * m))
    while True:
        codes = stream.codes(k0, block)
        cum = np.cumsum(codes >= 0)
        if seen + cum[-1] >= m:
            j = int(np.searchsorted(cum, m - seen, side="left"))
            return k0 + j
        seen += int(cum[-1])
        k0 += block
        block = min(2 * block, 1 << 16)


def movement(stream, k):
    """Direction of the k-th movement instruction (the k-th non-sleep code)."""
    if k < 1:
        raise ValueError(f"movement index must be >= 1, got {k}")
    return int(stream.code(_movement_position(stream, k)))


def movement_counts(stream, m):
    """Counts of each direction among the first m movements (length-4 list)."""
    if m < 0:
        raise ValueError(f"movement count must be >= 0, got {m}")
    counts = [0, 0, 0, 0]
    if m == 0:
        return counts
    seen = 0
    k0 = 1
    block = 1024
    while seen < m:
        codes = stream.codes(k0, block)
        for c in codes:
            if c >= 0:
                counts[c] += 1
                seen += 1
                if seen == m:
                    return counts
        k0 += block
    return counts


def movement_count(stream, m, d):
    """n_{x,y}(m): occurrences of direction d among the first m movements."""
    if not 0 <= d < 4:
        raise ValueError(f"direction must be in 0..3, got {d}")
    return movement_counts(stream, m)[d]


def chi(stream, m):
    """1 iff the instruction right after the m-th movement is a sleep.

    Equivalently 1{g_m > 0}; Bernoulli with parameter lam/(1+lam).
    """
    if m < 0:
        raise ValueError(f"movement count must be >= 0, got {m}")
    pos = _movement_position(stream, m)
    return 1 if stream.code(pos + 1) == SLEEP else 0


def gap(stream, k):
    """g_k: run length of sleeps between movements k and k+1 (g_0 precedes
    the first movement)."""
    if k < 0:
        raise ValueError(f"gap index must be >= 0, got {k}")
    if stream.threshold == 0:
        return 0
    pos = _movement_position(stream, k)
    run = 0
    while stream.code(pos + 1 + run) == SLEEP:
        run += 1
    return run


def chi_of_key(key, m, threshold):
    """Stream-free variant of :func:`chi`, for bulk field checks."""
    if m == 0:
        return 1 if code_at(key, 1, threshold) == SLEEP else 0
    seen = 0
    k0 = 1
    block = 4096
    while True:
        codes = codes_block(key, k0, block, threshold)
        cum = np.cumsum(codes >= 0)
        if seen + cum[-1] >= m:
            j = int(np.searchsorted(cum, m - seen, side="left"))
            pos = k0 + j
            return 1 if code_at(key, pos + 1, threshold) == SLEEP else 0
        seen += int(cum[-1])
        k0 += block


def chi_field(master_seed, lam, b, m_array):
    """chi_x(m_x) for every interior site, re-derived from raw streams."""
    threshold = sleep_threshold(lam)
    keys = site_keys_for_box(master_seed, b)
    return np.array(
        [chi_of_key(int(keys[i]), int(m_array[i]), threshold)
         for i in range(b.n_sites)],
        dtype=np.int64,
    )
