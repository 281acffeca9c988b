"""Typical-set block code: fixed-rate compression of length-``n`` blocks.

Every epsilon-typical block gets an index into the typical set, written as a
``ceil(nR)``-bit big-endian payload behind a one-bit success flag. Atypical
blocks are emitted with the flag cleared and an all-zero payload, so failures
are explicit on the wire.

For binary sources the typical set is a contiguous range of one-counts
``k_min..k_max``. Indices are ``offset(k)`` (sizes of the classes below
``k``) plus the lexicographic rank of the block among ``n``-bit strings with
``k`` ones. Nothing is materialised and all arithmetic is exact. Small
non-binary alphabets fall back to an explicit lexicographic listing.

Compressed file layout (header little-endian, payload bits MSB first)::

    magic      8s   b"AEPTSC01"
    n          u32  block length
    rate       u32 numerator, u32 denominator
    epsilon    u64  IEEE-754 bits of the float
    dist_hash  32s  SHA-256 of the distribution's canonical JSON
    blocks     u64  number of codewords that follow
    letters    u64  source length before padding the last block
    payload    blocks * (1 + ceil(nR)) bits, zero-padded to a byte
"""

from __future__ import annotations

import bisect
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from aeptools.entropy import Distribution, letter_counts, shannon_entropy
from aeptools.errors import CapacityError, DomainError, MalformedCodewordError, RateInfeasibleError
from aeptools.sampling import map_blocks, sample_letters, wilson_interval
from aeptools.typicality import (
    _class_table,
    exact_center,
    iter_all_sequences,
    multinomial,
    surprisal_bits,
    top_set_mass,
    within,
)

EXHAUSTIVE_CODEBOOK_CAP = 2**20
MAGIC = b"AEPTSC01"
HEADER = struct.Struct("<8sIIIQ32sQQ")
DEFAULT_FIXED_EPSILON = 0.01


def as_rate(rate) -> Fraction:
    """Read a float rate as the short decimal it was meant to be (0.55 -> 11/20)."""
    r = rate if isinstance(rate, Fraction) else Fraction(rate).limit_denominator(10**6)
    if r <= 0:
        raise DomainError(f"rate must be positive, got {rate!r}")
    return r


@dataclass(frozen=True)
class CodeParams:
    n: int
    rate: Fraction
    epsilon: float

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("block length n must be >= 1")
        object.__setattr__(self, "rate", as_rate(self.rate))
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be >= 0")

    @property
    def width(self) -> int:
        return math.ceil(self.n * self.rate)


@dataclass(frozen=True)
class Codeword:
    ok: bool
    payload: int
    width: int

    def __post_init__(self):
        if self.payload < 0 or self.payload >> self.width:
            raise MalformedCodewordError(f"payload does not fit in {self.width} bits")
        if not self.ok and self.payload:
            raise MalformedCodewordError("a failure codeword must carry an all-zero payload")

    @property
    def bits(self) -> str:
        body = format(self.payload, f"0{self.width}b") if self.width else ""
        return ("1" if self.ok else "0") + body

    @classmethod
    def from_bits(cls, bits: str) -> "Codeword":
        if not bits or set(bits) - {"0", "1"}:
            raise MalformedCodewordError("codeword must be a non-empty bit string")
        payload = int(bits[1:], 2) if len(bits) > 1 else 0
        return cls(bits[0] == "1", payload, len(bits) - 1)


def _pascal(n: int, k_max: int) -> List[List[int]]:
    """``table[m][r] == C(m, r)`` for ``m < n`` and ``r <= k_max``."""
    rows = [[1] + [0] * k_max]
    for m in range(1, n):
        prev = rows[-1]
        row = [1] + [prev[r - 1] + prev[r] for r in range(1, k_max + 1)]
        rows.append(row)
    return rows


class Codebook:
    """Immutable indexing scheme over the epsilon-typical set of ``d`` at block length ``n``."""

    def __init__(self, d: Distribution, params: CodeParams):
        self.distribution = d
        self.params = params
        self.entropy = shannon_entropy(d).value
        self._weights = surprisal_bits(d)
        self._center = exact_center(d, self._weights)
        if d.is_binary:
            self._build_binary()
        else:
            self._build_exhaustive()
        if self.size > (1 << self.width):
            need = (self.size - 1).bit_length()
            raise RateInfeasibleError(
                f"typical set has {self.size} sequences (log2 = {math.log2(self.size):.3f}); "
                f"{self.width} payload bits hold at most 2^{self.width}. "
                f"Need R >= {need / params.n:.6g}",
                min_rate=need / params.n,
            )

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def width(self) -> int:
        return self.params.width

    @property
    def log2_size(self) -> float:
        return math.log2(self.size) if self.size else -math.inf

    def _build_binary(self):
        n = self.n
        table = _class_table(self.distribution, n)
        ks = np.flatnonzero(within(table, self._weights, self._center, self.params.epsilon))
        self.method = "binary"
        if ks.size and ks[-1] - ks[0] + 1 != ks.size:
            raise DomainError("typical one-counts are not contiguous")
        self.k_min = int(ks[0]) if ks.size else 0
        self.k_max = int(ks[-1]) if ks.size else -1
        self._offsets = []
        total = 0
        for k in range(self.k_min, self.k_max + 1):
            self._offsets.append(total)
            total += math.comb(n, k)
        self.size = total
        self._binom = None

    def _build_exhaustive(self):
        d, n = self.distribution, self.n
        if d.size**n > EXHAUSTIVE_CODEBOOK_CAP:
            raise CapacityError(
                f"non-binary codebook needs W^n <= {EXHAUSTIVE_CODEBOOK_CAP}, got {d.size}^{n}"
            )
        self.method = "exhaustive"
        chunks = []
        for seqs in iter_all_sequences(d.size, n):
            mask = within(letter_counts(d, seqs), self._weights, self._center, self.params.epsilon)
            chunks.append(seqs[mask])
        self._members = np.concatenate(chunks) if chunks else np.zeros((0, n), np.int64)
        self._index = {tuple(row): i for i, row in enumerate(self._members.tolist())}
        self.size = len(self._members)

    def _table(self):
        if self._binom is None:
            self._binom = _pascal(self.n, max(self.k_max, 0))
        return self._binom

    def is_typical(self, s) -> bool:
        counts = letter_counts(self.distribution, s)
        return bool(within(counts, self._weights, self._center, self.params.epsilon)[0])

    def index(self, s) -> Optional[int]:
        """Rank of ``s`` in the typical set, or ``None`` if ``s`` is atypical."""
        s = np.asarray(s)
        if s.ndim != 1 or s.size != self.n:
            raise DomainError(f"block must have length {self.n}")
        if not self.is_typical(s):
            return None
        if self.method == "exhaustive":
            return self._index[tuple(s.tolist())]
        ones = np.flatnonzero(s == 1)
        k = ones.size
        table, n = self._table(), self.n
        rank, r = 0, k
        for i in ones.tolist():
            rank += table[n - 1 - i][r]
            r -= 1
        return self._offsets[k - self.k_min] + rank

    def sequence(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise MalformedCodewordError(f"index {index} outside the typical set of size {self.size}")
        if self.method == "exhaustive":
            return self._members[index].copy()
        j = bisect.bisect_right(self._offsets, index) - 1
        k = self.k_min + j
        rest = index - self._offsets[j]
        table, n = self._table(), self.n
        out = np.zeros(n, dtype=np.int64)
        r = k
        for i in range(n):
            if r == 0:
                break
            c = table[n - 1 - i][r]
            if rest >= c:
                out[i] = 1
                rest -= c
                r -= 1
        return out


def build_codebook(d, params: CodeParams) -> Codebook:
    d = d if isinstance(d, Distribution) else Distribution(d)
    return Codebook(d, params)


def encode(codebook: Codebook, s) -> Codeword:
    idx = codebook.index(s)
    if idx is None:
        return Codeword(False, 0, codebook.width)
    return Codeword(True, idx, codebook.width)


def decode(codebook: Codebook, c: Codeword) -> Optional[np.ndarray]:
    """Inverse of :func:`encode`; ``None`` for a failure codeword."""
    if c.width != codebook.width:
        raise MalformedCodewordError(f"codeword width {c.width} != codebook width {codebook.width}")
    if not c.ok:
        return None
    return codebook.sequence(c.payload)


# -- experiments ---------------------------------------------------------------


@dataclass(frozen=True)
class CodecStats:
    successes: int
    failures: int
    empirical_reliability: float
    ci_low: float
    ci_high: float
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return self.successes + self.failures


def reliability_estimate(d, params: CodeParams, trials: int, seed: int, threads: int = 1, codebook=None) -> CodecStats:
    """Round-trip success rate of the block code on i.i.d. samples."""
    d = d if isinstance(d, Distribution) else Distribution(d)
    book = codebook or build_codebook(d, params)

    def block(rng, m):
        ok = 0
        for s in sample_letters(d, params.n, m, rng):
            back = decode(book, encode(book, s))
            ok += back is not None and np.array_equal(back, s)
        return ok

    successes = sum(map_blocks(trials, seed, block, threads))
    lo, hi = wilson_interval(successes, trials)
    return CodecStats(
        successes=successes,
        failures=trials - successes,
        empirical_reliability=successes / trials,
        ci_low=lo,
        ci_high=hi,
        seed=seed,
        params={
            "distribution": d.digest(),
            "n": params.n,
            "rate": str(params.rate),
            "epsilon": params.epsilon,
            "width": params.width,
        },
    )


def max_feasible_epsilon(d, n: int, rate) -> Optional[float]:
    """Largest epsilon whose typical set still fits in ``ceil(nR)`` bits.

    Candidates are the per-class deviations ``|rate(k) - H|``; the typical set
    only changes at those values and grows with epsilon. ``None`` when even
    the smallest non-empty typical set is too large.
    """
    d = d if isinstance(d, Distribution) else Distribution(d)
    width = math.ceil(n * as_rate(rate))
    table = _class_table(d, n)
    w = surprisal_bits(d)
    h = exact_center(d, w)
    finite = np.where(np.isfinite(w), w, 0.0)
    devs = np.unique(np.abs(table @ finite / n - float(h)))
    sizes = [multinomial(row) for row in table]
    cap = 1 << width

    def fits(eps):
        mask = within(table, w, h, eps)
        return sum(s for s, m in zip(sizes, mask) if m) <= cap

    # a candidate can round below its exact deviation and select nothing; skip those
    lo = next(i for i, e in enumerate(devs) if within(table, w, h, e).any())
    hi = len(devs) - 1
    if not fits(devs[lo]):
        return None
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fits(devs[mid]):
            lo = mid
        else:
            hi = mid - 1
    return float(devs[lo])


def policy_epsilon(policy: str, d, n: int, rate, fixed_epsilon: float = DEFAULT_FIXED_EPSILON) -> float:
    """Epsilon used for one rate of a sweep.

    ``midpoint``: ``(R - H)/2`` above the entropy, ``fixed_epsilon`` otherwise.
    ``max-feasible``: the largest epsilon whose typical set fits the width
    (``fixed_epsilon`` if none does). ``fixed``: always ``fixed_epsilon``.
    """
    h = shannon_entropy(d).value
    r = float(as_rate(rate))
    if policy == "midpoint":
        return (r - h) / 2 if r > h else fixed_epsilon
    if policy == "max-feasible":
        eps = max_feasible_epsilon(d, n, rate)
        return fixed_epsilon if eps is None else eps
    if policy == "fixed":
        return fixed_epsilon
    raise DomainError(f"unknown epsilon policy {policy!r}")


@dataclass(frozen=True)
class SweepRow:
    rate: float
    epsilon: float
    width: int
    feasible: bool
    log2_typical_size: float
    min_rate: Optional[float]
    reliability: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    mass_bound: float
    trials: int
    seed: int


def rate_sweep(
    d,
    n: int,
    rates: Sequence[float],
    epsilon_policy: str = "midpoint",
    trials: int = 10_000,
    seed: int = 0,
    fixed_epsilon: float = DEFAULT_FIXED_EPSILON,
    threads: int = 1,
) -> List[SweepRow]:
    """Feasibility and reliability of the block code across rates.

    ``mass_bound`` is the largest probability any collection of
    ``2^ceil(nR)`` blocks can hold, an upper bound on the reliability of every
    scheme at that width.
    """
    d = d if isinstance(d, Distribution) else Distribution(d)
    rates = [float(r) for r in rates]
    if rates != sorted(rates):
        raise DomainError("rates must be sorted ascending")
    rows = []
    for rate in rates:
        eps = policy_epsilon(epsilon_policy, d, n, rate, fixed_epsilon)
        params = CodeParams(n, rate, eps)
        bound = top_set_mass(d, n, Fraction(params.width, n))
        try:
            book = build_codebook(d, params)
        except RateInfeasibleError as exc:
            log2_size = math.log2(_typical_size(d, params))
            rows.append(SweepRow(rate, eps, params.width, False, log2_size, exc.min_rate, None, None, None, bound, trials, seed))
            continue
        stats = reliability_estimate(d, params, trials, seed, threads, codebook=book)
        rows.append(
            SweepRow(
                rate, eps, params.width, True, book.log2_size, None,
                stats.empirical_reliability, stats.ci_low, stats.ci_high, bound, trials, seed,
            )
        )
    return rows


def _typical_size(d: Distribution, params: CodeParams) -> int:
    table = _class_table(d, params.n)
    w = surprisal_bits(d)
    mask = within(table, w, exact_center(d, w), params.epsilon)
    return sum(multinomial(row) for row in table[mask])


# -- block files ---------------------------------------------------------------


def compress(codebook: Codebook, letters) -> List[Codeword]:
    """Split ``letters`` into blocks and encode each; the tail is padded with the likeliest letter."""
    letters = np.asarray(letters, dtype=np.int64)
    n = codebook.n
    pad = (-letters.size) % n
    if pad:
        fill = int(np.argmax(codebook.distribution.probs))
        letters = np.concatenate([letters, np.full(pad, fill, dtype=np.int64)])
    return [encode(codebook, block) for block in letters.reshape(-1, n)]


def decompress(codebook: Codebook, codewords: Sequence[Codeword]) -> List[Optional[np.ndarray]]:
    return [decode(codebook, c) for c in codewords]


def pack_codewords(codewords: Sequence[Codeword]) -> bytes:
    bits = "".join(c.bits for c in codewords)
    if not bits:
        return b""
    arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
    return np.packbits(arr).tobytes()


def unpack_codewords(data: bytes, count: int, width: int) -> List[Codeword]:
    step = width + 1
    arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if arr.size < count * step:
        raise MalformedCodewordError("payload shorter than the declared block count")
    bits = (arr[: count * step] + ord("0")).tobytes().decode("ascii")
    return [Codeword.from_bits(bits[i * step : (i + 1) * step]) for i in range(count)]


def write_block_file(fh, codebook: Codebook, codewords: Sequence[Codeword], letters: int) -> None:
    p = codebook.params
    eps_bits = struct.unpack("<Q", struct.pack("<d", p.epsilon))[0]
    fh.write(
        HEADER.pack(
            MAGIC,
            p.n,
            p.rate.numerator,
            p.rate.denominator,
            eps_bits,
            bytes.fromhex(codebook.distribution.digest()),
            len(codewords),
            letters,
        )
    )
    fh.write(pack_codewords(codewords))


@dataclass(frozen=True)
class BlockFileHeader:
    n: int
    rate: Fraction
    epsilon: float
    dist_hash: str
    blocks: int
    letters: int

    @property
    def params(self) -> CodeParams:
        return CodeParams(self.n, self.rate, self.epsilon)


def read_block_file(fh):
    raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise MalformedCodewordError("truncated header")
    magic, n, num, den, eps_bits, digest, blocks, letters = HEADER.unpack(raw)
    if magic != MAGIC:
        raise MalformedCodewordError(f"bad magic {magic!r}")
    if den == 0:
        raise MalformedCodewordError("rate denominator is zero")
    eps = struct.unpack("<d", struct.pack("<Q", eps_bits))[0]
    header = BlockFileHeader(n, Fraction(num, den), eps, digest.hex(), blocks, letters)
    codewords = unpack_codewords(fh.read(), blocks, header.params.width)
    return header, codewords
