"""Distributions, Shannon/Tsallis entropies, surprisals and counting approximations.

Shannon and coding quantities default to bits. Everything on the Tsallis side
(``tsallis_entropy``, ``q_surprisal``) is in nats with ``k = 1`` unless a
different ``k`` is supplied, so the ``q -> 1`` limits land on natural logs.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from aeptools.errors import DomainError

LN2 = math.log(2.0)
SUM_TOL = 1e-12


class Units(str, enum.Enum):
    BITS = "bits"
    NATS = "nats"
    TSALLIS = "tsallis-k-units"


@dataclass(frozen=True)
class EntropyValue:
    value: float
    units: Units

    def to(self, units: Units) -> "EntropyValue":
        units = Units(units)
        if units == self.units:
            return self
        if Units.TSALLIS in (units, self.units):
            raise DomainError("Tsallis values do not convert to bits or nats")
        if units == Units.NATS:
            return EntropyValue(self.value * LN2, units)
        return EntropyValue(self.value / LN2, units)

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a finite alphabet, with optional letter values.

    ``probs`` are renormalised by their compensated sum after validation, so
    downstream identities that rely on ``sum(p) == 1`` hold to the last ulp.
    """

    probs: np.ndarray
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DomainError("probs must be a non-empty 1-D vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DomainError("probs must be finite and non-negative")
        total = math.fsum(p)
        if abs(total - 1.0) > SUM_TOL:
            raise DomainError(f"probs sum to {total!r}, expected 1 within {SUM_TOL}")
        p = p / total
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.shape != p.shape:
                raise DomainError("values must have the same length as probs")
            if not np.all(np.isfinite(v)):
                raise DomainError("values must be finite")
            v.flags.writeable = False
            object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    @property
    def is_binary(self) -> bool:
        return self.size == 2 and bool(np.all(self.probs > 0))

    def with_values(self, values) -> "Distribution":
        return Distribution(self.probs, values)

    def to_dict(self) -> dict:
        out = {"probs": [float(x) for x in self.probs]}
        if self.values is not None:
            out["values"] = [float(x) for x in self.values]
        return out

    def digest(self) -> str:
        """SHA-256 over the canonical JSON form; used for provenance and file headers."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        same_values = (self.values is None and other.values is None) or (
            self.values is not None
            and other.values is not None
            and np.array_equal(self.values, other.values)
        )
        return np.array_equal(self.probs, other.probs) and same_values

    __hash__ = None

    @classmethod
    def uniform(cls, size: int) -> "Distribution":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def binary(cls, p_one: float) -> "Distribution":
        """Binary source with ``P(letter 1) = p_one``."""
        return cls([1.0 - p_one, p_one])


def load_distribution(source) -> Distribution:
    """Load ``{"probs": [...], "values": [...]}`` from a path, JSON string or mapping."""
    if isinstance(source, Distribution):
        return source
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            with open(text) as fh:
                doc = json.load(fh)
    if "probs" not in doc:
        raise DomainError("distribution document needs a 'probs' array")
    return Distribution(doc["probs"], doc.get("values"))


def save_distribution(d: Distribution, path) -> None:
    with open(path, "w") as fh:
        json.dump(d.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class QParam:
    q: float
    k: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.q):
            raise DomainError("q must be finite")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise DomainError("k must be positive")


def as_qparam(qp: Union[QParam, float]) -> QParam:
    return qp if isinstance(qp, QParam) else QParam(float(qp))


def _as_distribution(d) -> Distribution:
    return d if isinstance(d, Distribution) else Distribution(d)


def binary_entropy(p: float) -> EntropyValue:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    h = 0.0
    for x in (p, 1.0 - p):
        if x > 0:
            h -= x * math.log2(x)
    return EntropyValue(h, Units.BITS)


def shannon_entropy(d, units: Union[Units, str] = Units.BITS) -> EntropyValue:
    d = _as_distribution(d)
    units = Units(units)
    if units == Units.TSALLIS:
        raise DomainError("Shannon entropy is reported in bits or nats")
    p = d.probs[d.support]
    log = np.log2 if units == Units.BITS else np.log
    return EntropyValue(math.fsum(-p * log(p)), units)


def _tsallis_terms(p: np.ndarray, q: float) -> np.ndarray:
    # (1 - p^(q-1)) / (q - 1), via expm1 so that q close to 1 keeps full precision
    return -np.expm1((q - 1.0) * np.log(p)) / (q - 1.0)


def tsallis_entropy(d, qp: Union[QParam, float]) -> EntropyValue:
    """``k (1 - sum p^q) / (q - 1)``; at ``q == 1`` the Shannon entropy in nats times k.

    ``1 - sum p^q`` is evaluated as ``sum p (1 - p^(q-1))``, which is the same
    quantity for a normalised vector and does not cancel catastrophically.
    """
    d = _as_distribution(d)
    qp = as_qparam(qp)
    p = d.probs[d.support]
    if qp.q == 1.0:
        s = math.fsum(-p * np.log(p))
    else:
        s = math.fsum(p * _tsallis_terms(p, qp.q))
    return EntropyValue(qp.k * s, Units.TSALLIS)


def q_surprisal(p, qp: Union[QParam, float]):
    """Deformed surprisal ``(1 - p^(q-1)) / (q - 1)``; ``-ln p`` at ``q == 1``.

    Accepts a scalar or an array of probabilities in ``(0, 1]``.
    """
    qp = as_qparam(qp)
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0)) or np.any(arr > 1):
        raise DomainError("q_surprisal is defined for probabilities in (0, 1]")
    if qp.q == 1.0:
        out = -np.log(arr)
    else:
        out = _tsallis_terms(arr, qp.q)
    return float(out) if out.ndim == 0 else out


def stirling_log_factorial(n: int) -> float:
    """Two-term Stirling form ``n ln n - n`` (nats)."""
    if n < 0:
        raise DomainError("n must be non-negative")
    if n <= 1:
        return 0.0
    return n * math.log(n) - n


@lru_cache(maxsize=4096)
def exact_log_factorial(n: int) -> float:
    """``ln n!`` by compensated summation of ``ln k``."""
    if n < 0:
        raise DomainError("n must be non-negative")
    return math.fsum(math.log(k) for k in range(2, n + 1))


def exact_log_multinomial(n: int, composition: Sequence[int]) -> float:
    """``log2`` of ``n! / prod(c!)`` for an integer composition of ``n``."""
    comp = [int(c) for c in composition]
    if any(c < 0 for c in comp) or sum(comp) != n:
        raise DomainError(f"composition {comp} does not sum to n={n}")
    nats = exact_log_factorial(n) - math.fsum(exact_log_factorial(c) for c in comp)
    return nats / LN2


def typical_count_estimate(n: int, d) -> float:
    """``n H(X)`` in bits: the log2 of the rough typical-set size."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return n * shannon_entropy(d).value


def letter_counts(d: Distribution, s) -> np.ndarray:
    """Composition of a sequence (or of each row of a 2-D batch)."""
    s = np.asarray(s)
    if s.size and (not np.issubdtype(s.dtype, np.integer)):
        if not np.all(np.mod(s, 1) == 0):
            raise DomainError("sequence letters must be integer indices")
        s = s.astype(np.int64)
    if s.size and (s.min() < 0 or s.max() >= d.size):
        raise DomainError(f"letters must be indices in [0, {d.size})")
    if s.ndim == 1:
        return np.bincount(s.astype(np.int64), minlength=d.size)
    if s.ndim == 2:
        out = np.zeros((s.shape[0], d.size), dtype=np.int64)
        for letter in range(d.size):
            out[:, letter] = np.count_nonzero(s == letter, axis=1)
        return out
    raise DomainError("sequence must be 1-D (or a 2-D batch of sequences)")


def composition_weighted_sum(counts, weights) -> np.ndarray:
    """``sum_i counts[..., i] * weights[i]`` accumulated letter by letter.

    Every statistic in the package goes through this one routine, so a
    sequence, its type class and a Monte Carlo row holding the same
    composition always produce bit-identical values.
    """
    counts = np.asarray(counts)
    total = np.zeros(counts.shape[:-1], dtype=float)
    for i, w in enumerate(weights):
        c = counts[..., i]
        if np.any(c):
            with np.errstate(invalid="ignore"):
                total = total + np.where(c != 0, c * w, 0.0)
    return total


def log2_probabilities(d: Distribution) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log2(d.probs)


def sequence_log_probability(d, s) -> float:
    """``log2 P(s)`` for an i.i.d. source, summed in log space.

    Returns ``-inf`` when ``s`` uses a zero-probability letter.
    """
    d = _as_distribution(d)
    counts = letter_counts(d, s)
    if np.any(counts[d.probs == 0] > 0):
        return -math.inf
    return float(composition_weighted_sum(counts, log2_probabilities(d)))
