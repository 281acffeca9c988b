"""Epsilon-typicality, typical-set censuses and concentration experiments.

A sequence's statistics depend only on its letter composition, so the exact
machinery groups sequences into type classes: one statistic per class, the
class size from a multinomial coefficient. Exhaustive enumeration is kept
alongside as an independent check for small ``W**n``.

Verdicts are decided on the exact rational values of the float inputs
(per-letter weights, epsilon), with the reference taken as ``sum p w`` in
rationals rather than the rounded entropy. A float fast path settles
everything outside a narrow band, so the log form ``|rate - H| <= eps`` and
the probability sandwich ``2^-n(H+eps) <= P <= 2^-n(H-eps)`` can never
disagree, and a sequence always gets the same verdict as its type class.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional

import mpmath
import numpy as np

from aeptools.entropy import (
    LN2,
    Distribution,
    EntropyValue,
    QParam,
    Units,
    as_qparam,
    composition_weighted_sum,
    letter_counts,
    log2_probabilities,
    q_surprisal,
    sequence_log_probability,
    shannon_entropy,
    tsallis_entropy,
)
from aeptools.errors import CapacityError, DomainError
from aeptools.sampling import MonteCarloEstimate, map_blocks, sample_counts

EXHAUSTIVE_CAP = 2**24
MAX_TYPE_CLASSES = 2_000_000
_BAND = 1e-9


def _dist(d) -> Distribution:
    return d if isinstance(d, Distribution) else Distribution(d)


def _check_epsilon(epsilon):
    if not epsilon >= 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon!r}")


def _check_q(qp: QParam):
    if not qp.q > 0:
        raise DomainError(f"q must be > 0, got {qp.q!r}")


# -- per-letter weights ------------------------------------------------------


def surprisal_bits(d: Distribution) -> np.ndarray:
    """``-log2 p`` per letter (``inf`` off the support)."""
    return -log2_probabilities(d)


def q_surprisal_weights(d: Distribution, qp: QParam) -> np.ndarray:
    """Per-letter q-surprisal in nats; ``inf`` off the support."""
    w = np.full(d.size, np.inf)
    s = d.support
    w[s] = q_surprisal(d.probs[s], qp)
    return w


def surprisal_distribution(d) -> Distribution:
    """The letter distribution carrying ``-log2 p`` as values (zero off the support)."""
    d = _dist(d)
    v = np.where(d.probs > 0, surprisal_bits(d), 0.0)
    return d.with_values(v)


def q_surprisal_distribution(d, qp) -> Distribution:
    d = _dist(d)
    w = q_surprisal_weights(d, as_qparam(qp))
    return d.with_values(np.where(np.isfinite(w), w, 0.0))


def q_statistic_variance(d, qp) -> float:
    """Closed-form variance of one letter's q-surprisal, ``sum p xi^2 - S_q^2``."""
    d = _dist(d)
    qp = as_qparam(qp)
    s = d.support
    xi = np.atleast_1d(q_surprisal(d.probs[s], qp))
    mean = math.fsum(d.probs[s] * xi)
    return math.fsum(d.probs[s] * (xi - mean) ** 2)


# -- exact comparators -------------------------------------------------------


def _exact_sum(counts, weights) -> Fraction:
    return sum((int(c) * Fraction(float(w)) for c, w in zip(counts, weights) if c), Fraction(0))


def exact_center(d: Distribution, weights) -> Fraction:
    """``sum p w`` over the support in rationals.

    Used as the centre of the exact comparison so that a composition equal
    to ``n * p`` lands on it exactly, whatever rounding the float entropy saw.
    """
    return sum(
        (Fraction(float(p)) * Fraction(float(w)) for p, w in zip(d.probs, weights) if p > 0),
        Fraction(0),
    )


def _log_form(counts, weights, center, eps) -> bool:
    n = int(sum(int(c) for c in counts))
    rate = _exact_sum(counts, weights) / n
    return abs(rate - Fraction(center)) <= Fraction(eps)


def _sandwich_form(counts, weights, center, eps) -> bool:
    # log2 P = -sum(c w); check -n(H+eps) <= log2 P <= -n(H-eps)
    n = int(sum(int(c) for c in counts))
    log_p = -_exact_sum(counts, weights)
    c, e = Fraction(center), Fraction(eps)
    return -n * (c + e) <= log_p <= -n * (c - e)


def within(counts, weights, center, eps: float) -> np.ndarray:
    """Vectorised ``|sum(c w)/n - center| <= eps`` for each composition row.

    ``center`` may be a float or an exact :class:`Fraction`; rows near the
    boundary are settled against it in rationals.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    weights = np.asarray(weights, dtype=float)
    n = counts.sum(axis=1)
    if np.any(n <= 0):
        raise DomainError("sequences must have length >= 1")
    off_support = ~np.isfinite(weights)
    impossible = counts[:, off_support].sum(axis=1) > 0 if off_support.any() else np.zeros(len(n), bool)
    w = np.where(off_support, 0.0, weights)
    stat = composition_weighted_sum(counts, w) / n
    dev = np.abs(stat - float(center)) - eps
    band = _BAND * (abs(float(center)) + eps + 1.0)
    out = dev <= 0
    for i in np.flatnonzero(np.abs(dev) <= band):
        out[i] = _log_form(counts[i], w, center, eps)
    out[impossible] = False
    return out


# -- single-sequence statistics ----------------------------------------------


@dataclass(frozen=True)
class TypicalityReport:
    statistic: float
    reference: EntropyValue
    epsilon: float
    is_typical: bool
    n: int


def _as_sequence(d: Distribution, s) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1:
        raise DomainError("a sequence is a 1-D vector of letter indices")
    letter_counts(d, s)  # validates indices
    return s


def empirical_entropy_rate(d, s) -> float:
    """``-log2 P(s) / n`` in bits."""
    d = _dist(d)
    s = _as_sequence(d, s)
    if s.size == 0:
        raise DomainError("the entropy rate of an empty sequence is undefined")
    log_p = sequence_log_probability(d, s)
    if log_p == -math.inf:
        raise DomainError("sequence uses a letter outside the support")
    return -log_p / s.size


def is_epsilon_typical(d, s, epsilon: float) -> TypicalityReport:
    d = _dist(d)
    _check_epsilon(epsilon)
    rate = empirical_entropy_rate(d, s)
    h = shannon_entropy(d)
    counts = letter_counts(d, s)
    w = surprisal_bits(d)
    verdict = bool(within(counts, w, exact_center(d, w), epsilon)[0])
    return TypicalityReport(rate, h, float(epsilon), verdict, int(np.asarray(s).size))


def probability_sandwich(d, s, epsilon: float) -> bool:
    """Typicality phrased as ``2^-n(H+eps) <= P(s) <= 2^-n(H-eps)``, exactly."""
    d = _dist(d)
    s = _as_sequence(d, s)
    if s.size == 0:
        raise DomainError("empty sequence")
    counts = letter_counts(d, s)
    if np.any(counts[d.probs == 0]):
        return False
    w = surprisal_bits(d)
    return _sandwich_form(counts, w, exact_center(d, w), epsilon)


def q_typicality_statistic(d, s, qp) -> float:
    """Mean q-surprisal (nats) over the letters of ``s``."""
    d = _dist(d)
    qp = as_qparam(qp)
    _check_q(qp)
    s = _as_sequence(d, s)
    if s.size == 0:
        raise DomainError("empty sequence")
    counts = letter_counts(d, s)
    if np.any(counts[d.probs == 0]):
        raise DomainError("sequence uses a letter outside the support")
    w = q_surprisal_weights(d, qp)
    w = np.where(np.isfinite(w), w, 0.0)
    return float(composition_weighted_sum(counts, w)) / s.size


# -- censuses ----------------------------------------------------------------


@dataclass(frozen=True)
class SetCensus:
    n: int
    epsilon: float
    count: int
    mass: float
    lower_bound: float
    upper_bound: float
    delta: float = 0.1
    q: float = 1.0
    method: str = "type-class"
    exploratory: bool = False
    params: dict = field(default_factory=dict)

    @property
    def log2_count(self) -> float:
        return math.log2(self.count) if self.count else -math.inf

    @property
    def within_bounds(self) -> bool:
        return self.count > 0 and self.lower_bound <= self.log2_count <= self.upper_bound

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("params", "count")}
        out["count"] = str(self.count)
        out["log2_count"] = self.log2_count
        out["params"] = dict(self.params)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def type_class_count(n: int, width: int) -> int:
    return math.comb(n + width - 1, width - 1)


def compositions(n: int, parts: int) -> Iterator[tuple]:
    """All ``parts``-tuples of non-negative integers summing to ``n``."""
    if parts == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, parts - 1):
            yield (first,) + rest


def _class_table(d: Distribution, n: int) -> np.ndarray:
    """Composition rows over the full alphabet (zero columns off the support)."""
    support = d.support
    classes = type_class_count(n, support.size)
    if classes > MAX_TYPE_CLASSES:
        raise CapacityError(
            f"{classes} type classes for n={n} over {support.size} letters exceeds {MAX_TYPE_CLASSES}"
        )
    if support.size == 1:
        sub = np.array([[n]], dtype=np.int64)
    elif support.size == 2:
        k = np.arange(n + 1, dtype=np.int64)
        sub = np.stack([n - k, k], axis=1)
    else:
        sub = np.array(list(compositions(n, support.size)), dtype=np.int64)
    table = np.zeros((sub.shape[0], d.size), dtype=np.int64)
    table[:, support] = sub
    return table


def multinomial(counts) -> int:
    total, out = 0, 1
    for c in counts:
        c = int(c)
        total += c
        out *= math.comb(total, c)
    return out


def _class_mass(size: int, log_p: float) -> float:
    return 2.0 ** (math.log2(size) + log_p) if size else 0.0


def _check_exhaustive(d: Distribution, n: int, cap: int = EXHAUSTIVE_CAP):
    if d.size**n > cap:
        raise CapacityError(f"W^n = {d.size}^{n} exceeds the exhaustive cap {cap}")


def iter_all_sequences(width: int, n: int, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Every length-``n`` sequence over ``range(width)`` in lexicographic order, in chunks."""
    total = width**n
    powers = width ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % width


def _census(d, n, epsilon, weights, exhaustive):
    center = exact_center(d, weights)
    if n < 1:
        raise DomainError("n must be >= 1")
    _check_epsilon(epsilon)
    if exhaustive:
        _check_exhaustive(d, n)
        count, masses = 0, []
        for seqs in iter_all_sequences(d.size, n):
            counts = letter_counts(d, seqs)
            mask = within(counts, weights, center, epsilon)
            count += int(mask.sum())
            masses.extend(np.prod(d.probs[seqs[mask]], axis=1).tolist())
        return count, math.fsum(masses)
    table = _class_table(d, n)
    mask = within(table, weights, center, epsilon)
    log_p = composition_weighted_sum(table, np.where(d.probs > 0, log2_probabilities(d), 0.0))
    count, masses = 0, []
    for row, lp in zip(table[mask], log_p[mask]):
        size = multinomial(row)
        count += size
        masses.append(_class_mass(size, float(lp)))
    return count, math.fsum(masses)


def typical_set_bounds(entropy_bits: float, n: int, epsilon: float, delta: float):
    """log2-domain ``((1-delta) 2^{n(H-eps)}, 2^{n(H+eps)})``."""
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    return math.log2(1 - delta) + n * (entropy_bits - epsilon), n * (entropy_bits + epsilon)


def enumerate_typical_set(d, n: int, epsilon: float, delta: float = 0.1, exhaustive: bool = False) -> SetCensus:
    """Exact count and mass of the epsilon-typical set."""
    d = _dist(d)
    h = shannon_entropy(d).value
    count, mass = _census(d, n, epsilon, surprisal_bits(d), exhaustive)
    lo, hi = typical_set_bounds(h, n, epsilon, delta)
    return SetCensus(
        n=n,
        epsilon=float(epsilon),
        count=count,
        mass=min(mass, 1.0),
        lower_bound=lo,
        upper_bound=hi,
        delta=delta,
        method="exhaustive" if exhaustive else "type-class",
        params={"distribution": d.digest(), "entropy_bits": h},
    )


def q_set_census(d, n: int, epsilon: float, qp, delta: float = 0.1, exhaustive: bool = False) -> SetCensus:
    """Count and mass of sequences whose mean q-surprisal is within ``epsilon`` nats of ``S_q``.

    The reported bounds are the classical size bounds with ``H`` replaced by ``S_q``
    (``e^{n(S_q +- eps)}``, written in log2). They are candidates only; the
    census is marked exploratory and nothing is asserted about them.
    """
    d = _dist(d)
    qp = as_qparam(qp)
    _check_q(qp)
    _check_epsilon(epsilon)
    s_q = tsallis_entropy(d, QParam(qp.q)).value
    if qp.q == 1.0:
        base = enumerate_typical_set(d, n, epsilon / LN2, delta, exhaustive)
        count, mass = base.count, base.mass
    else:
        count, mass = _census(d, n, epsilon, q_surprisal_weights(d, qp), exhaustive)
    return SetCensus(
        n=n,
        epsilon=float(epsilon),
        count=count,
        mass=min(mass, 1.0),
        lower_bound=math.log2(1 - delta) + n * (s_q - epsilon) / LN2,
        upper_bound=n * (s_q + epsilon) / LN2,
        delta=delta,
        q=qp.q,
        method="exhaustive" if exhaustive else "type-class",
        exploratory=True,
        params={"distribution": d.digest(), "tsallis_nats": s_q},
    )


def collection_capacity(n: int, rate) -> int:
    """``floor(2^{nR})`` as an exact integer; ``rate`` is read as a short decimal fraction."""
    r = Fraction(rate).limit_denominator(10**6) if not isinstance(rate, Fraction) else rate
    if r <= 0:
        raise DomainError("rate must be positive")
    exponent = n * r
    if exponent.denominator == 1:
        return 1 << int(exponent)
    whole = exponent.numerator // exponent.denominator
    with mpmath.workprec(whole + 128):
        value = int(mpmath.floor(mpmath.power(2, mpmath.mpf(exponent.numerator) / exponent.denominator)))
    return value


def top_set_mass(d, n: int, rate: float, exhaustive: bool = False) -> float:
    """Probability mass of the ``floor(2^{nR})`` most probable length-``n`` sequences.

    Ordering whole type classes by their common probability gives the
    maximal-mass collection of that size; a class straddling the cut-off
    contributes only the sequences that fit.
    """
    d = _dist(d)
    if n < 1:
        raise DomainError("n must be >= 1")
    if not rate > 0:
        raise DomainError("rate must be positive")
    cap = collection_capacity(n, rate)
    total = len(d.support) ** n
    if cap >= total:
        return 1.0
    if exhaustive:
        _check_exhaustive(d, n)
        probs = np.concatenate([np.prod(d.probs[s], axis=1) for s in iter_all_sequences(d.size, n)])
        probs = np.sort(probs)[::-1]
        return min(1.0, math.fsum(probs[:cap].tolist()))
    table = _class_table(d, n)
    log_p = composition_weighted_sum(table, np.where(d.probs > 0, log2_probabilities(d), 0.0))
    order = np.argsort(-log_p, kind="stable")
    remaining, masses = cap, []
    for i in order:
        size = multinomial(table[i])
        take = min(size, remaining)
        masses.append(_class_mass(take, float(log_p[i])))
        remaining -= take
        if remaining == 0:
            break
    return min(1.0, math.fsum(masses))


# -- Monte Carlo ---------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationEstimate(MonteCarloEstimate):
    statistic_variance: float = math.nan
    closed_form_variance: float = math.nan
    variance_se: float = math.nan

    @property
    def variance_z(self) -> float:
        if self.variance_se == 0:
            return 0.0 if self.statistic_variance == self.closed_form_variance else math.inf
        return (self.statistic_variance - self.closed_form_variance) / self.variance_se


def estimate_typicality_probability(d, n: int, epsilon: float, trials: int, seed: int, threads: int = 1) -> MonteCarloEstimate:
    """Fraction of sampled length-``n`` sequences that are epsilon-typical, with a Wilson interval."""
    d = _dist(d)
    if n < 1:
        raise DomainError("n must be >= 1")
    _check_epsilon(epsilon)
    w = surprisal_bits(d)
    h = exact_center(d, w)

    def block(rng, m):
        return int(within(sample_counts(d, n, m, rng), w, h, epsilon).sum())

    hits = sum(map_blocks(trials, seed, block, threads))
    params = {"distribution": d.digest(), "n": n, "epsilon": float(epsilon), "units": "bits"}
    return MonteCarloEstimate.from_counts(hits, trials, seed, params)


def _variance_se(stats: np.ndarray) -> float:
    t = stats.size
    if t < 4:
        return math.inf
    centred = stats - stats.mean()
    m2 = float(np.mean(centred**2))
    m4 = float(np.mean(centred**4))
    return math.sqrt(max(m4 - m2 * m2 * (t - 3) / (t - 1), 0.0) / t)


def estimate_q_concentration(d, n: int, epsilon: float, qp, trials: int, seed: int, threads: int = 1) -> ConcentrationEstimate:
    """Fraction of samples with ``|mean q-surprisal - S_q| <= epsilon`` (nats).

    Also reports the sample variance of the statistic next to the closed form
    ``D(xi)/n`` and a standard error for their difference. At ``q == 1`` the
    verdict is the classical one with ``epsilon`` converted to bits, so the
    hits match :func:`estimate_typicality_probability` exactly.
    """
    d = _dist(d)
    qp = as_qparam(qp)
    _check_q(qp)
    _check_epsilon(epsilon)
    if n < 1:
        raise DomainError("n must be >= 1")
    s_q = tsallis_entropy(d, QParam(qp.q)).value
    xi = q_surprisal_weights(d, qp)
    xi0 = np.where(np.isfinite(xi), xi, 0.0)
    if qp.q == 1.0:
        w, eps = surprisal_bits(d), epsilon / LN2
    else:
        w, eps = xi, epsilon
    center = exact_center(d, w)

    def block(rng, m):
        counts = sample_counts(d, n, m, rng)
        stats = composition_weighted_sum(counts, xi0) / n
        return int(within(counts, w, center, eps).sum()), stats

    parts = map_blocks(trials, seed, block, threads)
    hits = sum(p[0] for p in parts)
    stats = np.concatenate([p[1] for p in parts])
    params = {
        "distribution": d.digest(),
        "n": n,
        "epsilon": float(epsilon),
        "q": qp.q,
        "units": "nats",
        "tsallis_nats": s_q,
    }
    return ConcentrationEstimate.from_counts(
        hits,
        trials,
        seed,
        params,
        statistic_variance=float(np.var(stats, ddof=1)) if trials > 1 else 0.0,
        closed_form_variance=q_statistic_variance(d, QParam(qp.q)) / n,
        variance_se=_variance_se(stats),
    )
