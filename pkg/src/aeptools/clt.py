"""Characteristic functions, moments and the Gaussian limit of i.i.d. sums."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from aeptools.entropy import Distribution
from aeptools.errors import CapacityError, DegenerateDistributionError, DomainError, StepSizeError
from aeptools.sampling import map_blocks, sample_counts

MAX_CONVOLUTION_SUPPORT = 1_000_000


@dataclass(frozen=True)
class MomentPair:
    expectation: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise DomainError("variance must be non-negative")


def _values(d: Distribution) -> np.ndarray:
    if d.values is None:
        raise DomainError("distribution has no letter values")
    return d.values


def characteristic_function(d: Distribution, a):
    """``phi(a) = sum_x P(x) e^{iax}``; scalar or array ``a``."""
    v = _values(d)
    p = d.probs
    a_arr = np.asarray(a, dtype=float)
    phase = np.multiply.outer(a_arr, v)
    out = (np.cos(phase) + 1j * np.sin(phase)) @ p
    out = np.where(a_arr == 0, 1.0 + 0j, out)
    return complex(out) if out.ndim == 0 else out


def direct_moments(d: Distribution) -> MomentPair:
    v = _values(d)
    p = d.probs
    mean = math.fsum(p * v)
    var = math.fsum(p * (v - mean) ** 2)
    return MomentPair(mean, var)


def _log_cf_shifted(d: Distribution, a: float, centre: float) -> complex:
    # ln phi_{X-c}(a) = ln(1 + z) with z = sum p (e^{ia(x-c)} - 1); cos - 1 written as -2 sin^2
    theta = a * (_values(d) - centre)
    re = math.fsum(d.probs * (-2.0 * np.sin(theta / 2) ** 2))
    im = math.fsum(d.probs * np.sin(theta))
    modulus = (1 + re) ** 2 + im * im
    if modulus < 1e-6:
        raise StepSizeError(f"|phi| is {math.sqrt(modulus):.3g} at a={a}; reduce the step h")
    return complex(0.5 * math.log1p(2 * re + re * re + im * im), math.atan2(im, 1 + re))


def moments_via_cf(d: Distribution, h: float = 1e-4) -> MomentPair:
    """Mean and variance from derivatives of ``ln phi`` at zero.

    ``E = -i (ln phi)'(0)`` and ``D = -(ln phi)''(0)``, each from central
    differences at ``h`` and ``h/2`` combined by one Richardson step. The
    log is taken after translating the values to the most probable letter,
    which keeps ``phi`` near 1 on the stencil; the translation adds ``c`` back
    to the mean and leaves the variance alone.
    """
    if not h > 0:
        raise DomainError("step h must be positive")
    v = _values(d)
    centre = float(v[int(np.argmax(d.probs))])
    spread = float(np.max(np.abs(v - centre)))
    if spread * h > 0.5:
        raise StepSizeError(
            f"h * max|x - c| = {spread * h:.3g} risks the log branch; use h <= {0.5 / spread:.3g}"
        )

    def g(a):
        return _log_cf_shifted(d, a, centre)

    def first(step):
        return (g(step) - g(-step)) / (2 * step)

    def second(step):
        return (g(step) + g(-step)) / (step * step)  # g(0) == 0 exactly

    d1 = (4 * first(h / 2) - first(h)) / 3
    d2 = (4 * second(h / 2) - second(h)) / 3
    mean = centre + (-1j * d1).real
    var = max(-d2.real, 0.0) + 0.0  # no negative zero
    return MomentPair(mean, var)


def convolve(ds: Sequence[Distribution]) -> Distribution:
    """Distribution of the sum of independent value-carrying variables."""
    if not ds:
        raise DomainError("need at least one distribution")
    masses: Dict[float, float] = {0.0: 1.0}
    for d in ds:
        v = _values(d)
        if len(masses) * len(v) > MAX_CONVOLUTION_SUPPORT:
            raise CapacityError("convolution support exceeds the size guard")
        nxt: Dict[float, List[float]] = {}
        for x, px in masses.items():
            for y, py in zip(v.tolist(), d.probs.tolist()):
                if py > 0:
                    nxt.setdefault(x + y, []).append(px * py)
        masses = {k: math.fsum(ps) for k, ps in nxt.items()}
    keys = sorted(masses)
    probs = np.array([masses[k] for k in keys])
    return Distribution(probs / math.fsum(probs), keys)


def cf_product_check(ds: Sequence[Distribution], a: float) -> Tuple[complex, complex]:
    """``(cf of the convolved sum, product of the individual cfs)`` at ``a``."""
    lhs = characteristic_function(convolve(ds), a)
    rhs = 1.0 + 0j
    for d in ds:
        rhs *= characteristic_function(d, a)
    return lhs, rhs


def gaussian_sum_density(l, n: int, m: MomentPair):
    """Normal density of an ``n``-term i.i.d. sum at ``l``: mean ``nE``, variance ``nD``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if m.variance <= 0:
        raise DegenerateDistributionError("the Gaussian limit needs a positive variance")
    var = n * m.variance
    l = np.asarray(l, dtype=float)
    out = np.exp(-((l - n * m.expectation) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
    return float(out) if out.ndim == 0 else out


def lattice_gaussian_mass(l, n: int, m: MomentPair, step: float = 1.0):
    """Normal mass of the cell ``[l - step/2, l + step/2]``, for comparing with lattice sums."""
    if m.variance <= 0:
        raise DegenerateDistributionError("the Gaussian limit needs a positive variance")
    sd = math.sqrt(n * m.variance)
    l = np.asarray(l, dtype=float)
    mu = n * m.expectation
    out = stats.norm.cdf((l + step / 2 - mu) / sd) - stats.norm.cdf((l - step / 2 - mu) / sd)
    return float(out) if out.ndim == 0 else out


def sample_sums(d: Distribution, n: int, trials: int, seed: int, threads: int = 1) -> np.ndarray:
    v = _values(d)

    def block(rng, m):
        counts = sample_counts(d, n, m, rng)
        total = np.zeros(m)
        for i, x in enumerate(v):
            total = total + counts[:, i] * x
        return total

    return np.concatenate(map_blocks(trials, seed, block, threads))


def clt_empirical_distance(d: Distribution, n: int, trials: int, seed: int, threads: int = 1) -> float:
    """Kolmogorov-Smirnov distance between standardised sample sums and N(0, 1)."""
    m = direct_moments(d)
    if m.variance <= 0:
        raise DegenerateDistributionError("KS distance to a normal needs a positive variance")
    sums = sample_sums(d, n, trials, seed, threads)
    z = (sums - n * m.expectation) / math.sqrt(n * m.variance)
    return float(stats.kstest(z, "norm").statistic)


def cf_table(d: Distribution, grid) -> List[Tuple[float, float, float]]:
    phi = np.atleast_1d(characteristic_function(d, np.asarray(grid, dtype=float)))
    return [(float(a), float(z.real), float(z.imag)) for a, z in zip(np.atleast_1d(grid), phi)]


def ks_table(d: Distribution, ns, trials: int, seed: int, threads: int = 1) -> List[Tuple[int, float]]:
    return [(int(n), clt_empirical_distance(d, int(n), trials, seed, threads)) for n in ns]
