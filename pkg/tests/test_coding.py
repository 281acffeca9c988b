import io
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from aeptools.coding import (
    HEADER,
    CodeParams,
    Codeword,
    as_rate,
    build_codebook,
    compress,
    decode,
    decompress,
    encode,
    max_feasible_epsilon,
    pack_codewords,
    policy_epsilon,
    rate_sweep,
    read_block_file,
    reliability_estimate,
    unpack_codewords,
    write_block_file,
)
from aeptools.entropy import Distribution, shannon_entropy
from aeptools.errors import CapacityError, DomainError, MalformedCodewordError, RateInfeasibleError
from aeptools.sampling import block_generator, sample_letters
from aeptools.typicality import enumerate_typical_set, estimate_typicality_probability, is_epsilon_typical


def all_sequences(w, n):
    return (np.array(s) for s in itertools.product(range(w), repeat=n))


class TestParams:
    def test_rate_reading(self):
        assert as_rate(0.55) == Fraction(11, 20)
        assert as_rate(Fraction(1, 3)) == Fraction(1, 3)
        assert CodeParams(1000, 0.55, 0.1).width == 550
        assert CodeParams(10, 1.1, 0.0).width == 11
        assert CodeParams(3, 0.5, 0.0).width == 2

    @pytest.mark.parametrize("kw", [dict(n=0, rate=1, epsilon=0), dict(n=4, rate=0, epsilon=0), dict(n=4, rate=1, epsilon=-1)])
    def test_domain(self, kw):
        with pytest.raises(DomainError):
            CodeParams(**kw)

    def test_codeword_invariants(self):
        assert Codeword(True, 5, 4).bits == "10101"
        assert Codeword(False, 0, 3).bits == "0000"
        assert Codeword.from_bits("10101") == Codeword(True, 5, 4)
        with pytest.raises(MalformedCodewordError):
            Codeword(False, 1, 3)
        with pytest.raises(MalformedCodewordError):
            Codeword(True, 8, 3)


class TestFairCoin:
    @pytest.fixture
    def book(self, fair):
        return build_codebook(fair, CodeParams(10, 1.1, 0.01))

    def test_everything_typical(self, book):
        assert book.size == 1024 and book.width == 11

    def test_zero_sequence_is_index_zero(self, book):
        c = encode(book, np.zeros(10, int))
        assert c.ok and c.payload == 0 and len(c.bits) == 12
        assert np.array_equal(decode(book, Codeword(True, 0, 11)), np.zeros(10))

    def test_reliability(self, fair):
        stats = reliability_estimate(fair, CodeParams(10, 1.1, 0.01), 500, 3)
        assert stats.empirical_reliability == 1.0 and stats.failures == 0


@pytest.fixture(scope="module")
def p25_book():
    return build_codebook(Distribution([0.25, 0.75]), CodeParams(12, 1.0, 0.1))


@pytest.fixture(scope="module")
def p11_book():
    return build_codebook(Distribution([0.11, 0.89]), CodeParams(1000, 0.6, 0.05))


class TestP25Exhaustive:
    @pytest.fixture
    def book(self, p25_book):
        return p25_book

    def test_atypical_flagged(self, book):
        c = encode(book, np.zeros(12, int))
        assert not c.ok and c.payload == 0
        assert decode(book, c) is None

    def test_round_trip_and_injectivity(self, book):
        d = book.distribution
        seen = set()
        for s in all_sequences(2, 12):
            c = encode(book, s)
            assert c.ok == is_epsilon_typical(d, s, 0.1).is_typical
            if c.ok:
                assert 0 <= c.payload < book.size
                assert c.payload not in seen
                seen.add(c.payload)
                assert np.array_equal(decode(book, c), s)
        assert len(seen) == book.size == enumerate_typical_set(d, 12, 0.1).count

    def test_indices_in_lexicographic_order_within_class(self, book):
        ranks = [encode(book, s).payload for s in all_sequences(2, 12) if encode(book, s).ok and s.sum() == book.k_min]
        assert ranks == sorted(ranks)

    def test_bad_index(self, book):
        with pytest.raises(MalformedCodewordError):
            decode(book, Codeword(True, book.size, book.width))
        with pytest.raises(MalformedCodewordError):
            decode(book, Codeword(True, 0, book.width + 1))

    def test_wrong_length(self, book):
        with pytest.raises(DomainError):
            encode(book, np.zeros(11, int))


class TestNonBinary:
    def test_round_trip(self):
        d = Distribution([0.5, 0.3, 0.2])
        book = build_codebook(d, CodeParams(6, 1.6, 0.15))
        assert book.method == "exhaustive"
        seen = set()
        for s in all_sequences(3, 6):
            c = encode(book, s)
            if c.ok:
                seen.add(c.payload)
                assert np.array_equal(decode(book, c), s)
        assert len(seen) == book.size == enumerate_typical_set(d, 6, 0.15).count

    def test_capacity(self):
        with pytest.raises(CapacityError):
            build_codebook(Distribution.uniform(4), CodeParams(12, 2.0, 0.1))


class TestP11LargeN:
    @pytest.fixture
    def book(self, p11_book):
        return p11_book

    def test_feasible_size(self, book):
        h = shannon_entropy(book.distribution).value
        assert book.log2_size <= 1000 * (h + 0.05) < 600

    def test_sampled_round_trip(self, book):
        d = book.distribution
        seqs = sample_letters(d, 1000, 10_000, block_generator(2024, 0))
        typical = 0
        for s in seqs:
            idx = book.index(s)
            if idx is None:
                continue
            typical += 1
            assert np.array_equal(book.sequence(idx), s)
        assert typical > 9000

    def test_extreme_indices(self, book):
        first, last = book.sequence(0), book.sequence(book.size - 1)
        assert first.sum() == book.k_min and book.index(first) == 0
        assert last.sum() == book.k_max and book.index(last) == book.size - 1

    def test_infeasible_names_minimum_rate(self):
        d = Distribution([0.11, 0.89])
        with pytest.raises(RateInfeasibleError) as info:
            build_codebook(d, CodeParams(1000, 0.4, 0.05))
        assert 0.4 < info.value.min_rate <= 0.6
        assert "R >=" in str(info.value)
        # the reported minimum is itself feasible
        build_codebook(d, CodeParams(1000, Fraction(math.ceil(info.value.min_rate * 1000), 1000), 0.05))

    def test_feasibility_monotone(self):
        d = Distribution([0.11, 0.89])
        feasible = []
        for r in np.arange(0.40, 0.70, 0.02):
            try:
                build_codebook(d, CodeParams(1000, round(float(r), 2), 0.05))
                feasible.append(True)
            except RateInfeasibleError:
                feasible.append(False)
        assert feasible == sorted(feasible) and feasible[-1] and not feasible[0]


class TestFailureEqualsAtypicality:
    def test_same_seed(self, p25):
        params = CodeParams(64, 1.0, 0.1)
        codec = reliability_estimate(p25, params, 4000, 17)
        typ = estimate_typicality_probability(p25, 64, 0.1, 4000, 17)
        # same sampler stream, so identical counts rather than mere statistical agreement
        assert codec.successes == typ.successes


class TestEpsilonPolicies:
    def test_midpoint(self, p11):
        h = shannon_entropy(p11).value
        assert policy_epsilon("midpoint", p11, 1000, 0.7) == pytest.approx((0.7 - h) / 2)
        assert policy_epsilon("midpoint", p11, 1000, 0.4) == 0.01
        assert policy_epsilon("fixed", p11, 1000, 0.7, fixed_epsilon=0.02) == 0.02
        with pytest.raises(DomainError):
            policy_epsilon("greedy", p11, 1000, 0.7)

    def test_max_feasible_is_maximal(self, p11):
        eps = max_feasible_epsilon(p11, 1000, 0.55)
        book = build_codebook(p11, CodeParams(1000, 0.55, eps))
        assert book.size <= 2**550
        # the next class out no longer fits
        with pytest.raises(RateInfeasibleError):
            build_codebook(p11, CodeParams(1000, 0.55, eps + 0.0031))

    def test_max_feasible_none_below_entropy(self, p11):
        assert max_feasible_epsilon(p11, 1000, 0.4) is None


class TestSweep:
    def test_uniform_no_compression(self):
        rows = rate_sweep(Distribution.uniform(2), 20, [0.5, 0.9, 1.0, 1.2], trials=200, seed=1)
        assert [r.feasible for r in rows] == [False, False, True, True]
        assert rows[2].reliability == 1.0

    def test_deterministic(self, p11):
        a = rate_sweep(p11, 200, [0.3, 0.7], trials=500, seed=4, threads=1)
        b = rate_sweep(p11, 200, [0.3, 0.7], trials=500, seed=4, threads=3)
        assert a == b

    def test_sorted_rates(self, p11):
        with pytest.raises(DomainError):
            rate_sweep(p11, 100, [0.7, 0.3])

    def test_mass_bound_caps_reliability(self, p25):
        for row in rate_sweep(p25, 40, [0.5, 0.7, 0.8, 0.9], trials=2000, seed=8, epsilon_policy="max-feasible"):
            if row.feasible:
                assert row.ci_low <= row.mass_bound + 1e-12


class TestFiles:
    def test_pack_round_trip(self):
        cws = [Codeword(True, 5, 4), Codeword(False, 0, 4), Codeword(True, 15, 4)]
        data = pack_codewords(cws)
        assert len(data) == math.ceil(15 / 8)
        assert unpack_codewords(data, 3, 4) == cws
        with pytest.raises(MalformedCodewordError):
            unpack_codewords(data, 4, 4)

    def test_block_file(self, p25):
        book = build_codebook(p25, CodeParams(12, 1.0, 0.3))
        rng = np.random.default_rng(0)
        letters = rng.choice(2, size=100, p=[0.25, 0.75])
        cws = compress(book, letters)
        assert len(cws) == 9
        buf = io.BytesIO()
        write_block_file(buf, book, cws, letters.size)
        raw = buf.getvalue()
        assert raw[:8] == b"AEPTSC01"
        assert len(raw) == HEADER.size + math.ceil(9 * 13 / 8)
        header, back = read_block_file(io.BytesIO(raw))
        assert back == cws
        assert header.n == 12 and header.rate == 1 and header.epsilon == 0.3
        assert header.dist_hash == p25.digest() and header.letters == 100
        blocks = decompress(book, back)
        joined = np.concatenate([b if b is not None else np.full(12, -1) for b in blocks])[:100]
        ok = np.repeat([c.ok for c in cws], 12)[:100]
        assert np.array_equal(joined[ok], letters[ok])

    def test_bad_magic(self):
        with pytest.raises(MalformedCodewordError):
            read_block_file(io.BytesIO(b"NOTMAGIC" + bytes(HEADER.size)))
        with pytest.raises(MalformedCodewordError):
            read_block_file(io.BytesIO(b"AEPT"))
