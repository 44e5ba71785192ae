import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hevx.params import get_preset
from hevx.ring import (
    Domain,
    RingElement,
    RingError,
    crt_reconstruct,
    discrete_gaussian,
    get_context,
    is_prime,
    ntt_forward,
    ntt_inverse,
    ntt_primes,
    ring_add,
    ring_mul,
    ring_neg,
    ring_sub,
    sample_error,
    sample_ternary,
    sample_uniform,
    scalar_mul,
    schoolbook_negacyclic_mul,
)

TOY_ONE = get_preset("toy-bfv").context()
TOY_TWO = get_preset("toy-ckks").context()
BFV_CTX = get_preset("bfv-add").context()

seeds = st.integers(0, 2**63 - 1)
toy_contexts = st.sampled_from([TOY_ONE, TOY_TWO])


def slow_negacyclic(a: list[int], b: list[int], q: int) -> list[int]:
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += a[i] * b[j]
            else:
                out[k - n] -= a[i] * b[j]
    return [c % q for c in out]


def residues(x: RingElement) -> list[int]:
    q = x.ctx.q
    return [c % q for c in crt_reconstruct(x)]


def monomial(ctx, k: int, coeff: int = 1) -> RingElement:
    c = np.zeros(ctx.n, dtype=np.int64)
    c[k] = coeff
    return RingElement.from_small(ctx, c)


def test_is_prime_matches_trial_division():
    def slow(n):
        return n >= 2 and all(n % d for d in range(2, math.isqrt(n) + 1))

    assert [n for n in range(3000) if is_prime(n)] == [n for n in range(3000) if slow(n)]
    assert is_prime(2**61 - 1)
    assert not is_prime((2**31 - 1) * (2**61 - 1))


@pytest.mark.parametrize("bits,n", [(53, 4096), (53, 16384), (34, 16384), (30, 16)])
def test_ntt_primes_are_ntt_friendly(bits, n):
    primes = ntt_primes(bits, n, 3)
    assert len(set(primes)) == 3
    for p in primes:
        assert is_prime(p)
        assert p % (2 * n) == 1
        assert p < 2**bits
    assert primes == sorted(primes, reverse=True)


@given(toy_contexts, seeds)
def test_ntt_round_trip(ctx, seed):
    x = sample_uniform(ctx, np.random.default_rng(seed))
    y = ntt_forward(x)
    assert y.domain is Domain.NTT
    assert ntt_inverse(y) == x


def test_ntt_of_zero_is_zero():
    for ctx in (TOY_ONE, TOY_TWO, BFV_CTX):
        assert ntt_forward(RingElement.zero(ctx)).is_zero()


def test_ntt_round_trip_at_full_size(rng):
    x = sample_uniform(BFV_CTX, rng)
    assert ntt_inverse(ntt_forward(x)) == x


@given(toy_contexts, seeds)
def test_additive_group(ctx, seed):
    rng = np.random.default_rng(seed)
    x, y, z = (sample_uniform(ctx, rng) for _ in range(3))
    assert ring_add(x, ring_neg(x)).is_zero()
    assert ring_add(x, y) == ring_add(y, x)
    assert ring_add(ring_add(x, y), z) == ring_add(x, ring_add(y, z))
    assert ring_sub(ring_add(x, y), y) == x


@given(toy_contexts, seeds)
def test_add_sub_match_big_integer_arithmetic(ctx, seed):
    rng = np.random.default_rng(seed)
    x, y = sample_uniform(ctx, rng), sample_uniform(ctx, rng)
    q = ctx.q
    xs, ys = residues(x), residues(y)
    assert residues(ring_add(x, y)) == [(a + b) % q for a, b in zip(xs, ys)]
    assert residues(ring_sub(x, y)) == [(a - b) % q for a, b in zip(xs, ys)]
    assert residues(ring_neg(x)) == [(-a) % q for a in xs]


@given(toy_contexts, seeds)
def test_ring_axioms_for_multiplication(ctx, seed):
    rng = np.random.default_rng(seed)
    x, y, z = (sample_uniform(ctx, rng) for _ in range(3))
    assert ring_mul(x, y) == ring_mul(y, x)
    assert ring_mul(ring_mul(x, y), z) == ring_mul(x, ring_mul(y, z))
    assert ring_mul(x, ring_add(y, z)) == ring_add(ring_mul(x, y), ring_mul(x, z))


def test_multiplicative_identity(rng):
    for ctx in (TOY_ONE, TOY_TWO, BFV_CTX):
        x = sample_uniform(ctx, rng)
        assert ring_mul(x, monomial(ctx, 0)) == x


@pytest.mark.parametrize("ctx", [TOY_ONE, TOY_TWO, BFV_CTX], ids=["toy1", "toy2", "n4096"])
def test_negacyclic_wraparound(ctx):
    n = ctx.n
    minus_one = monomial(ctx, 0, -1)
    assert ring_mul(monomial(ctx, n - 1), monomial(ctx, 1)) == minus_one
    assert schoolbook_negacyclic_mul(monomial(ctx, n // 2), monomial(ctx, n // 2)) == minus_one


def test_schoolbook_hand_example():
    ctx = get_context(16, TOY_ONE.primes)
    one_plus_x = RingElement.from_small(ctx, np.array([1, 1] + [0] * 14))
    one_minus_x = RingElement.from_small(ctx, np.array([1, -1] + [0] * 14))
    expected = RingElement.from_small(ctx, np.array([1, 0, -1] + [0] * 13))
    assert schoolbook_negacyclic_mul(one_plus_x, one_minus_x) == expected
    assert ring_mul(one_plus_x, one_minus_x) == expected


def test_exhaustive_binary_polynomials_n4_q17():
    ctx = get_context(4, (17,))
    polys = [RingElement.from_small(ctx, np.array(bits)) for bits in itertools.product((0, 1), repeat=4)]
    for a in polys:
        for b in polys:
            want = slow_negacyclic(residues(a), residues(b), 17)
            assert residues(schoolbook_negacyclic_mul(a, b)) == want
            assert ring_mul(a, b) == schoolbook_negacyclic_mul(a, b)


@given(toy_contexts, seeds)
def test_schoolbook_matches_slow_reference(ctx, seed):
    rng = np.random.default_rng(seed)
    x, y = sample_uniform(ctx, rng), sample_uniform(ctx, rng)
    assert residues(schoolbook_negacyclic_mul(x, y)) == slow_negacyclic(residues(x), residues(y), ctx.q)


@given(toy_contexts, seeds)
def test_ring_mul_matches_schoolbook(ctx, seed):
    rng = np.random.default_rng(seed)
    x, y = sample_uniform(ctx, rng), sample_uniform(ctx, rng)
    assert ring_mul(x, y) == schoolbook_negacyclic_mul(x, y)


def test_ring_mul_accepts_ntt_inputs(rng):
    x, y = sample_uniform(TOY_TWO, rng), sample_uniform(TOY_TWO, rng)
    prod = ring_mul(ntt_forward(x), ntt_forward(y))
    assert prod.domain is Domain.NTT
    assert ntt_inverse(prod) == ring_mul(x, y)


def test_mixed_domains_and_contexts_are_rejected(rng):
    x = sample_uniform(TOY_TWO, rng)
    with pytest.raises(RingError):
        ring_add(x, ntt_forward(x))
    with pytest.raises(RingError):
        ring_add(x, sample_uniform(TOY_ONE, rng))


def test_scalar_mul_matches_big_integers(rng):
    x = sample_uniform(TOY_TWO, rng)
    q = TOY_TWO.q
    c = 123456789123
    assert residues(scalar_mul(x, c)) == [(a * c) % q for a in residues(x)]


def test_crt_single_limb_is_centered_residue():
    ctx = TOY_ONE
    p = ctx.q
    vals = [0, 1, p - 1, p // 2, p // 2 + 1]
    x = RingElement(ctx, np.array([vals + [0] * (ctx.n - len(vals))], dtype=np.uint64))
    got = crt_reconstruct(x)[: len(vals)]
    assert got == [0, 1, -1, p // 2, p // 2 + 1 - p]


@pytest.mark.parametrize("ctx", [TOY_ONE, TOY_TWO, BFV_CTX, get_preset("ckks-mul").context()],
                         ids=["toy1", "toy2", "bfv", "ckks-mul"])
def test_crt_boundary_values(ctx):
    h = ctx.q // 2
    vals = [h, -h, h - 1, -(h - 1), 0, 1, -1]
    coeffs = vals + [0] * (ctx.n - len(vals))
    assert crt_reconstruct(RingElement.from_ints(ctx, coeffs))[: len(vals)] == vals


@given(st.data())
def test_crt_round_trip(data):
    ctx = data.draw(st.sampled_from([TOY_ONE, TOY_TWO, BFV_CTX]))
    h = ctx.q // 2
    vals = data.draw(st.lists(st.integers(-h, h), min_size=1, max_size=16))
    coeffs = vals + [0] * (ctx.n - len(vals))
    assert crt_reconstruct(RingElement.from_ints(ctx, coeffs))[: len(vals)] == vals


def test_ternary_and_determinism():
    a = sample_ternary(BFV_CTX, np.random.default_rng(5))
    b = sample_ternary(BFV_CTX, np.random.default_rng(5))
    assert a == b
    assert set(crt_reconstruct(a)) <= {-1, 0, 1}
    assert sample_uniform(TOY_TWO, np.random.default_rng(9)) == sample_uniform(TOY_TWO, np.random.default_rng(9))
    assert sample_error(TOY_TWO, np.random.default_rng(9), 3.19) == sample_error(TOY_TWO, np.random.default_rng(9), 3.19)


def test_uniform_coefficients_below_prime(rng):
    x = sample_uniform(get_preset("ckks-mul").context(), rng)
    assert np.all(x.data < np.array(x.ctx.primes, dtype=np.uint64)[:, None])


def test_discrete_gaussian_statistics():
    sigma = 3.19
    draws = discrete_gaussian(np.random.default_rng(1), sigma, 10**6)
    assert abs(draws.std() - sigma) < 0.05 * sigma
    assert abs(draws.mean()) < 0.02
    assert np.abs(draws).max() <= math.floor(6 * sigma)
    # symmetric: P(k) = P(-k)
    counts = np.bincount(draws + 20, minlength=41)
    assert abs(int(counts[20 + 3]) - int(counts[20 - 3])) < 5 * math.sqrt(counts[23])


def test_sample_error_is_small_in_every_limb(rng):
    e = sample_error(TOY_TWO, rng, 3.19)
    vals = crt_reconstruct(e)
    assert max(abs(v) for v in vals) <= 19
    for row, p in zip(e.data, TOY_TWO.primes):
        assert [int(c) if c <= p // 2 else int(c) - p for c in row] == vals
