"""Arithmetic in R_q = Z_q[x]/(x^n + 1).

q is never materialised on the hot path: ring elements are stored as one
residue vector per word-sized prime (RNS limbs), and products go through a
negacyclic NTT per limb.  Python integers only appear in CRT reconstruction
and in the schoolbook oracle.
"""

from __future__ import annotations

import enum
import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

# The float-quotient mulmod below is exact only while operands fit a double.
MAX_PRIME_BITS = 53

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def ntt_primes(bits: int, n: int, count: int, exclude: Iterable[int] = ()) -> list[int]:
    """The `count` largest primes below 2**bits with p = 1 (mod 2n)."""
    m = 2 * n
    skip = set(exclude)
    c = ((1 << bits) - 1) // m * m + 1
    out: list[int] = []
    while len(out) < count:
        if c < (1 << (bits - 1)):
            raise ValueError(f"not enough {bits}-bit NTT primes for n={n}")
        if c not in skip and is_prime(c):
            out.append(c)
        c -= m
    return out


def _bit_reverse(n: int) -> np.ndarray:
    k = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(k):
        rev |= ((idx >> b) & 1) << (k - 1 - b)
    return rev


def _powers(base: int, n: int, p: int) -> np.ndarray:
    out = [1] * n
    for i in range(1, n):
        out[i] = out[i - 1] * base % p
    return np.array(out, dtype=np.uint64)


class PrimeContext:
    """Twiddle tables for the negacyclic NTT modulo one prime."""

    def __init__(self, prime: int, n: int):
        if prime.bit_length() > MAX_PRIME_BITS:
            raise ValueError(f"prime {prime} exceeds {MAX_PRIME_BITS} bits")
        if (prime - 1) % (2 * n):
            raise ValueError(f"prime {prime} is not 1 mod {2 * n}")
        self.prime = prime
        self.n = n
        self.psi = self._find_psi(prime, n)
        psi_inv = pow(self.psi, -1, prime)
        rev = _bit_reverse(n)
        self.psi_rev = _powers(self.psi, n, prime)[rev]
        self.psi_inv_rev = _powers(psi_inv, n, prime)[rev]
        self.n_inv = pow(n, -1, prime)

    @staticmethod
    def _find_psi(p: int, n: int) -> int:
        for x in range(2, 10_000):
            psi = pow(x, (p - 1) // (2 * n), p)
            if pow(psi, n, p) == p - 1:
                return psi
        raise ValueError(f"no primitive {2 * n}-th root of unity mod {p}")


class RingContext:
    """Shared tables for a fixed (n, limb primes) pair. Build via `get_context`."""

    def __init__(self, n: int, primes: tuple[int, ...]):
        if n < 2 or n & (n - 1):
            raise ValueError(f"ring degree {n} is not a power of two")
        if len(set(primes)) != len(primes) or not primes:
            raise ValueError("limb primes must be distinct and non-empty")
        self.n = n
        self.primes = primes
        self.prime_contexts = [PrimeContext(p, n) for p in primes]
        col = (len(primes), 1)
        self.P = np.array(primes, dtype=np.uint64).reshape(col)
        self.P_i64 = self.P.view(np.int64)
        self.P_inv = (1.0 / np.array(primes, dtype=np.float64)).reshape(col)
        self.psi_rev = np.stack([pc.psi_rev for pc in self.prime_contexts])
        self.psi_inv_rev = np.stack([pc.psi_inv_rev for pc in self.prime_contexts])
        self.n_inv = np.array([pc.n_inv for pc in self.prime_contexts], dtype=np.uint64).reshape(col)
        self.q = math.prod(primes)
        # CRT basis: x = sum_i r_i * basis_i  (mod q)
        self.crt_basis = [
            (self.q // p) * pow(self.q // p, -1, p) % self.q for p in primes
        ]

    @property
    def limb_count(self) -> int:
        return len(self.primes)

    def prefix(self, k: int) -> "RingContext":
        return get_context(self.n, self.primes[:k])

    def __repr__(self) -> str:
        return f"RingContext(n={self.n}, primes={self.primes})"


@lru_cache(maxsize=None)
def get_context(n: int, primes: tuple[int, ...]) -> RingContext:
    return RingContext(n, tuple(primes))


def _mulmod(a, b, P, P_i64, P_inv):
    """Exact (a*b) mod p for a, b < p < 2**53 using a float quotient estimate."""
    quot = (a.astype(np.float64) * b.astype(np.float64) * P_inv).astype(np.uint64)
    r = (a * b - quot * P).view(np.int64)
    return np.mod(r, P_i64).view(np.uint64)


def _addmod(a, b, P):
    s = a + b
    return np.where(s >= P, s - P, s)


def _submod(a, b, P):
    return np.where(a >= b, a - b, a + P - b)


class Domain(enum.Enum):
    COEFFICIENT = "coefficient"
    NTT = "ntt"


class RingError(ValueError):
    pass


class RingElement:
    """Element of R_q as a (limbs, n) array of residues."""

    __slots__ = ("ctx", "data", "domain")

    def __init__(self, ctx: RingContext, data: np.ndarray, domain: Domain = Domain.COEFFICIENT):
        self.ctx = ctx
        self.data = data
        self.domain = domain

    @property
    def degree_n(self) -> int:
        return self.ctx.n

    @property
    def limbs(self) -> list[np.ndarray]:
        return list(self.data)

    @classmethod
    def zero(cls, ctx: RingContext, domain: Domain = Domain.COEFFICIENT) -> "RingElement":
        return cls(ctx, np.zeros((ctx.limb_count, ctx.n), dtype=np.uint64), domain)

    @classmethod
    def from_small(cls, ctx: RingContext, coeffs) -> "RingElement":
        """Coefficients given as an int64 vector (|c| < 2**62)."""
        arr = np.asarray(coeffs, dtype=np.int64)
        if arr.shape != (ctx.n,):
            raise RingError(f"expected {ctx.n} coefficients, got shape {arr.shape}")
        return cls(ctx, np.mod(arr[None, :], ctx.P_i64).view(np.uint64))

    @classmethod
    def from_ints(cls, ctx: RingContext, coeffs: Sequence[int]) -> "RingElement":
        """Arbitrary Python integers, reduced into every limb."""
        if len(coeffs) != ctx.n:
            raise RingError(f"expected {ctx.n} coefficients, got {len(coeffs)}")
        data = np.array(
            [[int(c) % p for c in coeffs] for p in ctx.primes], dtype=np.uint64
        )
        return cls(ctx, data)

    def copy(self) -> "RingElement":
        return RingElement(self.ctx, self.data.copy(), self.domain)

    def prefix(self, k: int) -> "RingElement":
        """Keep the first k limbs (exact for any value whose lift is below their product)."""
        return RingElement(self.ctx.prefix(k), self.data[:k].copy(), self.domain)

    def is_zero(self) -> bool:
        return not self.data.any()

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return (
            self.ctx is other.ctx
            and self.domain == other.domain
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    def __add__(self, other):
        return ring_add(self, other)

    def __sub__(self, other):
        return ring_sub(self, other)

    def __neg__(self):
        return ring_neg(self)

    def __mul__(self, other):
        return ring_mul(self, other)

    def __repr__(self) -> str:
        return f"RingElement(n={self.ctx.n}, limbs={self.ctx.limb_count}, domain={self.domain.value})"


def _check_same(x: RingElement, y: RingElement) -> None:
    if x.ctx is not y.ctx:
        raise RingError(f"mismatched rings: {x.ctx} vs {y.ctx}")
    if x.domain != y.domain:
        raise RingError(f"mismatched domains: {x.domain.value} vs {y.domain.value}")


def ring_add(x: RingElement, y: RingElement) -> RingElement:
    _check_same(x, y)
    return RingElement(x.ctx, _addmod(x.data, y.data, x.ctx.P), x.domain)


def ring_sub(x: RingElement, y: RingElement) -> RingElement:
    _check_same(x, y)
    return RingElement(x.ctx, _submod(x.data, y.data, x.ctx.P), x.domain)


def ring_neg(x: RingElement) -> RingElement:
    d = x.data
    return RingElement(x.ctx, np.where(d == 0, d, x.ctx.P - d), x.domain)


def scalar_mul(x: RingElement, c: int) -> RingElement:
    """Multiply by an integer constant (any size, any sign)."""
    return limb_scalar_mul(x, [c % p for p in x.ctx.primes])


def limb_scalar_mul(x: RingElement, residues: Sequence[int]) -> RingElement:
    """Multiply limb i by residues[i] (already reduced mod p_i)."""
    ctx = x.ctx
    col = np.array(residues, dtype=np.uint64).reshape(ctx.P.shape)
    return RingElement(ctx, _mulmod(x.data, col, ctx.P, ctx.P_i64, ctx.P_inv), x.domain)


def pointwise_mul(x: RingElement, y: RingElement) -> RingElement:
    _check_same(x, y)
    ctx = x.ctx
    return RingElement(ctx, _mulmod(x.data, y.data, ctx.P, ctx.P_i64, ctx.P_inv), x.domain)


def ntt_forward(x: RingElement) -> RingElement:
    """Cooley-Tukey negacyclic NTT; output in bit-reversed order."""
    if x.domain is not Domain.COEFFICIENT:
        raise RingError("ntt_forward expects a coefficient-domain element")
    ctx = x.ctx
    L, n = x.data.shape
    a = x.data.copy()
    P = ctx.P[:, :, None]
    Pi = ctx.P_i64[:, :, None]
    Pf = ctx.P_inv[:, :, None]
    t, m = n, 1
    while m < n:
        t //= 2
        v = a.reshape(L, m, 2, t)
        u = v[:, :, 0, :]
        w = _mulmod(v[:, :, 1, :], ctx.psi_rev[:, m : 2 * m, None], P, Pi, Pf)
        hi = _submod(u, w, P)
        v[:, :, 0, :] = _addmod(u, w, P)
        v[:, :, 1, :] = hi
        m *= 2
    return RingElement(ctx, a, Domain.NTT)


def ntt_inverse(x: RingElement) -> RingElement:
    """Gentleman-Sande inverse of `ntt_forward`."""
    if x.domain is not Domain.NTT:
        raise RingError("ntt_inverse expects an NTT-domain element")
    ctx = x.ctx
    L, n = x.data.shape
    a = x.data.copy()
    P = ctx.P[:, :, None]
    Pi = ctx.P_i64[:, :, None]
    Pf = ctx.P_inv[:, :, None]
    t, m = 1, n
    while m > 1:
        h = m // 2
        v = a.reshape(L, h, 2, t)
        u = v[:, :, 0, :]
        w = v[:, :, 1, :]
        diff = _submod(u, w, P)
        v[:, :, 0, :] = _addmod(u, w, P)
        v[:, :, 1, :] = _mulmod(diff, ctx.psi_inv_rev[:, h:m, None], P, Pi, Pf)
        t *= 2
        m = h
    a = _mulmod(a, ctx.n_inv, ctx.P, ctx.P_i64, ctx.P_inv)
    return RingElement(ctx, a, Domain.COEFFICIENT)


def ring_mul(x: RingElement, y: RingElement) -> RingElement:
    """Negacyclic product.  Coefficient inputs give a coefficient result;
    NTT inputs are multiplied pointwise and stay in the NTT domain."""
    _check_same(x, y)
    if x.domain is Domain.NTT:
        return pointwise_mul(x, y)
    return ntt_inverse(pointwise_mul(ntt_forward(x), ntt_forward(y)))


def crt_reconstruct(x: RingElement) -> list[int]:
    """Centered lift of every coefficient into (-q/2, q/2]."""
    if x.domain is not Domain.COEFFICIENT:
        raise RingError("crt_reconstruct expects a coefficient-domain element")
    ctx = x.ctx
    q = ctx.q
    acc = np.zeros(ctx.n, dtype=object)
    for limb, basis in zip(x.data, ctx.crt_basis):
        acc = acc + limb.astype(object) * basis
    acc = acc % q
    half = q // 2
    return [int(v) - q if v > half else int(v) for v in acc]


def schoolbook_negacyclic_mul(x: RingElement, y: RingElement) -> RingElement:
    """Reference product by direct O(n^2) convolution of the big-integer lifts.

    Each coefficient in [0, q) is cut into w-bit chunks so every partial
    convolution stays inside int64; the chunks are recombined as Python ints.
    """
    if x.domain is not Domain.COEFFICIENT or y.domain is not Domain.COEFFICIENT:
        raise RingError("schoolbook multiplication works on coefficient-domain elements")
    if x.ctx is not y.ctx:
        raise RingError("mismatched rings")
    ctx = x.ctx
    n, q = ctx.n, ctx.q
    xs = [c % q for c in crt_reconstruct(x)]
    ys = [c % q for c in crt_reconstruct(y)]
    # chunks * n * 2**(2w) must stay below 2**63
    w = 31
    while True:
        chunks = math.ceil(q.bit_length() / w)
        if 2 * w + n.bit_length() + chunks.bit_length() <= 62:
            break
        w -= 1
    mask = (1 << w) - 1

    def split(vals):
        return [np.array([(v >> (w * k)) & mask for v in vals], dtype=np.int64) for k in range(chunks)]

    xc, yc = split(xs), split(ys)
    full = np.zeros(2 * n - 1, dtype=object)
    for k in range(2 * chunks - 1):
        part = np.zeros(2 * n - 1, dtype=np.int64)
        for i in range(max(0, k - chunks + 1), min(k, chunks - 1) + 1):
            part += np.convolve(xc[i], yc[k - i])
        full = full + part.astype(object) * (1 << (w * k))
    folded = [full[i] - (full[i + n] if i + n < 2 * n - 1 else 0) for i in range(n)]
    return RingElement.from_ints(ctx, [int(v) % q for v in folded])


# --- sampling -------------------------------------------------------------

def sample_uniform(ctx: RingContext, rng: np.random.Generator) -> RingElement:
    data = np.stack([rng.integers(0, p, ctx.n, dtype=np.uint64) for p in ctx.primes])
    return RingElement(ctx, data)


def ternary_coefficients(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(-1, 2, n, dtype=np.int64)


def sample_ternary(ctx: RingContext, rng: np.random.Generator) -> RingElement:
    return RingElement.from_small(ctx, ternary_coefficients(ctx.n, rng))


@lru_cache(maxsize=16)
def _gaussian_table(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    bound = int(math.floor(6 * sigma))
    support = np.arange(-bound, bound + 1, dtype=np.int64)
    weights = np.exp(-(support.astype(np.float64) ** 2) / (2 * sigma * sigma))
    cdf = np.cumsum(weights)
    return support, cdf / cdf[-1]


def discrete_gaussian(rng: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    """Centered discrete Gaussian truncated at 6 sigma, by CDT inversion."""
    support, cdf = _gaussian_table(float(sigma))
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return support[np.minimum(idx, len(support) - 1)]


def sample_error(ctx: RingContext, rng: np.random.Generator, sigma: float) -> RingElement:
    return RingElement.from_small(ctx, discrete_gaussian(rng, sigma, ctx.n))
