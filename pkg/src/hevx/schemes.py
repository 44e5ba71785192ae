"""BFV, BGV and CKKS over the RNS ring layer.

Ciphertexts are lists of ring elements (c0, c1[, c2]) that decrypt through
c0 + c1*s (+ c2*s^2).  Keys are RLWE samples of zero:

    BGV   pk_b = -a*s + t*e
    BFV   pk_b = -a*s + e       (message enters as floor(q/t) * m)
    CKKS  pk_b = -a*s + e       (message is the scaled embedding)
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .encoding import (
    IntegerPlaintext,
    Plaintext,
    PolyPlaintext,
    RealPlaintext,
    ckks_decode,
    ckks_encode,
    int_decode,
    int_encode,
)
from .params import ParamError, ParamSet, Scheme, validate
from .ring import (
    RingElement,
    crt_reconstruct,
    discrete_gaussian,
    limb_scalar_mul,
    ntt_forward,
    ntt_inverse,
    pointwise_mul,
    ring_add,
    sample_uniform,
    scalar_mul,
    ternary_coefficients,
)


class SchemeError(ValueError):
    pass


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _small(params: ParamSet, ctx, coeffs: np.ndarray) -> RingElement:
    return RingElement.from_small(ctx, coeffs)


def _error(params: ParamSet, ctx, rng) -> RingElement:
    e = discrete_gaussian(rng, params.error_stddev_sigma, params.n)
    if params.scheme is Scheme.BGV:
        e = e * params.plaintext_modulus_t
    return RingElement.from_small(ctx, e)


@dataclass(eq=False)
class SecretKey:
    s: RingElement
    params: ParamSet
    _ntt_cache: dict = field(default_factory=dict, repr=False)

    def s_ntt(self, limb_count: int) -> RingElement:
        if limb_count not in self._ntt_cache:
            self._ntt_cache[limb_count] = ntt_forward(self.s.prefix(limb_count))
        return self._ntt_cache[limb_count]

    def __repr__(self) -> str:
        return f"SecretKey({self.params.name or self.params.scheme.value}, <hidden>)"


@dataclass
class PublicKey:
    pk_b: RingElement
    pk_a: RingElement
    params: ParamSet

    @functools.cached_property
    def ntt_pair(self) -> tuple[RingElement, RingElement]:
        return ntt_forward(self.pk_b), ntt_forward(self.pk_a)


@dataclass
class EvalKey:
    """Relinearization key: one (b_j, a_j) pair per limb, with
    b_j = -a_j*s + e_j + g_j*s^2 and g_j the CRT idempotent of limb j."""

    pairs: list[tuple[RingElement, RingElement]]
    params: ParamSet

    def ntt_pairs(self, limb_count: int) -> list[tuple[RingElement, RingElement]]:
        cache = self.__dict__.setdefault("_ntt_cache", {})
        if limb_count not in cache:
            cache[limb_count] = [
                (ntt_forward(b.prefix(limb_count)), ntt_forward(a.prefix(limb_count)))
                for b, a in self.pairs[:limb_count]
            ]
        return cache[limb_count]


@dataclass
class Ciphertext:
    parts: list[RingElement]
    params: ParamSet
    level: int
    scale_log2: int = 0

    @property
    def scheme(self) -> Scheme:
        return self.params.scheme

    @property
    def limb_count(self) -> int:
        return self.parts[0].ctx.limb_count

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (
            self.params == other.params
            and self.level == other.level
            and self.scale_log2 == other.scale_log2
            and len(self.parts) == len(other.parts)
            and all(a == b for a, b in zip(self.parts, other.parts))
        )


class KeyBundle(NamedTuple):
    secret: SecretKey
    public: PublicKey
    evaluation: EvalKey | None


def keygen(params: ParamSet, rng=None, *, allow_insecure: bool = False) -> KeyBundle:
    problems = validate(params)
    if problems:
        raise ParamError("; ".join(problems))
    if not params.secure and not allow_insecure:
        raise ParamError(f"{params.name or params} is insecure; pass allow_insecure=True")
    rng = _rng(rng)
    ctx = params.context()
    s = _small(params, ctx, ternary_coefficients(params.n, rng))
    s_ntt = ntt_forward(s)
    a = sample_uniform(ctx, rng)
    pk_b = ntt_inverse(pointwise_mul(ntt_forward(a), s_ntt))
    pk_b = -pk_b + _error(params, ctx, rng)
    sk = SecretKey(s, params)
    sk._ntt_cache[ctx.limb_count] = s_ntt
    ek = None
    if params.levels >= 2:
        s2 = ntt_inverse(pointwise_mul(s_ntt, s_ntt))
        pairs = []
        for j in range(ctx.limb_count):
            aj = sample_uniform(ctx, rng)
            bj = -ntt_inverse(pointwise_mul(ntt_forward(aj), s_ntt)) + _error(params, ctx, rng)
            gj = RingElement.zero(ctx)
            gj.data[j] = s2.data[j]
            pairs.append((bj + gj, aj))
        ek = EvalKey(pairs, params)
    return KeyBundle(sk, PublicKey(pk_b, a, params), ek)


def _message_poly(params: ParamSet, pt: Plaintext, ctx) -> tuple[RingElement, int]:
    """Ring element placed in c0 by encryption, and the ciphertext scale."""
    if params.scheme is Scheme.CKKS:
        if isinstance(pt, RealPlaintext):
            scale = pt.scale_log2 if pt.scale_log2 is not None else params.scale_log2
            pt = ckks_encode(pt.values, scale, params)
        elif isinstance(pt, PolyPlaintext):
            if pt.scale_log2 is None:
                raise SchemeError("CKKS polynomial plaintext needs a scale")
        else:
            raise SchemeError(f"CKKS cannot encrypt {type(pt).__name__}")
        if pt.coeffs.dtype == object:
            return RingElement.from_ints(ctx, list(pt.coeffs)), pt.scale_log2
        return RingElement.from_small(ctx, pt.coeffs), pt.scale_log2

    t = params.plaintext_modulus_t
    if isinstance(pt, IntegerPlaintext):
        pt = int_encode(pt.value, params)
    elif not isinstance(pt, PolyPlaintext):
        raise SchemeError(f"{params.scheme.value} cannot encrypt {type(pt).__name__}")
    m = RingElement.from_small(ctx, np.mod(np.asarray(pt.coeffs, dtype=np.int64), t))
    if params.scheme is Scheme.BFV:
        m = scalar_mul(m, ctx.q // t)
    return m, 0


def encrypt(pk: PublicKey, pt: Plaintext, rng=None) -> Ciphertext:
    params = pk.params
    rng = _rng(rng)
    ctx = params.context()
    m, scale = _message_poly(params, pt, ctx)
    u = ntt_forward(_small(params, ctx, ternary_coefficients(params.n, rng)))
    b_ntt, a_ntt = pk.ntt_pair
    c0 = ntt_inverse(pointwise_mul(b_ntt, u)) + _error(params, ctx, rng) + m
    c1 = ntt_inverse(pointwise_mul(a_ntt, u)) + _error(params, ctx, rng)
    return Ciphertext([c0, c1], params, params.levels, scale)


def phase(sk: SecretKey, ct: Ciphertext) -> RingElement:
    """c0 + c1*s (+ c2*s^2), in the coefficient domain."""
    if sk.params != ct.params:
        raise SchemeError("secret key and ciphertext use different parameters")
    if len(ct.parts) not in (2, 3):
        raise SchemeError(f"ciphertext has {len(ct.parts)} parts")
    s = sk.s_ntt(ct.limb_count)
    acc = ntt_forward(ct.parts[0])
    power = s
    for part in ct.parts[1:]:
        acc = acc + pointwise_mul(ntt_forward(part), power)
        power = pointwise_mul(power, s)
    return ntt_inverse(acc)


def decrypt_poly(sk: SecretKey, ct: Ciphertext) -> PolyPlaintext:
    params = ct.params
    d = crt_reconstruct(phase(sk, ct))
    if params.scheme is Scheme.CKKS:
        return PolyPlaintext(np.array(d, dtype=object), scale_log2=ct.scale_log2)
    t = params.plaintext_modulus_t
    if params.scheme is Scheme.BGV:
        coeffs = [c % t for c in d]
    else:
        q = ct.parts[0].ctx.q
        coeffs = [((2 * t * c + q) // (2 * q)) % t for c in d]
    return PolyPlaintext(np.array(coeffs, dtype=np.int64), modulus=t)


def decrypt(sk: SecretKey, ct: Ciphertext) -> IntegerPlaintext | RealPlaintext:
    poly = decrypt_poly(sk, ct)
    if ct.scheme is Scheme.CKKS:
        return RealPlaintext(ckks_decode(poly, ct.scale_log2), ct.scale_log2)
    return IntegerPlaintext(int_decode(poly))


def _check_compatible(ct1: Ciphertext, ct2: Ciphertext) -> None:
    if ct1.params != ct2.params:
        raise SchemeError("ciphertexts use different parameters")
    if ct1.level != ct2.level:
        raise SchemeError(f"level mismatch: {ct1.level} vs {ct2.level}")
    if ct1.scale_log2 != ct2.scale_log2:
        raise SchemeError(f"scale mismatch: 2^{ct1.scale_log2} vs 2^{ct2.scale_log2}")


def he_add(ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
    _check_compatible(ct1, ct2)
    if len(ct1.parts) != len(ct2.parts):
        raise SchemeError("part-count mismatch")
    parts = [ring_add(a, b) for a, b in zip(ct1.parts, ct2.parts)]
    return Ciphertext(parts, ct1.params, ct1.level, ct1.scale_log2)


def tensor(ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
    """Three-part product at scale s1 + s2 (no relinearization, no rescale)."""
    _check_compatible(ct1, ct2)
    if ct1.scheme is not Scheme.CKKS:
        raise SchemeError("ciphertext multiplication is only provided for CKKS")
    if len(ct1.parts) != 2 or len(ct2.parts) != 2:
        raise SchemeError("tensor expects two-part ciphertexts")
    a0, a1 = (ntt_forward(p) for p in ct1.parts)
    b0, b1 = (ntt_forward(p) for p in ct2.parts)
    d0 = pointwise_mul(a0, b0)
    d1 = pointwise_mul(a0, b1) + pointwise_mul(a1, b0)
    d2 = pointwise_mul(a1, b1)
    parts = [ntt_inverse(d) for d in (d0, d1, d2)]
    return Ciphertext(parts, ct1.params, ct1.level, ct1.scale_log2 + ct2.scale_log2)


def relinearize(ct: Ciphertext, ek: EvalKey) -> Ciphertext:
    if len(ct.parts) != 3:
        raise SchemeError("relinearize expects a three-part ciphertext")
    if ek is None or ek.params != ct.params:
        raise SchemeError("missing or mismatched evaluation key")
    c0, c1, c2 = ct.parts
    ctx = c2.ctx
    acc0 = ntt_forward(c0)
    acc1 = ntt_forward(c1)
    for j, (kb, ka) in enumerate(ek.ntt_pairs(ctx.limb_count)):
        # residues of c2 mod p_j, lifted into every limb
        digit = np.mod(c2.data[j][None, :], ctx.P).astype(np.uint64)
        d = ntt_forward(RingElement(ctx, digit))
        acc0 = acc0 + pointwise_mul(d, kb)
        acc1 = acc1 + pointwise_mul(d, ka)
    return Ciphertext([ntt_inverse(acc0), ntt_inverse(acc1)], ct.params, ct.level, ct.scale_log2)


def _drop_last_limb(x: RingElement) -> RingElement:
    """round(x / p_last) in the ring with the last limb removed."""
    ctx = x.ctx
    p_last = ctx.primes[-1]
    low = ctx.prefix(ctx.limb_count - 1)
    last = x.data[-1].astype(np.int64)
    last = np.where(last > p_last // 2, last - p_last, last)
    centered = RingElement(low, np.mod(last[None, :], low.P_i64).view(np.uint64))
    diff = RingElement(low, x.data[:-1].copy()) - centered
    return limb_scalar_mul(diff, [pow(p_last, -1, p) for p in low.primes])


def rescale(ct: Ciphertext) -> Ciphertext:
    if ct.scheme is not Scheme.CKKS:
        raise SchemeError("rescale is only defined for CKKS")
    if ct.level < 2:
        raise SchemeError("no level left to rescale into")
    p_last = ct.parts[0].ctx.primes[-1]
    parts = [_drop_last_limb(p) for p in ct.parts]
    dropped_bits = round(np.log2(float(p_last)))
    return Ciphertext(parts, ct.params, ct.level - 1, ct.scale_log2 - dropped_bits)


def he_mul_ckks(ct1: Ciphertext, ct2: Ciphertext, ek: EvalKey) -> Ciphertext:
    if ct1.scheme is not Scheme.CKKS:
        raise SchemeError("he_mul_ckks needs CKKS ciphertexts")
    if ct1.level < 2 or ct2.level < 2:
        raise SchemeError("multiplication needs level >= 2 on both operands")
    if ek is None or ek.params != ct1.params:
        raise SchemeError("missing or mismatched evaluation key")
    return rescale(relinearize(tensor(ct1, ct2), ek))


def replicate(value: float, params: ParamSet) -> RealPlaintext:
    """Same real value in every slot."""
    return RealPlaintext(np.full(params.slots, float(value)))


class PublicEvaluator:
    """Everything a party holding only public material can do: encrypt under
    the public key, add, and (with an evaluation key) multiply.  There is no
    path from here to a secret key."""

    def __init__(self, public_key: PublicKey, eval_key: EvalKey | None = None, rng=None):
        if not isinstance(public_key, PublicKey):
            raise TypeError(f"PublicEvaluator needs a PublicKey, got {type(public_key).__name__}")
        if eval_key is not None and not isinstance(eval_key, EvalKey):
            raise TypeError(f"eval_key must be an EvalKey, got {type(eval_key).__name__}")
        self.public_key = public_key
        self.eval_key = eval_key
        self.params = public_key.params
        self._rng = _rng(rng)
        self.add_count = 0
        self.mul_count = 0

    def encrypt_value(self, value) -> Ciphertext:
        if self.params.scheme is Scheme.CKKS:
            return encrypt(self.public_key, replicate(value, self.params), self._rng)
        return encrypt(self.public_key, IntegerPlaintext(int(value)), self._rng)

    def add(self, ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
        self.add_count += 1
        return he_add(ct1, ct2)

    def multiply(self, ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
        if self.eval_key is None:
            raise SchemeError("no evaluation key available")
        self.mul_count += 1
        return he_mul_ckks(ct1, ct2, self.eval_key)
