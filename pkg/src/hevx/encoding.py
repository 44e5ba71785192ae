"""Plaintext encodings: constant-polynomial integers and the CKKS embedding."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .params import ParamSet


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class IntegerPlaintext:
    value: int


@dataclass(frozen=True)
class RealPlaintext:
    values: tuple[float, ...]
    scale_log2: int | None = None

    def __init__(self, values, scale_log2: int | None = None):
        object.__setattr__(self, "values", tuple(float(v) for v in np.atleast_1d(values)))
        object.__setattr__(self, "scale_log2", scale_log2)


@dataclass(frozen=True, eq=False)
class PolyPlaintext:
    """Integer coefficient vector (int64, or object for very large values).

    `modulus` is t for BFV/BGV plaintexts; `scale_log2` is set for CKKS ones.
    """

    coeffs: np.ndarray
    modulus: int | None = None
    scale_log2: int | None = None

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


Plaintext = Union[IntegerPlaintext, RealPlaintext, PolyPlaintext]


def int_encode(value: int, params: ParamSet) -> PolyPlaintext:
    t = params.plaintext_modulus_t
    if t is None:
        raise EncodingError(f"{params.scheme.value} has no plaintext modulus")
    if not 0 <= value < t:
        raise EncodingError(f"value {value} outside [0, {t})")
    coeffs = np.zeros(params.n, dtype=np.int64)
    coeffs[0] = value
    return PolyPlaintext(coeffs, modulus=t)


def int_decode(p: PolyPlaintext) -> int:
    if p.modulus is None:
        raise EncodingError("polynomial carries no plaintext modulus")
    return int(p.coeffs[0]) % p.modulus


@lru_cache(maxsize=8)
def _embedding(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Twist by zeta^i (zeta = exp(i*pi/n)) and the slot/conjugate positions
    among the n odd powers zeta^(2k+1), ordered by powers of 5."""
    twist = np.exp(1j * np.pi * np.arange(n) / n)
    exps = np.empty(n // 2, dtype=np.int64)
    e = 1
    for j in range(n // 2):
        exps[j] = e
        e = e * 5 % (2 * n)
    slot_idx = (exps - 1) // 2
    conj_idx = (2 * n - exps - 1) // 2
    return twist, slot_idx, conj_idx


def ckks_encode(values: Sequence[complex], scale_log2: int, params: ParamSet) -> PolyPlaintext:
    n = params.n
    vals = np.asarray(values, dtype=np.complex128).ravel()
    if len(vals) > n // 2:
        raise EncodingError(f"{len(vals)} values exceed the {n // 2} available slots")
    twist, slot_idx, conj_idx = _embedding(n)
    z = np.zeros(n // 2, dtype=np.complex128)
    z[: len(vals)] = vals
    evals = np.empty(n, dtype=np.complex128)
    evals[slot_idx] = z
    evals[conj_idx] = np.conj(z)
    coeffs = np.real(np.fft.fft(evals) / n * np.conj(twist))
    scaled = np.rint(coeffs * float(2.0**scale_log2))
    peak = float(np.max(np.abs(scaled))) if n else 0.0
    if not np.isfinite(peak) or peak >= params.q / 2:
        raise EncodingError(f"scaled plaintext (|c| ~ 2^{np.log2(peak + 1):.1f}) overflows q")
    if peak < 2.0**62:
        out = scaled.astype(np.int64)
    else:
        out = np.array([int(v) for v in scaled], dtype=object)
    return PolyPlaintext(out, scale_log2=scale_log2)


def ckks_decode(p: PolyPlaintext, scale_log2: int | None = None) -> np.ndarray:
    scale_log2 = p.scale_log2 if scale_log2 is None else scale_log2
    if scale_log2 is None:
        raise EncodingError("no scale given for CKKS decoding")
    c = np.asarray(p.coeffs).astype(np.float64) / float(2.0**scale_log2)
    n = len(c)
    twist, slot_idx, _ = _embedding(n)
    evals = n * np.fft.ifft(c * twist)
    return np.real(evals[slot_idx])
