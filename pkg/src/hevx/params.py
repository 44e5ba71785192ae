"""Parameter sets: the 128-bit secure presets and small insecure toys."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

from .ring import MAX_PRIME_BITS, RingContext, get_context, is_prime, ntt_primes

DEFAULT_SIGMA = 3.19


class Scheme(str, enum.Enum):
    BFV = "BFV"
    BGV = "BGV"
    CKKS = "CKKS"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(value.upper())
        except ValueError:
            raise ValueError(f"unknown scheme {value!r}") from None


class ParamError(ValueError):
    pass


class Table1Row(NamedTuple):
    scheme: Scheme
    n: int
    log2_q: int
    t: int | None
    scale_log2: int | None
    levels: int
    public_key_bytes: int
    ciphertext_bytes: int


# Reference rows for the security gate.  Key/ciphertext byte sizes come from a
# different serializer and are only used as external comparison points.
TABLE1 = (
    Table1Row(Scheme.BFV, 4096, 106, 65537, None, 1, 131895, 131939),
    Table1Row(Scheme.BGV, 8192, 106, 65537, None, 1, 656789, 394573),
    Table1Row(Scheme.CKKS, 16384, 106, None, 38, 1, 1312151, 787791),
    Table1Row(Scheme.CKKS, 16384, 106, None, 38, 2, 1574473, 1050129),
)


@dataclass(frozen=True)
class ParamSet:
    scheme: Scheme
    ring_degree_n: int
    modulus_limbs: tuple[int, ...]
    plaintext_modulus_t: int | None = None
    scale_log2: int | None = None
    levels: int = 1
    error_stddev_sigma: float = DEFAULT_SIGMA
    secure: bool = False
    name: str = ""

    @property
    def n(self) -> int:
        return self.ring_degree_n

    @property
    def q(self) -> int:
        return math.prod(self.modulus_limbs)

    @property
    def log2_q(self) -> float:
        return sum(math.log2(p) for p in self.modulus_limbs)

    @property
    def limb_bits(self) -> int:
        return sum(p.bit_length() for p in self.modulus_limbs)

    @property
    def slots(self) -> int:
        return self.ring_degree_n // 2

    def limbs_at_level(self, level: int) -> tuple[int, ...]:
        """Limb chain of a ciphertext with `level` multiplicative levels left."""
        if not 1 <= level <= self.levels:
            raise ParamError(f"level {level} outside 1..{self.levels}")
        return self.modulus_limbs[: len(self.modulus_limbs) - (self.levels - level)]

    def level_of(self, limb_count: int) -> int:
        return self.levels - (len(self.modulus_limbs) - limb_count)

    def context(self, level: int | None = None) -> RingContext:
        level = self.levels if level is None else level
        return get_context(self.ring_degree_n, self.limbs_at_level(level))

    def __str__(self) -> str:
        extra = (
            f"t={self.plaintext_modulus_t}"
            if self.scheme is not Scheme.CKKS
            else f"scale=2^{self.scale_log2}"
        )
        return (
            f"{self.name or self.scheme.value}: n={self.n}, log2(q)={self.log2_q:.2f} "
            f"({len(self.modulus_limbs)} limbs), {extra}, levels={self.levels}"
        )


def _table1_match(ps: ParamSet) -> Table1Row | None:
    for row in TABLE1:
        if (
            row.scheme is ps.scheme
            and row.n == ps.ring_degree_n
            and row.log2_q == round(ps.log2_q)
            and row.levels == ps.levels
            and row.t == (ps.plaintext_modulus_t if ps.scheme is not Scheme.CKKS else None)
            and row.scale_log2 == (ps.scale_log2 if ps.scheme is Scheme.CKKS else None)
        ):
            return row
    return None


def validate(ps: ParamSet) -> list[str]:
    """Return every violated invariant; an empty list means the set is usable."""
    problems: list[str] = []
    n = ps.ring_degree_n
    if n < 2 or n & (n - 1):
        problems.append(f"ring degree {n} is not a power of two")
    limbs = ps.modulus_limbs
    if not limbs:
        problems.append("modulus chain is empty")
    if len(set(limbs)) != len(limbs):
        problems.append("modulus limbs are not distinct")
    for p in limbs:
        if p.bit_length() > MAX_PRIME_BITS:
            problems.append(f"limb {p} exceeds {MAX_PRIME_BITS} bits")
        if not is_prime(p):
            problems.append(f"limb {p} is not prime")
        elif n > 0 and (p - 1) % (2 * n):
            problems.append(f"limb {p} is not 1 mod 2n={2 * n}")
    if ps.levels not in (1, 2):
        problems.append(f"levels={ps.levels} not in {{1, 2}}")
    if ps.levels == 2 and ps.scheme is not Scheme.CKKS:
        problems.append("levels=2 is only supported for CKKS")
    if ps.levels > len(limbs):
        problems.append("fewer limbs than levels")
    if ps.scheme is Scheme.CKKS:
        if ps.scale_log2 is None or ps.scale_log2 <= 0:
            problems.append("CKKS needs a positive scale_log2")
    else:
        t = ps.plaintext_modulus_t
        if t is None or t < 2:
            problems.append("BFV/BGV need a plaintext modulus t >= 2")
        elif limbs and t in limbs:
            problems.append("plaintext modulus coincides with a limb prime")
    if not ps.error_stddev_sigma > 0:
        problems.append("error stddev must be positive")
    if ps.secure:
        if not 104 <= ps.limb_bits <= 110:
            problems.append(f"limb bit-lengths sum to {ps.limb_bits}, outside [104, 110]")
        if ps.scheme is not Scheme.CKKS and ps.plaintext_modulus_t != 65537:
            problems.append("secure BFV/BGV require t=65537")
        if _table1_match(ps) is None:
            problems.append("no matching 128-bit reference row for (scheme, n, log2 q, t/scale, levels)")
    return problems


def check(ps: ParamSet) -> ParamSet:
    problems = validate(ps)
    if problems:
        raise ParamError("; ".join(problems))
    return ps


@lru_cache(maxsize=None)
def _build(preset_id: str) -> ParamSet:
    if preset_id == "bfv-add":
        return ParamSet(Scheme.BFV, 4096, tuple(ntt_primes(53, 4096, 2)), 65537,
                        levels=1, secure=True, name=preset_id)
    if preset_id == "bgv-add":
        return ParamSet(Scheme.BGV, 8192, tuple(ntt_primes(53, 8192, 2)), 65537,
                        levels=1, secure=True, name=preset_id)
    if preset_id == "ckks-add":
        return ParamSet(Scheme.CKKS, 16384, tuple(ntt_primes(53, 16384, 2)),
                        scale_log2=38, levels=1, secure=True, name=preset_id)
    if preset_id == "ckks-mul":
        # Two 34-bit base limbs plus a rescaling limb just under 2^38.
        top = ntt_primes(38, 16384, 1)
        base = ntt_primes(34, 16384, 2)
        return ParamSet(Scheme.CKKS, 16384, tuple(base + top),
                        scale_log2=38, levels=2, secure=True, name=preset_id)
    if preset_id == "toy-bfv":
        return ParamSet(Scheme.BFV, 16, tuple(ntt_primes(50, 16, 1)), 17, name=preset_id)
    if preset_id == "toy-bgv":
        return ParamSet(Scheme.BGV, 16, tuple(ntt_primes(50, 16, 1)), 17, name=preset_id)
    if preset_id == "toy-ckks":
        top = ntt_primes(30, 16, 1)
        base = ntt_primes(40, 16, 1)
        return ParamSet(Scheme.CKKS, 16, tuple(base + top), scale_log2=30,
                        levels=2, name=preset_id)
    raise ParamError(f"unknown preset {preset_id!r}; choose from {', '.join(PRESET_IDS)}")


PRESET_IDS = ("bfv-add", "bgv-add", "ckks-add", "ckks-mul", "toy-bfv", "toy-bgv", "toy-ckks")


def get_preset(preset_id: str) -> ParamSet:
    return _build(preset_id.lower())


def preset(scheme: "Scheme | str", with_multiplication: bool = False) -> ParamSet:
    scheme = Scheme.parse(scheme)
    if with_multiplication and scheme is not Scheme.CKKS:
        raise ParamError(f"{scheme.value} has no multiplicative 128-bit preset")
    if scheme is Scheme.CKKS:
        return get_preset("ckks-mul" if with_multiplication else "ckks-add")
    return get_preset(scheme.value.lower() + "-add")


def toy_preset(scheme: "Scheme | str") -> ParamSet:
    return get_preset("toy-" + Scheme.parse(scheme).value.lower())


def find_params(scheme: Scheme, n: int, primes: tuple[int, ...]) -> ParamSet | None:
    """Registered preset whose chain starts with `primes` (lower levels drop limbs)."""
    for pid in PRESET_IDS:
        ps = get_preset(pid)
        if ps.scheme is scheme and ps.n == n and ps.modulus_limbs[: len(primes)] == primes:
            if 1 <= ps.level_of(len(primes)) <= ps.levels:
                return ps
    return None
