import dataclasses

import pytest

from hevx.params import (
    PRESET_IDS,
    TABLE1,
    ParamError,
    ParamSet,
    Scheme,
    find_params,
    get_preset,
    preset,
    toy_preset,
    validate,
)
from hevx.ring import is_prime, ntt_primes

SECURE = [p for p in PRESET_IDS if get_preset(p).secure]


def test_reference_rows():
    # (scheme, n, log2 q, t, log2 scale, levels, public key bytes, ciphertext bytes)
    assert [tuple(r) for r in TABLE1] == [
        (Scheme.BFV, 4096, 106, 65537, None, 1, 131895, 131939),
        (Scheme.BGV, 8192, 106, 65537, None, 1, 656789, 394573),
        (Scheme.CKKS, 16384, 106, None, 38, 1, 1312151, 787791),
        (Scheme.CKKS, 16384, 106, None, 38, 2, 1574473, 1050129),
    ]


def test_bfv_preset():
    ps = preset(Scheme.BFV, False)
    assert (ps.n, ps.plaintext_modulus_t, ps.levels) == (4096, 65537, 1)
    assert round(ps.log2_q) == 106


def test_ckks_multiplicative_preset():
    ps = preset("ckks", True)
    assert (ps.n, ps.scale_log2, ps.levels) == (16384, 38, 2)
    assert round(ps.log2_q) == 106
    # the top limb is the one a rescale drops; it sits just below the scale
    assert abs(ps.modulus_limbs[-1].bit_length() - ps.scale_log2) <= 1


def test_no_multiplicative_bfv_or_bgv():
    for scheme in (Scheme.BFV, Scheme.BGV):
        with pytest.raises(ParamError):
            preset(scheme, True)


@pytest.mark.parametrize("pid", SECURE)
def test_secure_presets_validate(pid):
    ps = get_preset(pid)
    assert validate(ps) == []
    assert 104 <= ps.limb_bits <= 110
    for p in ps.modulus_limbs:
        assert is_prime(p) and p % (2 * ps.n) == 1
    assert ps.secure


def test_every_preset_validates():
    for pid in PRESET_IDS:
        assert validate(get_preset(pid)) == [], pid


@pytest.mark.parametrize("pid", SECURE)
def test_single_field_perturbations_fail(pid):
    ps = get_preset(pid)
    halved = dataclasses.replace(ps, ring_degree_n=ps.n // 2)
    extra = dataclasses.replace(
        ps, modulus_limbs=ps.modulus_limbs + tuple(ntt_primes(40, ps.n, 1, exclude=ps.modulus_limbs))
    )
    assert validate(halved)
    assert validate(extra)
    if ps.scheme is Scheme.CKKS:
        assert validate(dataclasses.replace(ps, scale_log2=40))
    else:
        assert validate(dataclasses.replace(ps, plaintext_modulus_t=257))


def test_huge_modulus_has_no_reference_row():
    primes = tuple(ntt_primes(50, 4096, 4))
    ps = ParamSet(Scheme.BFV, 4096, primes, 65537, secure=True)
    assert any("reference row" in v or "outside" in v for v in validate(ps))


def test_non_power_of_two_degree():
    ps = ParamSet(Scheme.BFV, 24, (97,), 17)
    assert any("power of two" in v for v in validate(ps))


def test_other_violations():
    p = ntt_primes(30, 16, 1)[0]
    assert validate(ParamSet(Scheme.BFV, 16, (p + 2,), 17))  # not prime
    assert validate(ParamSet(Scheme.BFV, 16, (p, p), 17))  # repeated limb
    assert validate(ParamSet(Scheme.BGV, 16, (p,), 17, levels=2))  # depth 2 only for CKKS
    assert validate(ParamSet(Scheme.CKKS, 16, (p,), scale_log2=None))
    assert validate(ParamSet(Scheme.BFV, 16, (p,), None))
    assert validate(ParamSet(Scheme.BFV, 16, (p,), 17, error_stddev_sigma=0.0))


@pytest.mark.parametrize("scheme", list(Scheme))
def test_toy_presets(scheme):
    ps = toy_preset(scheme)
    assert ps.n == 16 and not ps.secure
    assert ps.n & (ps.n - 1) == 0
    for p in ps.modulus_limbs:
        assert is_prime(p) and p % (2 * ps.n) == 1


def test_levels_and_limbs():
    ps = get_preset("ckks-mul")
    assert ps.limbs_at_level(2) == ps.modulus_limbs
    assert ps.limbs_at_level(1) == ps.modulus_limbs[:-1]
    assert ps.level_of(2) == 1
    with pytest.raises(ParamError):
        ps.limbs_at_level(3)
    assert ps.context(1).limb_count == 2


def test_find_params_recognises_lower_levels():
    ps = get_preset("ckks-mul")
    assert find_params(Scheme.CKKS, ps.n, ps.modulus_limbs[:-1]) is ps
    assert find_params(Scheme.BFV, 4096, get_preset("bfv-add").modulus_limbs).name == "bfv-add"
    assert find_params(Scheme.BFV, 4096, (12289,)) is None


def test_unknown_preset():
    with pytest.raises(ParamError):
        get_preset("bfv-mul")
