"""Homomorphic aggregation for vehicle-to-infrastructure messages.

BFV, BGV and CKKS over an RNS polynomial ring, a fragmenting datagram
transport, and a benchmark harness for encrypted counting and averaging.
"""

__version__ = "0.1.0"

from .params import ParamSet, Scheme, get_preset, preset, toy_preset, validate  # noqa: E402
from .schemes import (  # noqa: E402
    Ciphertext,
    EvalKey,
    PublicEvaluator,
    PublicKey,
    SecretKey,
    decrypt,
    encrypt,
    he_add,
    he_mul_ckks,
    keygen,
)
from .wire import WireBlob, deserialize, fragment, reassemble, serialize  # noqa: E402

__all__ = [
    "ParamSet", "Scheme", "get_preset", "preset", "toy_preset", "validate",
    "Ciphertext", "EvalKey", "PublicEvaluator", "PublicKey", "SecretKey",
    "decrypt", "encrypt", "he_add", "he_mul_ckks", "keygen",
    "WireBlob", "deserialize", "fragment", "reassemble", "serialize",
]
