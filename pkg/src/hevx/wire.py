"""Binary blobs for keys/ciphertexts and their MTU-sized fragments.

Blob layout (header is a fixed 64 bytes, big-endian fields):

    0   magic "HEVX"
    4   version u8
    5   kind u8        1 public key, 2 eval key, 3 ciphertext, 4 baseline
    6   scheme u8      0 none, 1 BFV, 2 BGV, 3 CKKS
    7   parts u8
    8   limb count u8
    9   level u8
    10  scale_log2 i16
    12  n u32
    16  limb primes, u64 each
    ..  body length u64 (bytes after the header)
    ..  zero padding
    60  CRC-32 of bytes 0..59

followed by little-endian u64 coefficients shaped (parts, limbs, n).  A
baseline blob carries raw payload bytes instead of coefficients.

Fragment layout: u32 seq_index, u32 total_count (big-endian), then payload.
"""

from __future__ import annotations

import enum
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .params import ParamSet, Scheme, find_params
from .ring import RingElement, get_context
from .schemes import Ciphertext, EvalKey, PublicKey

MAGIC = b"HEVX"
VERSION = 1
HEADER_SIZE = 64
FRAGMENT_HEADER_SIZE = 8
MAX_LIMBS = 4

_FIXED = struct.Struct(">4sBBBBBBhI")
_FRAG = struct.Struct(">II")
_CRC_OFFSET = 60

_SCHEME_CODES = {None: 0, Scheme.BFV: 1, Scheme.BGV: 2, Scheme.CKKS: 3}
_SCHEMES_BY_CODE = {v: k for k, v in _SCHEME_CODES.items()}


class BlobKind(enum.IntEnum):
    PUBLIC_KEY = 1
    EVAL_KEY = 2
    CIPHERTEXT = 3
    BASELINE = 4


class WireFormatError(ValueError):
    pass


class MissingFragmentsError(WireFormatError):
    def __init__(self, missing: list[int], total: int):
        self.missing = missing
        self.total = total
        shown = ", ".join(map(str, missing[:20])) + (" ..." if len(missing) > 20 else "")
        super().__init__(f"missing {len(missing)}/{total} fragments: {shown}")


class InconsistentFragmentsError(WireFormatError):
    pass


@dataclass(frozen=True)
class WireBlob:
    """A serialized message.  `kind` and `scheme` are read from the header."""

    body: bytes

    @property
    def kind(self) -> BlobKind:
        return BlobKind(self._fixed()[2])

    @property
    def scheme(self) -> Scheme | None:
        return _SCHEMES_BY_CODE[self._fixed()[3]]

    def _fixed(self):
        if len(self.body) < HEADER_SIZE:
            raise WireFormatError("blob shorter than its header")
        return _FIXED.unpack_from(self.body)

    def __len__(self) -> int:
        return len(self.body)


def _header(kind: BlobKind, scheme: Scheme | None, parts: int, primes: tuple[int, ...],
            level: int, scale_log2: int, n: int, body_len: int) -> bytes:
    if len(primes) > MAX_LIMBS:
        raise WireFormatError(f"at most {MAX_LIMBS} limbs fit the header")
    head = bytearray(HEADER_SIZE)
    _FIXED.pack_into(head, 0, MAGIC, VERSION, int(kind), _SCHEME_CODES[scheme],
                     parts, len(primes), level, scale_log2, n)
    off = _FIXED.size
    for p in primes:
        struct.pack_into(">Q", head, off, p)
        off += 8
    struct.pack_into(">Q", head, off, body_len)
    struct.pack_into(">I", head, _CRC_OFFSET, zlib.crc32(bytes(head[:_CRC_OFFSET])))
    return bytes(head)


def _pack(kind: BlobKind, params: ParamSet, elements: list[RingElement], level: int,
          scale_log2: int) -> WireBlob:
    ctx = elements[0].ctx
    stacked = np.stack([e.data for e in elements]).astype("<u8", copy=False)
    coeffs = stacked.tobytes()
    head = _header(kind, params.scheme, len(elements), ctx.primes, level, scale_log2,
                   ctx.n, len(coeffs))
    return WireBlob(head + coeffs)


def serialize(obj: Union[PublicKey, EvalKey, Ciphertext]) -> WireBlob:
    if isinstance(obj, Ciphertext):
        return _pack(BlobKind.CIPHERTEXT, obj.params, obj.parts, obj.level, obj.scale_log2)
    if isinstance(obj, PublicKey):
        return _pack(BlobKind.PUBLIC_KEY, obj.params, [obj.pk_b, obj.pk_a], obj.params.levels, 0)
    if isinstance(obj, EvalKey):
        flat = [e for pair in obj.pairs for e in pair]
        return _pack(BlobKind.EVAL_KEY, obj.params, flat, obj.params.levels, 0)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def baseline_blob(payload: bytes) -> WireBlob:
    """Unencrypted payload framed like any other blob."""
    return WireBlob(_header(BlobKind.BASELINE, None, 0, (), 0, 0, 0, len(payload)) + bytes(payload))


@dataclass(frozen=True)
class BlobHeader:
    kind: BlobKind
    scheme: Scheme | None
    parts: int
    primes: tuple[int, ...]
    level: int
    scale_log2: int
    n: int
    body_len: int


def parse_header(data: bytes) -> BlobHeader:
    if len(data) < HEADER_SIZE:
        raise WireFormatError(f"truncated header ({len(data)} < {HEADER_SIZE} bytes)")
    (crc,) = struct.unpack_from(">I", data, _CRC_OFFSET)
    if zlib.crc32(data[:_CRC_OFFSET]) != crc:
        raise WireFormatError("header checksum mismatch")
    magic, version, kind, scheme, parts, limbs, level, scale, n = _FIXED.unpack_from(data)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version}")
    try:
        kind = BlobKind(kind)
    except ValueError:
        raise WireFormatError(f"unknown blob kind {kind}") from None
    if scheme not in _SCHEMES_BY_CODE:
        raise WireFormatError(f"unknown scheme code {scheme}")
    if limbs > MAX_LIMBS:
        raise WireFormatError(f"limb count {limbs} exceeds {MAX_LIMBS}")
    off = _FIXED.size
    primes = struct.unpack_from(f">{limbs}Q", data, off)
    off += 8 * limbs
    (body_len,) = struct.unpack_from(">Q", data, off)
    off += 8
    if any(data[off:_CRC_OFFSET]):
        raise WireFormatError("reserved header bytes are not zero")
    return BlobHeader(kind, _SCHEMES_BY_CODE[scheme], parts, tuple(primes), level, scale, n, body_len)


def deserialize(blob: Union[WireBlob, bytes], params: ParamSet | None = None):
    """Parse a blob back into a PublicKey, EvalKey, Ciphertext, or (baseline) bytes."""
    data = blob.body if isinstance(blob, WireBlob) else bytes(blob)
    h = parse_header(data)
    if len(data) - HEADER_SIZE != h.body_len:
        raise WireFormatError(
            f"body length {len(data) - HEADER_SIZE} does not match header ({h.body_len})"
        )
    if h.kind is BlobKind.BASELINE:
        if h.scheme is not None or h.parts or h.primes or h.n:
            raise WireFormatError("baseline blob with ciphertext fields set")
        return data[HEADER_SIZE:]

    if h.scheme is None:
        raise WireFormatError("missing scheme")
    if h.n < 2 or h.n & (h.n - 1):
        raise WireFormatError(f"ring degree {h.n} is not a power of two")
    if not h.primes:
        raise WireFormatError("no limb primes")
    if h.body_len != h.parts * len(h.primes) * h.n * 8:
        raise WireFormatError("body length inconsistent with parts x limbs x n")
    if params is None:
        params = find_params(h.scheme, h.n, h.primes)
        if params is None:
            raise WireFormatError(f"no known {h.scheme.value} parameter set for n={h.n} with these limbs")
    elif params.scheme is not h.scheme or params.n != h.n or params.modulus_limbs[: len(h.primes)] != h.primes:
        raise WireFormatError("blob does not match the supplied parameters")
    if h.level != params.level_of(len(h.primes)) or not 1 <= h.level <= params.levels:
        raise WireFormatError(f"level {h.level} inconsistent with {len(h.primes)} limbs")
    if params.scheme is not Scheme.CKKS and h.scale_log2 != 0:
        raise WireFormatError("scale set on a non-CKKS blob")

    expected_parts = {
        BlobKind.PUBLIC_KEY: (2,),
        BlobKind.EVAL_KEY: (2 * len(h.primes),),
        BlobKind.CIPHERTEXT: (2, 3),
    }[h.kind]
    if h.parts not in expected_parts:
        raise WireFormatError(f"{h.kind.name} with {h.parts} parts")
    if h.kind is not BlobKind.CIPHERTEXT and len(h.primes) != len(params.modulus_limbs):
        raise WireFormatError("keys must carry the full modulus chain")

    coeffs = np.frombuffer(data, dtype="<u8", offset=HEADER_SIZE).astype(np.uint64)
    coeffs = coeffs.reshape(h.parts, len(h.primes), h.n)
    bound = np.array(h.primes, dtype=np.uint64).reshape(1, -1, 1)
    if np.any(coeffs >= bound):
        raise WireFormatError("coefficient not reduced modulo its limb prime")
    ctx = get_context(h.n, h.primes)
    elements = [RingElement(ctx, coeffs[i].copy()) for i in range(h.parts)]

    if h.kind is BlobKind.CIPHERTEXT:
        return Ciphertext(elements, params, h.level, h.scale_log2)
    if h.kind is BlobKind.PUBLIC_KEY:
        return PublicKey(elements[0], elements[1], params)
    return EvalKey([(elements[i], elements[i + 1]) for i in range(0, h.parts, 2)], params)


# --- fragmentation --------------------------------------------------------

@dataclass(frozen=True)
class Fragment:
    seq_index: int
    total_count: int
    payload: bytes

    def to_bytes(self) -> bytes:
        return _FRAG.pack(self.seq_index, self.total_count) + self.payload

    @classmethod
    def from_bytes(cls, datagram: bytes) -> "Fragment":
        if len(datagram) < FRAGMENT_HEADER_SIZE:
            raise WireFormatError(f"datagram of {len(datagram)} bytes has no fragment header")
        seq, total = _FRAG.unpack_from(datagram)
        if total == 0 or seq >= total:
            raise WireFormatError(f"fragment index {seq} outside total {total}")
        return cls(seq, total, bytes(datagram[FRAGMENT_HEADER_SIZE:]))


def fragment_count(size: int, mtu: int) -> int:
    return math.ceil(size / (mtu - FRAGMENT_HEADER_SIZE))


def fragment(blob: Union[WireBlob, bytes], mtu: int) -> list[Fragment]:
    body = blob.body if isinstance(blob, WireBlob) else bytes(blob)
    if mtu <= FRAGMENT_HEADER_SIZE:
        raise ValueError(f"mtu {mtu} leaves no room for payload")
    if not body:
        raise ValueError("cannot fragment an empty blob")
    step = mtu - FRAGMENT_HEADER_SIZE
    total = fragment_count(len(body), mtu)
    if total >= 1 << 32:
        raise ValueError("blob needs more than 2^32 fragments")
    view = memoryview(body)
    return [Fragment(i, total, bytes(view[i * step : (i + 1) * step])) for i in range(total)]


class Reassembler:
    """Collects fragments of one blob in any order, ignoring duplicates."""

    def __init__(self):
        self.total: int | None = None
        self.pieces: dict[int, bytes] = {}
        self.duplicates = 0

    def add(self, frag: Fragment) -> bool:
        if self.total is None:
            self.total = frag.total_count
        elif frag.total_count != self.total:
            raise InconsistentFragmentsError(
                f"fragment claims total {frag.total_count}, expected {self.total}"
            )
        if frag.seq_index in self.pieces:
            self.duplicates += 1
        else:
            self.pieces[frag.seq_index] = frag.payload
        return self.complete

    @property
    def complete(self) -> bool:
        return self.total is not None and len(self.pieces) == self.total

    def missing(self) -> list[int]:
        if self.total is None:
            return []
        return [i for i in range(self.total) if i not in self.pieces]

    def received(self) -> list[int]:
        return sorted(self.pieces)

    def result(self) -> WireBlob:
        if self.total is None:
            raise MissingFragmentsError([], 0)
        if not self.complete:
            raise MissingFragmentsError(self.missing(), self.total)
        return WireBlob(b"".join(self.pieces[i] for i in range(self.total)))


def reassemble(fragments: Iterable[Fragment]) -> WireBlob:
    r = Reassembler()
    for f in fragments:
        r.add(f)
    return r.result()
