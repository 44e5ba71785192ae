"""Receiver (roadside unit) session.

This module only ever holds public material: it imports the public-key
evaluator and the wire format, never key generation or decryption.  The
privacy-boundary tests scan this file to keep it that way.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .params import Scheme
from .schemes import Ciphertext, EvalKey, PublicEvaluator, PublicKey
from .transport import (
    AdaptiveRttPacing,
    Endpoint,
    PacingPolicy,
    measure_rtt_probe,
    recv_blob,
    send_blob,
)
from .wire import BlobKind, WireBlob, baseline_blob, deserialize, serialize

LISTEN_TIMEOUT = 600.0


class ReceiverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReceiverJob:
    scenario: str            # "count" or "avg"
    scheme: Scheme
    vehicle_count: int
    values: tuple[float, ...]  # the N - 1 simulated inputs held by the RSU
    encrypt_seed: tuple[int, ...]
    trial: int = 0


@dataclass
class ReceiverReport:
    scenario: str
    vehicle_count: int
    trial: int
    hom_op_ms: float
    add_count: int
    mul_count: int
    frag_ms: float
    reasm_ms: float
    fragments_sent: int
    fragments_received: int
    result_bytes: int
    deserialize_ms: float
    serialize_ms: float

    def to_json(self) -> bytes:
        return json.dumps(self.__dict__, sort_keys=True).encode()


def _expect(blob: WireBlob, kind: BlobKind, scheme: Scheme | None) -> None:
    if blob.kind is not kind:
        raise ReceiverError(f"expected {kind.name} blob, got {blob.kind.name}")
    if scheme is not None and blob.scheme is not scheme:
        raise ReceiverError(
            f"received {blob.scheme.value if blob.scheme else 'unknown'} key, configured for {scheme.value}"
        )


def aggregate(evaluator: PublicEvaluator, own: Ciphertext, job: ReceiverJob) -> Ciphertext:
    """Encrypt the RSU's simulated inputs, add them to the sender's ciphertext
    and, for averaging, multiply by an encrypted 1/N."""
    total = own
    for v in job.values:
        total = evaluator.add(total, evaluator.encrypt_value(v))
    if job.scenario == "avg":
        total = evaluator.multiply(total, evaluator.encrypt_value(1.0 / job.vehicle_count))
    return total


def receiver_session(endpoint: Endpoint, job: ReceiverJob, policy: PacingPolicy,
                     listen_timeout: float = LISTEN_TIMEOUT,
                     compute_timeout: float = LISTEN_TIMEOUT) -> ReceiverReport:
    blob, rep = recv_blob(endpoint, first_timeout=listen_timeout)
    _expect(blob, BlobKind.PUBLIC_KEY, job.scheme)
    pk = deserialize(blob)
    if not isinstance(pk, PublicKey):
        raise ReceiverError("public key blob did not decode to a public key")
    ek = None
    if job.scenario == "avg":
        blob, rep = recv_blob(endpoint, first_timeout=compute_timeout)
        _expect(blob, BlobKind.EVAL_KEY, job.scheme)
        ek = deserialize(blob)
        if not isinstance(ek, EvalKey):
            raise ReceiverError("evaluation key blob did not decode to an evaluation key")

    blob, rep = recv_blob(endpoint, first_timeout=compute_timeout)
    _expect(blob, BlobKind.CIPHERTEXT, job.scheme)
    t0 = time.perf_counter()
    own = deserialize(blob, pk.params)
    deser = time.perf_counter() - t0

    evaluator = PublicEvaluator(pk, ek, rng=np.random.default_rng(list(job.encrypt_seed)))
    t0 = time.perf_counter()
    result = aggregate(evaluator, own, job)
    hom = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = serialize(result)
    ser = time.perf_counter() - t0
    if isinstance(policy, AdaptiveRttPacing):
        measure_rtt_probe(endpoint)
    sent = send_blob(endpoint, out, policy)

    report = ReceiverReport(
        scenario=job.scenario,
        vehicle_count=job.vehicle_count,
        trial=job.trial,
        hom_op_ms=hom * 1e3,
        add_count=evaluator.add_count,
        mul_count=evaluator.mul_count,
        frag_ms=sent.frag_time * 1e3,
        reasm_ms=rep.reassembly_time * 1e3,
        fragments_sent=sent.fragments_sent,
        fragments_received=rep.fragments_received,
        result_bytes=len(out),
        deserialize_ms=deser * 1e3,
        serialize_ms=ser * 1e3,
    )
    send_blob(endpoint, baseline_blob(report.to_json()), policy)
    return report
