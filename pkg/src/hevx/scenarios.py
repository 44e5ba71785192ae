"""The two benchmarked use cases, run end to end between a sender (vehicle)
and a receiver (RSU): an encrypted vehicle count and an encrypted average
speed.

Inputs are a pure function of (seed, trial), so the sender can compute the
ground truth without being told the RSU's plaintext values.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import TrialMetrics
from .params import ParamSet, Scheme, get_preset
from .rsu import LISTEN_TIMEOUT, ReceiverJob, receiver_session
from .schemes import IntegerPlaintext, decrypt, encrypt, keygen, replicate
from .transport import (
    ChannelConfig,
    Endpoint,
    PacingPolicy,
    measure_rtt_probe,
    open_pair,
    recv_blob,
    send_blob,
)
from .wire import BlobKind, deserialize, fragment_count, serialize

log = logging.getLogger(__name__)

COUNT_TOLERANCE_CKKS = 1e-2
AVERAGE_TOLERANCE = 0.05


class ScenarioKind(str, enum.Enum):
    COUNT = "count"
    AVERAGE_SPEED = "avg"


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: ScenarioKind
    preset_id: str
    vehicle_count: int
    trials: int = 1
    speed_range: tuple[float, float] = (40.0, 60.0)
    presence_probability: float = 1.0
    seed: int = 0
    allow_insecure: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scenario", ScenarioKind(self.scenario))
        if self.vehicle_count < 2:
            raise ScenarioError("vehicle_count must be at least 2")
        if self.trials < 1:
            raise ScenarioError("trials must be at least 1")
        if not 0.0 <= self.presence_probability <= 1.0:
            raise ScenarioError("presence_probability must lie in [0, 1]")
        lo, hi = self.speed_range
        if not lo <= hi:
            raise ScenarioError("speed_range low exceeds high")
        ps = self.params
        if self.scenario is ScenarioKind.AVERAGE_SPEED and not (
            ps.scheme is Scheme.CKKS and ps.levels == 2
        ):
            raise ScenarioError("average speed needs a CKKS parameter set with levels=2")
        t = ps.plaintext_modulus_t
        if ps.scheme is not Scheme.CKKS and self.vehicle_count >= t:
            raise ScenarioError(f"a count of {self.vehicle_count} does not fit plaintext modulus t={t}")

    @property
    def params(self) -> ParamSet:
        return get_preset(self.preset_id)

    @property
    def scheme(self) -> Scheme:
        return self.params.scheme


@dataclass(frozen=True)
class VehicleInputs:
    """values[0] belongs to the sender, the rest to vehicles the RSU simulates."""

    values: tuple[float, ...]

    @property
    def ground_truth(self) -> float:
        return sum(self.values)


def trial_seed(cfg: ScenarioConfig, trial: int, stream: int) -> list[int]:
    return [cfg.seed & (2**64 - 1), trial, stream]


def simulated_inputs(cfg: ScenarioConfig, trial: int) -> VehicleInputs:
    rng = np.random.default_rng(trial_seed(cfg, trial, 0))
    n = cfg.vehicle_count
    if cfg.scenario is ScenarioKind.COUNT:
        present = rng.random(n - 1) < cfg.presence_probability
        values = (1.0,) + tuple(float(b) for b in present)
    else:
        lo, hi = cfg.speed_range
        values = tuple(float(v) for v in rng.uniform(lo, hi, n))
    return VehicleInputs(values)


def expected_value(cfg: ScenarioConfig, inputs: VehicleInputs) -> float:
    if cfg.scenario is ScenarioKind.COUNT:
        return inputs.ground_truth
    return inputs.ground_truth / cfg.vehicle_count


def tolerance(cfg: ScenarioConfig) -> float:
    if cfg.scenario is ScenarioKind.AVERAGE_SPEED:
        return AVERAGE_TOLERANCE
    return COUNT_TOLERANCE_CKKS if cfg.scheme is Scheme.CKKS else 0.0


def receiver_job(cfg: ScenarioConfig, trial: int) -> ReceiverJob:
    inputs = simulated_inputs(cfg, trial)
    values = inputs.values[1:]
    if cfg.scheme is not Scheme.CKKS:
        values = tuple(int(v) for v in values)
    return ReceiverJob(
        scenario=cfg.scenario.value,
        scheme=cfg.scheme,
        vehicle_count=cfg.vehicle_count,
        values=values,
        encrypt_seed=tuple(trial_seed(cfg, trial, 2)),
        trial=trial,
    )


@dataclass
class ScenarioResult:
    trial: int
    decrypted_value: float | int | None
    ground_truth: float | int
    metrics: TrialMetrics | None
    verified: bool
    error: str | None = None
    average: float | None = None
    probe_rtt_ms: float | None = None
    keygen_ms: float | None = None
    receiver: dict = field(default_factory=dict)


def sender_session(cfg: ScenarioConfig, endpoint: Endpoint, policy: PacingPolicy, trial: int = 0,
                   compute_timeout: float = LISTEN_TIMEOUT) -> ScenarioResult:
    ps = cfg.params
    inputs = simulated_inputs(cfg, trial)
    truth = expected_value(cfg, inputs)
    if ps.scheme is not Scheme.CKKS:
        truth = int(truth)
    rng = np.random.default_rng(trial_seed(cfg, trial, 1))

    probe = measure_rtt_probe(endpoint)
    t0 = time.perf_counter()
    keys = keygen(ps, rng, allow_insecure=cfg.allow_insecure)
    keygen_s = time.perf_counter() - t0

    send_blob(endpoint, serialize(keys.public), policy)
    if cfg.scenario is ScenarioKind.AVERAGE_SPEED:
        if keys.evaluation is None:
            raise ScenarioError("parameter set produced no evaluation key")
        send_blob(endpoint, serialize(keys.evaluation), policy)

    own = inputs.values[0]
    t0 = time.perf_counter()
    if ps.scheme is Scheme.CKKS:
        ct = encrypt(keys.public, replicate(own, ps), rng)
    else:
        ct = encrypt(keys.public, IntegerPlaintext(int(own)), rng)
    encrypt_s = time.perf_counter() - t0

    blob = serialize(ct)
    sent = send_blob(endpoint, blob, policy)
    result_blob, got = recv_blob(endpoint, first_timeout=compute_timeout)
    rtt_s = got.last_arrival - sent.started_at

    trailer, _ = recv_blob(endpoint)
    if trailer.kind is not BlobKind.BASELINE or result_blob.kind is not BlobKind.CIPHERTEXT:
        raise ScenarioError("unexpected message order from receiver")
    rx = json.loads(deserialize(trailer))
    if (rx["scenario"], rx["vehicle_count"], rx["trial"]) != (cfg.scenario.value, cfg.vehicle_count, trial):
        raise ScenarioError(f"receiver ran a different job: {rx}")

    result_ct = deserialize(result_blob, ps)
    t0 = time.perf_counter()
    pt = decrypt(keys.secret, result_ct)
    decrypt_s = time.perf_counter() - t0
    value = pt.value if isinstance(pt, IntegerPlaintext) else float(pt.values[0])

    if rx["hom_op_ms"] > rtt_s * 1e3:
        raise ScenarioError("receiver compute window exceeds the measured RTT")
    metrics = TrialMetrics(
        encrypt_ms=encrypt_s * 1e3,
        hom_op_ms=rx["hom_op_ms"],
        decrypt_ms=decrypt_s * 1e3,
        rtt_ms=rtt_s * 1e3,
        frag_ms=sent.frag_time * 1e3 + rx["frag_ms"],
        reasm_ms=got.reassembly_time * 1e3 + rx["reasm_ms"],
        fragments_total=sent.fragments_sent,
        bytes_sent=sent.bytes_sent,
        bytes_received=got.bytes_received,
        trial=trial,
    )
    if metrics.fragments_total != fragment_count(len(blob), endpoint.mtu):
        raise ScenarioError("fragment count disagrees with the ceiling law")
    verified = math.isfinite(value) and abs(value - truth) <= tolerance(cfg)
    average = value / cfg.vehicle_count if cfg.scenario is ScenarioKind.COUNT else None
    return ScenarioResult(
        trial=trial,
        decrypted_value=value,
        ground_truth=truth,
        metrics=metrics,
        verified=verified,
        error=None if verified else f"decrypted {value!r}, expected {truth!r}",
        average=average,
        probe_rtt_ms=probe * 1e3,
        keygen_ms=keygen_s * 1e3,
        receiver=rx,
    )


def run_trial(cfg: ScenarioConfig, channel: ChannelConfig, policy: PacingPolicy, trial: int,
              port: int = 0, listen_timeout: float | None = None,
              compute_timeout: float = LISTEN_TIMEOUT) -> ScenarioResult:
    """One trial over a fresh local channel, receiver in a background thread."""
    inputs = simulated_inputs(cfg, trial)
    truth = expected_value(cfg, inputs)
    sender_ep, receiver_ep = open_pair(channel, port=port)
    listen = channel.recv_timeout if listen_timeout is None else listen_timeout
    failure: list[BaseException] = []
    job = receiver_job(cfg, trial)

    def rsu():
        try:
            receiver_session(receiver_ep, job, policy, listen_timeout=listen,
                             compute_timeout=compute_timeout)
        except BaseException as exc:  # surfaced through the sender's result
            failure.append(exc)
            sender_ep.close()

    thread = threading.Thread(target=rsu, name=f"rsu-trial-{trial}", daemon=True)
    thread.start()
    try:
        return sender_session(cfg, sender_ep, policy, trial, compute_timeout=compute_timeout)
    except Exception as exc:
        thread.join(timeout=1.0)
        cause = failure[0] if failure else exc
        log.warning("trial %d failed: %s", trial, cause)
        return ScenarioResult(trial, None, truth, None, False,
                              error=f"{type(cause).__name__}: {cause}")
    finally:
        thread.join(timeout=channel.recv_timeout + 1.0)
        sender_ep.close()
        receiver_ep.close()


def run_trials(cfg: ScenarioConfig, channel: ChannelConfig, policy: PacingPolicy, port: int = 0,
               listen_timeout: float | None = None, progress=None) -> list[ScenarioResult]:
    results = []
    for trial in range(cfg.trials):
        ch = channel if channel.seed is None else replace(channel, seed=channel.seed + trial)
        r = run_trial(cfg, ch, policy, trial, port=port, listen_timeout=listen_timeout)
        results.append(r)
        if progress is not None:
            progress(r)
    return results


def completed_metrics(results: list[ScenarioResult]) -> list[TrialMetrics]:
    return [r.metrics for r in results if r.metrics is not None]

