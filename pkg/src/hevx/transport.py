"""Datagram transport: real UDP sockets or an in-process simulated channel.

Both expose the same small endpoint interface (`send`, `recv`, `close`) so
`send_blob`/`recv_blob` and the scenario sessions do not care which is used.
There is no retransmission; a lost fragment surfaces as a receive timeout.
"""

from __future__ import annotations

import collections
import enum
import heapq
import itertools
import logging
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Union

from .wire import (
    Fragment,
    InconsistentFragmentsError,
    Reassembler,
    WireBlob,
    WireFormatError,
    fragment,
)

log = logging.getLogger(__name__)

DEFAULT_PORT = 40400
DEFAULT_MTU = 1400
DEFAULT_RECV_TIMEOUT = 5.0
DEFAULT_SOCKET_BUFFER = 4 * 1024 * 1024
ETHERNET_PACE = 0.100
WIFI_RTT_MULTIPLIER = 1.2

PROBE = b"RTT?"
PROBE_REPLY = b"RTT=OK"

_POLL_SLICE = 0.2


class ChannelMode(str, enum.Enum):
    SOCKET = "socket"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class ChannelConfig:
    mode: ChannelMode = ChannelMode.SOCKET
    mtu: int = DEFAULT_MTU
    pace: float = ETHERNET_PACE
    recv_timeout: float = DEFAULT_RECV_TIMEOUT
    socket_buffer: int = DEFAULT_SOCKET_BUFFER
    one_way_latency: float = 0.0
    jitter_stddev: float = 0.0
    loss_probability: float = 0.0
    duplicate_probability: float = 0.0
    # Drop every datagram from this (0-based) index on, per sending endpoint.
    loss_after: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.mtu < 64:
            raise ValueError(f"mtu {self.mtu} is below 64 bytes")
        if not self.recv_timeout > 0:
            raise ValueError("recv_timeout must be positive")
        for name in ("loss_probability", "duplicate_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.pace < 0 or self.one_way_latency < 0 or self.jitter_stddev < 0:
            raise ValueError("durations must be non-negative")


class TransportError(RuntimeError):
    pass


class TransportTimeout(TransportError):
    def __init__(self, message: str, received: list[int] | None = None, total: int | None = None):
        super().__init__(message)
        self.received = received or []
        self.total = total


# --- pacing ---------------------------------------------------------------

@dataclass(frozen=True)
class FixedPacing:
    delay: float = ETHERNET_PACE

    def pace(self, endpoint: "Endpoint") -> float:
        return self.delay


@dataclass(frozen=True)
class AdaptiveRttPacing:
    """multiplier x the endpoint's last probe RTT, never below `floor`."""

    multiplier: float = WIFI_RTT_MULTIPLIER
    floor: float = 0.0

    def __post_init__(self):
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")

    def pace(self, endpoint: "Endpoint") -> float:
        rtt = endpoint.last_rtt
        if rtt is None:
            raise TransportError("adaptive pacing needs a probe RTT first")
        return max(self.floor, self.multiplier * rtt)


PacingPolicy = Union[FixedPacing, AdaptiveRttPacing]


# --- endpoints ------------------------------------------------------------

class Endpoint(Protocol):
    mtu: int
    recv_timeout: float
    last_rtt: float | None

    def send(self, datagram: bytes) -> None: ...

    def recv(self, timeout: float) -> bytes | None: ...

    def flush(self) -> None: ...

    def close(self) -> None: ...


class _EndpointBase:
    def __init__(self, mtu: int, recv_timeout: float):
        self.mtu = mtu
        self.recv_timeout = recv_timeout
        self.last_rtt: float | None = None
        self.pending: collections.deque[bytes] = collections.deque()
        # Datagrams of the last reassembled blob, used to drop late duplicates.
        self.previous_datagrams: frozenset[bytes] = frozenset()
        self.closed = False

    def _check_size(self, datagram: bytes) -> None:
        if len(datagram) > self.mtu:
            raise TransportError(f"datagram of {len(datagram)} bytes exceeds mtu {self.mtu}")

    def flush(self) -> None:
        pass


class UdpEndpoint(_EndpointBase):
    """A bound UDP socket.  Without an explicit peer it replies to whoever
    sent the most recent datagram."""

    def __init__(self, cfg: ChannelConfig, bind: tuple[str, int] = ("127.0.0.1", 0),
                 peer: tuple[str, int] | None = None):
        super().__init__(cfg.mtu, cfg.recv_timeout)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        for opt in (socket.SO_RCVBUF, socket.SO_SNDBUF):
            self.sock.setsockopt(socket.SOL_SOCKET, opt, cfg.socket_buffer)
        self.granted_rcvbuf = self.sock.getsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF)
        self.granted_sndbuf = self.sock.getsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF)
        if self.granted_rcvbuf < cfg.socket_buffer:
            log.info("requested %d byte receive buffer, OS granted %d",
                     cfg.socket_buffer, self.granted_rcvbuf)
        self.sock.bind(bind)
        self.sock.settimeout(_POLL_SLICE)
        self.peer = peer

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def send(self, datagram: bytes) -> None:
        self._check_size(datagram)
        if self.peer is None:
            raise TransportError("no peer address known yet")
        self.sock.sendto(datagram, self.peer)

    def recv(self, timeout: float) -> bytes | None:
        if self.pending:
            return self.pending.popleft()
        deadline = time.monotonic() + timeout
        while not self.closed:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            self.sock.settimeout(min(_POLL_SLICE, remaining))
            try:
                data, addr = self.sock.recvfrom(65535)
            except (socket.timeout, BlockingIOError):
                continue
            except OSError:
                if self.closed:
                    break
                # ICMP errors from an earlier send to a dead port; keep waiting.
                continue
            self.peer = addr
            return data
        raise TransportError("endpoint closed")

    def close(self) -> None:
        self.closed = True
        self.sock.close()


class _SimulatedQueue:
    def __init__(self):
        self.heap: list[tuple[float, int, bytes]] = []
        self.cond = threading.Condition()
        self.closed = False


class SimulatedEndpoint(_EndpointBase):
    def __init__(self, cfg: ChannelConfig, inbox: _SimulatedQueue, outbox: _SimulatedQueue,
                 rng: random.Random, counter: itertools.count):
        super().__init__(cfg.mtu, cfg.recv_timeout)
        self.cfg = cfg
        self.inbox = inbox
        self.outbox = outbox
        self.rng = rng
        self.counter = counter
        self.sent = 0
        self.delivered = 0
        self.last_delivery = 0.0

    def _delay(self) -> float:
        cfg = self.cfg
        jitter = 0.0
        if cfg.jitter_stddev > 0:
            jitter = self.rng.gauss(0.0, cfg.jitter_stddev)
            jitter = max(-6 * cfg.jitter_stddev, min(6 * cfg.jitter_stddev, jitter))
        return max(0.0, cfg.one_way_latency + jitter)

    def send(self, datagram: bytes) -> None:
        self._check_size(datagram)
        index = self.sent
        self.sent += 1
        cfg = self.cfg
        if cfg.loss_after is not None and index >= cfg.loss_after:
            return
        if cfg.loss_probability and self.rng.random() < cfg.loss_probability:
            return
        copies = 1
        if cfg.duplicate_probability and self.rng.random() < cfg.duplicate_probability:
            copies = 2
        now = time.monotonic()
        with self.outbox.cond:
            for _ in range(copies):
                due = now + self._delay()
                self.last_delivery = max(self.last_delivery, due)
                heapq.heappush(self.outbox.heap, (due, next(self.counter), bytes(datagram)))
                self.delivered += 1
            self.outbox.cond.notify_all()

    def recv(self, timeout: float) -> bytes | None:
        if self.pending:
            return self.pending.popleft()
        deadline = time.monotonic() + timeout
        q = self.inbox
        with q.cond:
            while True:
                if q.closed or self.closed:
                    raise TransportError("endpoint closed")
                now = time.monotonic()
                if q.heap and q.heap[0][0] <= now:
                    return heapq.heappop(q.heap)[2]
                if now >= deadline:
                    return None
                wake = deadline if not q.heap else min(deadline, q.heap[0][0])
                q.cond.wait(min(_POLL_SLICE, max(0.0, wake - now)))

    def flush(self) -> None:
        """Wait until everything already sent has reached the peer's queue."""
        remaining = self.last_delivery - time.monotonic()
        if remaining > 0:
            time.sleep(remaining)

    def close(self) -> None:
        self.closed = True
        for q in (self.inbox, self.outbox):
            with q.cond:
                q.closed = True
                q.cond.notify_all()


class SimulatedChannel:
    """Two endpoints joined by queues with per-datagram latency, jitter,
    loss and duplication.  Delivery follows due time, so jitter reorders."""

    def __init__(self, cfg: ChannelConfig):
        if cfg.mode is not ChannelMode.SIMULATED:
            raise ValueError("simulated channel needs mode=SIMULATED")
        self.cfg = cfg
        a, b = _SimulatedQueue(), _SimulatedQueue()
        seeder = random.Random(cfg.seed)
        counter = itertools.count()
        self.left = SimulatedEndpoint(cfg, inbox=a, outbox=b, rng=random.Random(seeder.getrandbits(64)),
                                      counter=counter)
        self.right = SimulatedEndpoint(cfg, inbox=b, outbox=a, rng=random.Random(seeder.getrandbits(64)),
                                       counter=counter)

    def close(self) -> None:
        self.left.close()
        self.right.close()


def simulated_channel(cfg: ChannelConfig) -> SimulatedChannel:
    return SimulatedChannel(cfg)


def open_pair(cfg: ChannelConfig, host: str = "127.0.0.1", port: int = 0) -> tuple[Endpoint, Endpoint]:
    """(sender, receiver) endpoints for a local run, over loopback UDP or simulated."""
    if cfg.mode is ChannelMode.SIMULATED:
        ch = SimulatedChannel(cfg)
        return ch.left, ch.right
    receiver = UdpEndpoint(cfg, bind=(host, port))
    sender = UdpEndpoint(cfg, bind=(host, 0), peer=receiver.address)
    return sender, receiver


# --- blob transfer --------------------------------------------------------

@dataclass
class SendReport:
    fragments_sent: int
    frag_time: float
    wall_time: float
    bytes_sent: int
    started_at: float = 0.0
    pace: float = 0.0


@dataclass
class RecvReport:
    fragments_received: int
    reassembly_time: float
    bytes_received: int
    duplicates: int = 0
    first_arrival: float = 0.0
    last_arrival: float = 0.0
    arrivals: list[float] = field(default_factory=list, repr=False)


def send_blob(endpoint: Endpoint, blob: WireBlob | bytes, policy: PacingPolicy) -> SendReport:
    t0 = time.monotonic()
    frags = fragment(blob, endpoint.mtu)
    datagrams = [f.to_bytes() for f in frags]
    frag_time = time.monotonic() - t0
    pace = policy.pace(endpoint)

    start = time.monotonic()
    sent_bytes = 0
    for i, d in enumerate(datagrams):
        if i:
            wait = start + i * pace - time.monotonic()
            if wait > 0:
                time.sleep(wait)
        endpoint.send(d)
        sent_bytes += len(d)
    wall = time.monotonic() - start
    endpoint.flush()
    return SendReport(len(datagrams), frag_time, wall, sent_bytes, start, pace)


def _answer_probe(endpoint: Endpoint, datagram: bytes) -> bool:
    if datagram == PROBE:
        endpoint.send(PROBE_REPLY)
        return True
    return datagram == PROBE_REPLY


def recv_blob(endpoint: Endpoint, first_timeout: float | None = None) -> tuple[WireBlob, RecvReport]:
    """Block until one blob is reassembled.

    `first_timeout` bounds the wait for the first fragment (default: the
    endpoint's between-fragment timeout); later gaps use `recv_timeout`.
    """
    reasm = Reassembler()
    seen: set[bytes] = set()
    stale = endpoint.previous_datagrams
    handling = 0.0
    arrivals: list[float] = []
    nbytes = 0
    timeout = endpoint.recv_timeout if first_timeout is None else first_timeout
    while True:
        datagram = endpoint.recv(timeout)
        if datagram is None:
            if reasm.total is None:
                raise TransportTimeout(f"no fragment within {timeout:.3g} s")
            raise TransportTimeout(
                f"timed out after {len(reasm.pieces)}/{reasm.total} fragments "
                f"({endpoint.recv_timeout:.3g} s without data)",
                received=reasm.received(), total=reasm.total,
            )
        now = time.monotonic()
        if len(datagram) <= len(PROBE_REPLY) and _answer_probe(endpoint, datagram):
            continue
        if datagram in stale and datagram not in seen:
            continue
        h0 = time.perf_counter()
        try:
            frag = Fragment.from_bytes(datagram)
            reasm.add(frag)
        except InconsistentFragmentsError:
            raise
        except WireFormatError:
            log.warning("dropping malformed %d-byte datagram", len(datagram))
            continue
        handling += time.perf_counter() - h0
        seen.add(datagram)
        arrivals.append(now)
        nbytes += len(datagram)
        timeout = endpoint.recv_timeout
        if reasm.complete:
            h0 = time.perf_counter()
            blob = reasm.result()
            handling += time.perf_counter() - h0
            endpoint.previous_datagrams = frozenset(seen)
            return blob, RecvReport(
                fragments_received=len(reasm.pieces),
                reassembly_time=handling,
                bytes_received=nbytes,
                duplicates=reasm.duplicates,
                first_arrival=arrivals[0],
                last_arrival=arrivals[-1],
                arrivals=arrivals,
            )


def measure_rtt_probe(endpoint: Endpoint, timeout: float | None = None) -> float:
    """Send the 4-byte probe and wait for the 6-byte reply; returns seconds."""
    timeout = endpoint.recv_timeout if timeout is None else timeout
    stash: list[bytes] = []
    t0 = time.monotonic()
    endpoint.send(PROBE)
    deadline = t0 + timeout
    try:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportTimeout(f"no probe reply within {timeout:.3g} s")
            d = endpoint.recv(remaining)
            if d is None:
                continue
            if d == PROBE_REPLY:
                rtt = time.monotonic() - t0
                endpoint.last_rtt = rtt
                return rtt
            if d == PROBE:
                endpoint.send(PROBE_REPLY)
                continue
            stash.append(d)
    finally:
        endpoint.pending.extend(stash)


def serve_probes(endpoint: Endpoint, count: int = 1, timeout: float | None = None) -> int:
    """Echo mode: answer up to `count` probes; returns how many were answered."""
    timeout = endpoint.recv_timeout if timeout is None else timeout
    answered = 0
    while answered < count:
        d = endpoint.recv(timeout)
        if d is None:
            break
        if d == PROBE:
            endpoint.send(PROBE_REPLY)
            answered += 1
        else:
            endpoint.pending.append(d)
            break
    return answered

