"""Inter-RSU message transport: envelopes, registration, broadcast.

Two transports share one contract: a deterministic simulated link layer
driven by a virtual clock (configurable latency and drop rate, seeded), and
a real TCP transport framing envelopes with a 4-byte big-endian length
prefix. The topology is a full mesh: every broadcast is offered to every
other registered node.
"""

from __future__ import annotations

import heapq
import json
import random
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .clock import VirtualClock

MSG_TYPES = ("alert", "status", "observation-relay")


class NetworkError(Exception):
    pass


class DuplicateNode(NetworkError):
    pass


class PoolExhausted(NetworkError):
    pass


class UnregisteredOrigin(NetworkError):
    pass


@dataclass(frozen=True)
class Envelope:
    msg_type: str
    origin: str
    seq: int
    payload: dict
    sent_at_ms: float

    def __post_init__(self) -> None:
        if self.msg_type not in MSG_TYPES:
            raise ValueError(f"unknown msg_type {self.msg_type!r}")

    def to_dict(self) -> dict:
        return {
            "msg_type": self.msg_type,
            "origin": self.origin,
            "seq": self.seq,
            "payload": self.payload,
            "sent_at": self.sent_at_ms,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Envelope":
        try:
            return cls(
                msg_type=raw["msg_type"],
                origin=raw["origin"],
                seq=int(raw["seq"]),
                payload=dict(raw["payload"]),
                sent_at_ms=float(raw["sent_at"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed envelope: {exc}") from exc


def encode_envelope(envelope: Envelope) -> bytes:
    body = json.dumps(envelope.to_dict(), sort_keys=True).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def read_envelope(read: Callable[[int], bytes]) -> Envelope | None:
    """Read one length-prefixed envelope; None on clean EOF."""
    header = read(4)
    if len(header) < 4:
        return None
    (length,) = struct.unpack(">I", header)
    body = read(length)
    if len(body) < length:
        raise ValueError("truncated envelope body")
    return Envelope.from_dict(json.loads(body.decode("utf-8")))


@dataclass(frozen=True)
class LinkConfig:
    """Latency/drop model for one directed link."""

    kind: str = "fixed"  # "fixed" | "uniform"
    latency_ms: float = 20.0
    latency_range: tuple[float, float] | None = None
    drop_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "uniform"):
            raise ValueError(f"unknown latency model {self.kind!r}")
        if self.kind == "uniform":
            if self.latency_range is None:
                raise ValueError("uniform latency model needs latency_range")
            lo, hi = self.latency_range
            if lo > hi:
                raise ValueError(f"latency_range lo {lo} > hi {hi}")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "LinkConfig":
        rng = raw.get("latency_range")
        return cls(
            kind=raw.get("kind", "fixed"),
            latency_ms=float(raw.get("latency_ms", 20.0)),
            latency_range=(float(rng[0]), float(rng[1])) if rng is not None else None,
            drop_rate=float(raw.get("drop_rate", 0.0)),
            seed=int(raw.get("seed", 0)),
        )


class Link:
    """A seeded sampler over one link; outcomes depend only on the seed and
    the sequence position of the call."""

    def __init__(self, config: LinkConfig, stream: str = "") -> None:
        self.config = config
        self._rng = random.Random(f"{config.seed}|{stream}")

    def deliver(self, envelope: Envelope) -> tuple[bool, float]:
        delivered = self._rng.random() >= self.config.drop_rate
        if self.config.kind == "fixed":
            latency = self.config.latency_ms
        else:
            lo, hi = self.config.latency_range  # type: ignore[misc]
            latency = self._rng.uniform(lo, hi)
        return delivered, latency


def deliver_simulated(link: "Link | LinkConfig", envelope: Envelope) -> tuple[bool, float]:
    """Sample one drop decision and delivery latency for *envelope*.

    A bare LinkConfig starts a fresh sampler at sequence position zero; pass
    a Link to keep drawing from one seeded stream.
    """
    if isinstance(link, LinkConfig):
        link = Link(link)
    return link.deliver(envelope)


def default_address_pool(size: int = 64, prefix: str = "10.0.0.") -> list[str]:
    """Synthetic dynamically-assignable addresses for the simulated network."""
    return [f"{prefix}{i}" for i in range(1, size + 1)]


class Topology:
    """Full-mesh node registry: RSU id -> address, plus per-pair links."""

    def __init__(
        self,
        address_pool: Sequence[str] | None = None,
        default_link: LinkConfig = LinkConfig(),
        link_overrides: Mapping[tuple[str, str], LinkConfig] | None = None,
    ) -> None:
        self._pool = list(address_pool if address_pool is not None else default_address_pool())
        self.default_link = default_link
        self._overrides = dict(link_overrides or {})
        self.nodes: dict[str, str] = {}

    def register(self, rsu_id: str) -> str:
        if rsu_id in self.nodes:
            raise DuplicateNode(f"rsu id {rsu_id!r} already registered")
        if not self._pool:
            raise PoolExhausted("address pool exhausted")
        address = self._pool.pop(0)
        self.nodes[rsu_id] = address
        return address

    def address_of(self, rsu_id: str) -> str:
        try:
            return self.nodes[rsu_id]
        except KeyError:
            raise UnregisteredOrigin(f"rsu id {rsu_id!r} not registered") from None

    def peers(self, rsu_id: str) -> list[str]:
        return sorted(n for n in self.nodes if n != rsu_id)

    def link_for(self, origin: str, peer: str) -> LinkConfig:
        return self._overrides.get((origin, peer), self.default_link)


def register_node(
    topology: Topology,
    rsu_id: str,
    transport: "SimulatedTransport | SocketTransport | None" = None,
    envelope_factory: Callable[[str, dict], Envelope] | None = None,
) -> str:
    """Register *rsu_id*, allocating a unique address from the pool.

    When a transport and envelope factory are given, peers are notified of
    the newcomer with a status message.
    """
    address = topology.register(rsu_id)
    if transport is not None and envelope_factory is not None:
        envelope = envelope_factory("status", {"rsu_id": rsu_id, "address": address})
        broadcast(topology, envelope, transport)
    return address


@dataclass(frozen=True)
class PeerDelivery:
    peer: str
    delivered: bool
    latency_ms: float | None


@dataclass(frozen=True)
class DeliveryReport:
    origin: str
    results: tuple[PeerDelivery, ...]

    @property
    def delivered_count(self) -> int:
        return sum(1 for r in self.results if r.delivered)

    @property
    def dropped_count(self) -> int:
        return sum(1 for r in self.results if not r.delivered)


def broadcast(
    topology: Topology,
    envelope: Envelope,
    transport: "SimulatedTransport | SocketTransport",
) -> DeliveryReport:
    """Offer *envelope* to every registered peer of its origin."""
    if envelope.origin not in topology.nodes:
        raise UnregisteredOrigin(f"origin {envelope.origin!r} not registered")
    results = []
    for peer in topology.peers(envelope.origin):
        delivered, latency = transport.send(envelope.origin, peer, envelope)
        results.append(PeerDelivery(peer=peer, delivered=delivered, latency_ms=latency))
    return DeliveryReport(origin=envelope.origin, results=tuple(results))


class SimulatedTransport:
    """Virtual-time link layer with deterministic per-link samplers.

    Deliveries are queued as (arrival time, insertion order) events;
    ``run_until_idle`` drains them in order, advancing the shared virtual
    clock, which preserves per-(origin, peer) FIFO for fixed latencies.
    """

    def __init__(self, topology: Topology, clock: VirtualClock) -> None:
        self.topology = topology
        self.clock = clock
        self._links: dict[tuple[str, str], Link] = {}
        self._handlers: dict[str, Callable[[Envelope], None]] = {}
        self._events: list[tuple[float, int, str, Envelope]] = []
        self._counter = 0

    def attach(self, rsu_id: str, handler: Callable[[Envelope], None]) -> None:
        self._handlers[rsu_id] = handler

    def _link(self, origin: str, peer: str) -> Link:
        key = (origin, peer)
        if key not in self._links:
            config = self.topology.link_for(origin, peer)
            self._links[key] = Link(config, stream=f"{origin}->{peer}")
        return self._links[key]

    def send(self, origin: str, peer: str, envelope: Envelope) -> tuple[bool, float | None]:
        delivered, latency = self._link(origin, peer).deliver(envelope)
        if delivered:
            self._counter += 1
            heapq.heappush(
                self._events, (self.clock.now_ms() + latency, self._counter, peer, envelope)
            )
        return delivered, latency

    def run_until_idle(self) -> int:
        """Deliver all queued envelopes in arrival order; returns the count."""
        delivered = 0
        while self._events:
            arrival, _, peer, envelope = heapq.heappop(self._events)
            self.clock.advance_to(arrival)
            handler = self._handlers.get(peer)
            if handler is not None:
                handler(envelope)
            delivered += 1
        return delivered


class _EnvelopeTCPHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:  # one connection may carry many envelopes
        def read_exact(n: int) -> bytes:
            buf = b""
            while len(buf) < n:
                chunk = self.request.recv(n - len(buf))
                if not chunk:
                    break
                buf += chunk
            return buf

        while True:
            try:
                envelope = read_envelope(read_exact)
            except ValueError:
                self.server.on_malformed()  # type: ignore[attr-defined]
                return
            if envelope is None:
                return
            self.server.on_envelope(envelope)  # type: ignore[attr-defined]


class _EnvelopeServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, handler_fn, malformed_fn):
        super().__init__(addr, _EnvelopeTCPHandler)
        self.on_envelope = handler_fn
        self.on_malformed = malformed_fn


class SocketTransport:
    """Length-prefixed JSON envelopes over TCP; addresses are host:port."""

    def __init__(self, topology: Topology) -> None:
        self.topology = topology
        self._servers: dict[str, _EnvelopeServer] = {}
        self._threads: list[threading.Thread] = []

    @staticmethod
    def _split(address: str) -> tuple[str, int]:
        host, _, port = address.rpartition(":")
        return host, int(port)

    def listen(
        self,
        rsu_id: str,
        handler: Callable[[Envelope], None],
        on_malformed: Callable[[], None] | None = None,
    ) -> None:
        address = self.topology.address_of(rsu_id)
        server = _EnvelopeServer(self._split(address), handler, on_malformed or (lambda: None))
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        self._servers[rsu_id] = server
        self._threads.append(thread)

    def send(self, origin: str, peer: str, envelope: Envelope) -> tuple[bool, float | None]:
        address = self.topology.address_of(peer)
        try:
            with socket.create_connection(self._split(address), timeout=5.0) as conn:
                conn.sendall(encode_envelope(envelope))
            return True, None
        except OSError:
            return False, None

    def close(self) -> None:
        for server in self._servers.values():
            server.shutdown()
            server.server_close()
        self._servers.clear()
