"""Live node serving: per-RSU HTTP endpoints over a real socket transport.

Each node gets its own HTTP server (GET /state, POST /observe,
POST /inject) plus a TCP listener for peer envelopes. All state mutations
are funneled through a single worker thread per node, so the node keeps
its one-logical-event-loop semantics; queries take a short lock to
snapshot and never wait on a backend call.
"""

from __future__ import annotations

import json
import threading
import queue
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence
from urllib.parse import parse_qs, urlparse

from .backend import BackendError, MockBackend
from .network import Envelope, SocketTransport, Topology, broadcast, register_node
from .node import RsuNode
from .segments import ManifestError, Segment, parse_segment_record


class NodeRuntime:
    """Wraps one RsuNode with a worker queue and thread-safe queries."""

    def __init__(self, node: RsuNode, topology: Topology, transport: SocketTransport) -> None:
        self.node = node
        self.topology = topology
        self.transport = transport
        self._lock = threading.Lock()
        self._tasks: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._stopped = threading.Event()

    def start(self) -> None:
        self.transport.listen(self.node.rsu_id, self.on_envelope, self.on_malformed)
        self._worker.start()

    def stop(self) -> None:
        self._stopped.set()
        self._tasks.put(("stop", None))

    # -- entry points (any thread) ---------------------------------------

    def on_envelope(self, envelope: Envelope) -> None:
        self._tasks.put(("message", envelope))

    def on_malformed(self) -> None:
        with self._lock:
            self.node.state.dropped_messages += 1

    def observe(self, category: str, text: str, reporter: str) -> dict:
        with self._lock:
            observation = self.node.accept_observation(category, text, reporter)
        return {
            "observation_id": observation.observation_id,
            "received_at_ms": observation.received_at_ms,
        }

    def inject(self, segment: Segment) -> None:
        self._tasks.put(("segment", segment))

    def query(self, kind: str) -> dict:
        with self._lock:
            return self.node.query_state(kind)

    # -- worker loop --------------------------------------------------------

    def _run(self) -> None:
        while not self._stopped.is_set():
            kind, item = self._tasks.get()
            if kind == "stop":
                return
            if kind == "message":
                with self._lock:
                    self.node.handle_message(item)
                continue
            # Segment processing: the backend call runs outside the lock so
            # queries stay responsive during slow inference.
            segment: Segment = item
            if isinstance(self.node.backend, MockBackend):
                self.node.backend.register(segment)
            with self._lock:
                request = self.node.prepare_request(segment)
            try:
                response = self.node.backend.infer(request)
                error = None
            except BackendError as exc:
                response, error = None, str(exc)
            with self._lock:
                alerts = self.node.complete_segment(segment, request, response, error)
            for alert in alerts:
                with self._lock:
                    envelope = self.node.make_envelope("alert", alert.to_dict())
                broadcast(self.topology, envelope, self.transport)


def _json_response(handler: BaseHTTPRequestHandler, status: int, payload: dict) -> None:
    body = json.dumps(payload).encode("utf-8")
    handler.send_response(status)
    handler.send_header("Content-Type", "application/json")
    handler.send_header("Content-Length", str(len(body)))
    handler.send_header("Access-Control-Allow-Origin", "*")
    handler.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
    handler.send_header("Access-Control-Allow-Headers", "Content-Type")
    handler.end_headers()
    handler.wfile.write(body)


class _NodeHTTPHandler(BaseHTTPRequestHandler):
    runtime: NodeRuntime  # set on the subclass

    def log_message(self, *args) -> None:  # keep servers quiet
        pass

    def do_OPTIONS(self) -> None:
        _json_response(self, 204, {})

    def do_GET(self) -> None:
        url = urlparse(self.path)
        if url.path != "/state":
            _json_response(self, 404, {"error": f"no such path {url.path!r}"})
            return
        kind = parse_qs(url.query).get("kind", ["latest"])[0]
        try:
            _json_response(self, 200, self.runtime.query(kind))
        except ValueError as exc:
            _json_response(self, 400, {"error": str(exc)})

    def do_POST(self) -> None:
        url = urlparse(self.path)
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            _json_response(self, 400, {"error": "body is not valid JSON"})
            return

        if url.path == "/observe":
            try:
                ack = self.runtime.observe(
                    category=payload.get("category", ""),
                    text=payload.get("text", ""),
                    reporter=payload.get("reporter", "edge-user"),
                )
            except ValueError as exc:
                _json_response(self, 400, {"error": str(exc)})
                return
            _json_response(self, 200, ack)
        elif url.path == "/inject":
            try:
                segment = parse_segment_record(payload)
            except ManifestError as exc:
                _json_response(self, 400, {"error": str(exc)})
                return
            self.runtime.inject(segment)
            _json_response(self, 200, {"status": "queued", "segment_id": segment.id})
        else:
            _json_response(self, 404, {"error": f"no such path {url.path!r}"})


@dataclass
class ServedNode:
    runtime: NodeRuntime
    http_server: ThreadingHTTPServer
    http_address: str


class ServeCluster:
    """A set of live RSU runtimes with HTTP front doors."""

    def __init__(self, nodes: Sequence[ServedNode], transport: SocketTransport) -> None:
        self.nodes = list(nodes)
        self.transport = transport

    def http_addresses(self) -> list[str]:
        return [n.http_address for n in self.nodes]

    def stop(self) -> None:
        for served in self.nodes:
            served.http_server.shutdown()
            served.http_server.server_close()
            served.runtime.stop()
        self.transport.close()


def serve_nodes(
    nodes: Sequence[RsuNode],
    host: str = "127.0.0.1",
    http_base_port: int = 8700,
    sock_base_port: int = 8800,
) -> ServeCluster:
    """Register *nodes*, start their TCP listeners and HTTP endpoints.

    Raises:
        OSError: when a port is already in use.
    """
    pool = [f"{host}:{sock_base_port + i}" for i in range(len(nodes))]
    topology = Topology(address_pool=pool)
    transport = SocketTransport(topology)

    served: list[ServedNode] = []
    runtimes: list[NodeRuntime] = []
    for node in nodes:
        register_node(topology, node.rsu_id)
        runtimes.append(NodeRuntime(node, topology, transport))
    for i, runtime in enumerate(runtimes):
        runtime.start()
        handler = type(
            f"NodeHTTPHandler_{runtime.node.rsu_id}", (_NodeHTTPHandler,), {"runtime": runtime}
        )
        http_server = ThreadingHTTPServer((host, http_base_port + i), handler)
        threading.Thread(target=http_server.serve_forever, daemon=True).start()
        served.append(
            ServedNode(
                runtime=runtime,
                http_server=http_server,
                http_address=f"http://{host}:{http_base_port + i}",
            )
        )
    # Announce everyone now that all listeners are up.
    for runtime in runtimes:
        envelope = runtime.node.make_envelope(
            "status",
            {
                "rsu_id": runtime.node.rsu_id,
                "address": topology.address_of(runtime.node.rsu_id),
            },
        )
        broadcast(topology, envelope, transport)
    return ServeCluster(served, transport)
