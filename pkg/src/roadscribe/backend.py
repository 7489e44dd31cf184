"""Pluggable narration/reasoning backends and the response-time harness.

The inference contract is a single ``infer(request) -> response`` call.
Three implementations ship here: a deterministic ground-truth-backed mock
for desk-scale testing, a null backend for measuring pipeline overhead, and
an HTTP client for real model servers. A backend instance handles one
in-flight request at a time; the timing harness never overlaps calls within
a measurement row.
"""

from __future__ import annotations

import base64
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .clock import Clock, RealClock
from .prompting import STREAM_HEADERS, PromptConfig, build_prompt, render_prompt
from .segments import AnnotationItem, Segment, SegmentAnnotation
from .taxonomy import Taxonomy


class BackendError(Exception):
    """Base class for inference-boundary failures."""


class BackendUnavailable(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


@dataclass(frozen=True)
class BackendRequest:
    prompt_text: str
    frame_refs: tuple[str, ...] = ()
    request_id: str = "r0"
    # Lets the ground-truth mock find its annotation; not part of the wire format.
    segment_id: str | None = None

    def __post_init__(self) -> None:
        if not self.prompt_text:
            raise ValueError("prompt_text must be non-empty")


@dataclass(frozen=True)
class BackendResponse:
    narration_text: str
    reasoning_text: str
    backend_latency_ms: float
    request_id: str


@dataclass(frozen=True)
class MockConfig:
    """Knobs for the ground-truth mock.

    ``corruption_rate`` is the per-item probability of dropping an item or
    substituting its label with another label of the same category.
    ``unstructured_penalty`` is added to the corruption rate when the prompt
    lacks the three stream headers, modelling the accuracy gap between
    structured and raw prompts.
    """

    corruption_rate: float = 0.0
    synthetic_latency_ms: float = 0.0
    seed: int = 0
    unstructured_penalty: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must be in [0, 1]")
        if not 0.0 <= self.unstructured_penalty <= 1.0:
            raise ValueError("unstructured_penalty must be in [0, 1]")
        if self.synthetic_latency_ms < 0:
            raise ValueError("synthetic_latency_ms must be >= 0")


class Backend:
    """Inference contract: one serialized request at a time per instance."""

    name = "backend"

    def infer(self, request: BackendRequest) -> BackendResponse:
        raise NotImplementedError


def _render_item(item: AnnotationItem) -> str:
    return f"{item.count} {item.label}" if item.count is not None else item.label


def _has_stream_structure(prompt_text: str) -> bool:
    return all(header in prompt_text for header in STREAM_HEADERS.values())


def _corrupt_items(
    items: Sequence[AnnotationItem],
    p: float,
    rng: random.Random,
    taxonomy: Taxonomy,
) -> list[AnnotationItem]:
    kept: list[AnnotationItem] = []
    for item in items:
        if rng.random() >= p:
            kept.append(item)
            continue
        # Corrupted: coin-flip between dropping and substituting the label.
        drop = rng.random() < 0.5
        entry = taxonomy.entry_for(item.label)
        candidates = [
            lbl
            for lbl in taxonomy.labels(item.category)
            if entry is None or lbl != entry.label
        ]
        if drop or not candidates:
            continue
        kept.append(AnnotationItem(category=item.category, label=rng.choice(candidates), count=item.count))
    return kept


def mock_infer(
    request: BackendRequest,
    annotation: SegmentAnnotation,
    config: MockConfig,
    taxonomy: Taxonomy,
    clock: Clock | None = None,
) -> BackendResponse:
    """Fabricate narration/reasoning from ground truth, optionally corrupted.

    Narration renders annotation items as "<count> <label>" (or bare
    "<label>"), comma-joined; reasoning renders each causal statement as
    "<effects> because <causes>". Output is a pure function of the request,
    annotation, and config (the per-item RNG is seeded from the config seed
    and the request identity).
    """
    if annotation is None or annotation.empty:
        raise BackendError(f"request {request.request_id}: segment has no annotation")
    clock = clock or RealClock()
    start = clock.now_ms()

    p = config.corruption_rate
    if config.unstructured_penalty and not _has_stream_structure(request.prompt_text):
        p = min(1.0, p + config.unstructured_penalty)
    rng = random.Random(f"{config.seed}|{request.segment_id or request.request_id}")

    narration_items = _corrupt_items(annotation.items, p, rng, taxonomy)
    narration_text = ", ".join(_render_item(i) for i in narration_items)

    sentences: list[str] = []
    for statement in annotation.reasoning:
        effects = _corrupt_items(statement.effects, p, rng, taxonomy)
        causes = _corrupt_items(statement.causes, p, rng, taxonomy)
        if not effects or not causes:
            continue
        sentences.append(
            ", ".join(_render_item(i) for i in effects)
            + " because "
            + ", ".join(_render_item(i) for i in causes)
        )
    reasoning_text = ". ".join(sentences)

    clock.sleep_ms(config.synthetic_latency_ms)
    return BackendResponse(
        narration_text=narration_text,
        reasoning_text=reasoning_text,
        backend_latency_ms=clock.now_ms() - start,
        request_id=request.request_id,
    )


class MockBackend(Backend):
    """Ground-truth-backed test double.

    Segments must be registered so the mock can look up their annotation by
    the request's segment id.
    """

    name = "mock"

    def __init__(
        self,
        config: MockConfig,
        taxonomy: Taxonomy,
        segments: Sequence[Segment] = (),
        clock: Clock | None = None,
    ) -> None:
        self.config = config
        self.taxonomy = taxonomy
        self.clock = clock or RealClock()
        self._annotations: dict[str, SegmentAnnotation] = {}
        for segment in segments:
            self.register(segment)

    def register(self, segment: Segment) -> None:
        self._annotations[segment.id] = segment.annotation

    def infer(self, request: BackendRequest) -> BackendResponse:
        annotation = self._annotations.get(request.segment_id or "")
        if annotation is None:
            raise BackendError(
                f"request {request.request_id}: no registered annotation for "
                f"segment {request.segment_id!r}"
            )
        return mock_infer(request, annotation, self.config, self.taxonomy, self.clock)


class NullBackend(Backend):
    """Returns immediately with empty text; isolates pipeline overhead."""

    name = "null"

    def infer(self, request: BackendRequest) -> BackendResponse:
        return BackendResponse(
            narration_text="",
            reasoning_text="",
            backend_latency_ms=0.0,
            request_id=request.request_id,
        )


class RemoteBackend(Backend):
    """HTTP client for a model server speaking the /infer protocol.

    POSTs ``{request_id, prompt_text, frames[]}`` where each frame is
    ``{"ref": ...}`` or, with ``inline_b64``, ``{"b64": ...}``. Any
    non-200 status is reported as backend-unavailable.
    """

    name = "remote"

    def __init__(
        self,
        base_url: str,
        deadline_s: float = 10.0,
        inline_b64: bool = False,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.deadline_s = deadline_s
        self.inline_b64 = inline_b64
        self._session = session or requests.Session()
        self._clock = RealClock()

    def _frame_payload(self, refs: Sequence[str]) -> list[dict]:
        frames = []
        for ref in refs:
            if self.inline_b64:
                data = Path(ref).read_bytes()
                frames.append({"b64": base64.b64encode(data).decode("ascii")})
            else:
                frames.append({"ref": ref})
        return frames

    def infer(self, request: BackendRequest) -> BackendResponse:
        body = {
            "request_id": request.request_id,
            "prompt_text": request.prompt_text,
            "frames": self._frame_payload(request.frame_refs),
        }
        start = self._clock.now_ms()
        try:
            resp = self._session.post(
                f"{self.base_url}/infer", json=body, timeout=self.deadline_s
            )
        except requests.Timeout as exc:
            raise BackendTimeout(f"request {request.request_id}: deadline exceeded") from exc
        except requests.RequestException as exc:
            raise BackendUnavailable(f"request {request.request_id}: {exc}") from exc
        latency = self._clock.now_ms() - start

        if resp.status_code != 200:
            raise BackendUnavailable(
                f"request {request.request_id}: server returned status {resp.status_code}"
            )
        try:
            payload = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"request {request.request_id}: body is not JSON") from exc
        for key in ("request_id", "narration_text", "reasoning_text"):
            if key not in payload:
                raise MalformedResponse(f"request {request.request_id}: missing field {key!r}")
        if payload["request_id"] != request.request_id:
            raise MalformedResponse(
                f"request {request.request_id}: server echoed {payload['request_id']!r}"
            )
        return BackendResponse(
            narration_text=payload["narration_text"],
            reasoning_text=payload["reasoning_text"],
            backend_latency_ms=latency,
            request_id=request.request_id,
        )


@dataclass(frozen=True)
class TimingRow:
    batch_size: int
    total_ms: float
    per_frame_ms: float
    ok: bool = True
    error: str | None = None


def _chunk_segment(segment: Segment, start: int, size: int) -> Segment:
    frames = segment.frames[start : start + size]
    rebased = tuple(
        type(f)(index=i, timestamp_ms=f.timestamp_ms, image_ref=f.image_ref, observations=f.observations)
        for i, f in enumerate(frames)
    )
    return Segment(
        id=segment.id,
        frames=rebased,
        annotation=segment.annotation,
        source_clip=segment.source_clip,
    )


def measure_response(
    backend: Backend,
    segment: Segment,
    batch_sizes: Sequence[int],
    taxonomy: Taxonomy,
    prompt_config: PromptConfig = PromptConfig(),
    frames_per_call: int = 1,
    template_id: str = "default",
    clock: Clock | None = None,
) -> list[TimingRow]:
    """Time end-to-end submission of the first *b* frames for each batch size.

    Each batch is submitted as ceil(b / frames_per_call) sequential calls,
    building a fresh prompt per call; the row records total time and time
    per frame. A backend failure aborts the row and records it as failed.
    """
    if frames_per_call <= 0:
        raise ValueError("frames_per_call must be positive")
    for b in batch_sizes:
        if b <= 0 or b > len(segment.frames):
            raise ValueError(f"batch size {b} outside 1..{len(segment.frames)}")
    clock = clock or RealClock()

    rows: list[TimingRow] = []
    for b in batch_sizes:
        start = clock.now_ms()
        try:
            call = 0
            for chunk_start in range(0, b, frames_per_call):
                size = min(frames_per_call, b - chunk_start)
                chunk = _chunk_segment(segment, chunk_start, size)
                bundle = build_prompt(chunk, taxonomy, prompt_config)
                request = BackendRequest(
                    prompt_text=render_prompt(bundle, template_id),
                    frame_refs=bundle.frame_refs,
                    request_id=f"bench/{segment.id}/{b}/{call}",
                    segment_id=segment.id,
                )
                backend.infer(request)
                call += 1
        except BackendError as exc:
            rows.append(TimingRow(batch_size=b, total_ms=0.0, per_frame_ms=0.0, ok=False, error=str(exc)))
            continue
        total = clock.now_ms() - start
        rows.append(TimingRow(batch_size=b, total_ms=total, per_frame_ms=total / b))
    return rows


def render_timing_table(rows: Sequence[TimingRow]) -> str:
    """Human-readable timing table: one row per batch size."""
    lines = [f"{'frames':>8}  {'total_ms':>12}  {'per_frame_ms':>14}  status"]
    for row in rows:
        if row.ok:
            lines.append(
                f"{row.batch_size:>8}  {row.total_ms:>12.1f}  {row.per_frame_ms:>14.2f}  ok"
            )
        else:
            lines.append(f"{row.batch_size:>8}  {'-':>12}  {'-':>14}  failed: {row.error}")
    return "\n".join(lines) + "\n"


def timing_rows_to_dicts(rows: Sequence[TimingRow]) -> list[dict]:
    return [
        {
            "batch_size": r.batch_size,
            "total_ms": r.total_ms,
            "per_frame_ms": r.per_frame_ms,
            "ok": r.ok,
            "error": r.error,
        }
        for r in rows
    ]
