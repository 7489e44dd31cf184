"""The per-RSU state machine.

A node ingests its assigned segment parts in order, builds prompts (merging
any pending edge-user observations), calls its backend, detects hazards in
the generated text, and answers state queries. Peer messages are folded in
with exactly-once alert surfacing. Each node is a single logical event
loop; distinct nodes share no mutable state.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .backend import Backend, BackendError, BackendRequest, BackendResponse
from .clock import Clock, RealClock
from .evaluation import (
    NarrationScore,
    ReasoningScore,
    extract_causal_statements,
    score_narration,
    validate_reasoning,
)
from .network import Envelope, MSG_TYPES
from .prompting import PromptConfig, build_prompt, build_raw_prompt, render_prompt
from .segments import Segment
from .taxonomy import CATEGORIES, Taxonomy, find_matches

DEFAULT_HAZARD_SET = frozenset({"speeding", "accident", "sudden braking", "wrong way"})

_SENTENCE_RE = re.compile(r"[^.!?;\n]+")


@dataclass(frozen=True)
class Alert:
    alert_id: str
    origin: str
    hazard_label: str
    evidence: str
    timestamp_ms: float

    def to_dict(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "origin": self.origin,
            "hazard_label": self.hazard_label,
            "evidence": self.evidence,
            "timestamp_ms": self.timestamp_ms,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Alert":
        return cls(
            alert_id=raw["alert_id"],
            origin=raw["origin"],
            hazard_label=raw["hazard_label"],
            evidence=raw.get("evidence", ""),
            timestamp_ms=float(raw["timestamp_ms"]),
        )


@dataclass(frozen=True)
class Observation:
    observation_id: str
    reporter: str
    category: str
    text: str
    received_at_ms: float


@dataclass(frozen=True)
class ReceivedAlert:
    alert: Alert
    received_at_ms: float


@dataclass
class OutputRecord:
    segment_id: str
    prompt_text: str
    narration_text: str
    reasoning_text: str
    backend_latency_ms: float
    ok: bool
    error: str | None = None
    narration_score: NarrationScore | None = None
    reasoning_score: ReasoningScore | None = None
    finished_at_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "prompt_text": self.prompt_text,
            "narration_text": self.narration_text,
            "reasoning_text": self.reasoning_text,
            "backend_latency_ms": self.backend_latency_ms,
            "ok": self.ok,
            "error": self.error,
            "narration_value": self.narration_score.value if self.narration_score else None,
            "reasoning_value": self.reasoning_score.value if self.reasoning_score else None,
            "finished_at_ms": self.finished_at_ms,
        }


@dataclass
class NodeState:
    rsu_id: str
    outputs: list[OutputRecord] = field(default_factory=list)
    alerts_seen: set[str] = field(default_factory=set)
    alerts: list[ReceivedAlert] = field(default_factory=list)
    pending_observations: deque[Observation] = field(default_factory=deque)
    peers: dict[str, str] = field(default_factory=dict)
    dropped_messages: int = 0


@dataclass(frozen=True)
class NodeConfig:
    hazard_set: frozenset[str] = DEFAULT_HAZARD_SET
    strategy: str = "on"  # "on" | "off"
    prompt: PromptConfig = PromptConfig()
    template_id: str = "default"
    score_outputs: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in ("on", "off"):
            raise ValueError(f"strategy must be 'on' or 'off', got {self.strategy!r}")


def detect_hazard(
    texts: Iterable[str], hazard_set: Iterable[str], taxonomy: Taxonomy
) -> set[str]:
    """Canonical hazard labels whose phrase matches in any of *texts*."""
    hazard_labels = set()
    for phrase in hazard_set:
        entry = taxonomy.entry_for(phrase)
        if entry is None:
            raise ValueError(f"hazard phrase {phrase!r} is not in the taxonomy")
        hazard_labels.add(entry.label)
    found: set[str] = set()
    for text in texts:
        for match in find_matches(text, taxonomy):
            if match.entry.label in hazard_labels:
                found.add(match.entry.label)
    return found


def _evidence_excerpt(texts: Sequence[str], label: str, taxonomy: Taxonomy) -> str:
    """The first sentence in which the hazard keyword occurs, clipped."""
    entry = taxonomy.entry_for(label)
    for text in texts:
        for sentence in _SENTENCE_RE.findall(text):
            for match in find_matches(sentence, taxonomy):
                if entry is not None and match.entry == entry:
                    return sentence.strip()[:160]
    return (texts[0] if texts else "")[:160]


class RsuNode:
    """One roadside unit: prompt building, inference, hazards, queries."""

    def __init__(
        self,
        rsu_id: str,
        taxonomy: Taxonomy,
        backend: Backend,
        config: NodeConfig = NodeConfig(),
        clock: Clock | None = None,
    ) -> None:
        self.rsu_id = rsu_id
        self.taxonomy = taxonomy
        self.backend = backend
        self.config = config
        self.clock = clock or RealClock()
        self.state = NodeState(rsu_id=rsu_id)
        self._request_counter = 0
        self._alert_counter = 0
        self._observation_counter = 0
        self._seq = 0

    # -- messaging ----------------------------------------------------

    def make_envelope(self, msg_type: str, payload: dict) -> Envelope:
        self._seq += 1
        return Envelope(
            msg_type=msg_type,
            origin=self.rsu_id,
            seq=self._seq,
            payload=payload,
            sent_at_ms=self.clock.now_ms(),
        )

    def handle_message(self, message: Envelope | Mapping) -> None:
        """Fold one peer message into node state; malformed input is counted
        and dropped without touching anything else."""
        if not isinstance(message, Envelope):
            try:
                message = Envelope.from_dict(message)
            except (ValueError, TypeError):
                self.state.dropped_messages += 1
                return
        if message.msg_type not in MSG_TYPES:
            self.state.dropped_messages += 1
            return
        try:
            if message.msg_type == "alert":
                alert = Alert.from_dict(message.payload)
                if alert.alert_id in self.state.alerts_seen:
                    return
                self.state.alerts_seen.add(alert.alert_id)
                self.state.alerts.append(
                    ReceivedAlert(alert=alert, received_at_ms=self.clock.now_ms())
                )
            elif message.msg_type == "observation-relay":
                payload = message.payload
                self.accept_observation(
                    category=payload["category"],
                    text=payload["text"],
                    reporter=payload.get("reporter", message.origin),
                )
            else:  # status
                payload = message.payload
                self.state.peers[payload["rsu_id"]] = payload.get("address", "")
        except (KeyError, TypeError, ValueError):
            self.state.dropped_messages += 1

    # -- observations ---------------------------------------------------

    def accept_observation(self, category: str, text: str, reporter: str = "edge-user") -> Observation:
        """Queue an edge-user observation for the next prompt."""
        if not text or not text.strip():
            raise ValueError("observation text must be non-empty")
        if category not in CATEGORIES:
            raise ValueError(f"unknown observation category {category!r}")
        self._observation_counter += 1
        observation = Observation(
            observation_id=f"{self.rsu_id}-o{self._observation_counter}",
            reporter=reporter,
            category=category,
            text=text.strip(),
            received_at_ms=self.clock.now_ms(),
        )
        self.state.pending_observations.append(observation)
        return observation

    def _drain_observations(self) -> dict[str, list[str]]:
        extras: dict[str, list[str]] = {}
        while self.state.pending_observations:
            obs = self.state.pending_observations.popleft()
            extras.setdefault(obs.category, []).append(obs.text)
        return extras

    # -- segment processing ----------------------------------------------

    def prepare_request(self, segment: Segment) -> BackendRequest:
        """Merge pending observations, build and render the prompt."""
        extras = self._drain_observations()
        self._request_counter += 1
        request_id = f"{self.rsu_id}/r{self._request_counter}"
        if self.config.strategy == "on":
            bundle = build_prompt(segment, self.taxonomy, self.config.prompt, extras)
            prompt_text = render_prompt(bundle, self.config.template_id)
            frame_refs = bundle.frame_refs
        else:
            prompt_text = build_raw_prompt(segment, extras)
            frame_refs = tuple(dict.fromkeys(f.image_ref for f in segment.frames))
        return BackendRequest(
            prompt_text=prompt_text,
            frame_refs=frame_refs,
            request_id=request_id,
            segment_id=segment.id,
        )

    def complete_segment(
        self,
        segment: Segment,
        request: BackendRequest,
        response: BackendResponse | None,
        error: str | None = None,
    ) -> list[Alert]:
        """Record the backend outcome, score it, and raise hazard alerts."""
        if response is None:
            self.state.outputs.append(
                OutputRecord(
                    segment_id=segment.id,
                    prompt_text=request.prompt_text,
                    narration_text="",
                    reasoning_text="",
                    backend_latency_ms=0.0,
                    ok=False,
                    error=error or "backend failure",
                    finished_at_ms=self.clock.now_ms(),
                )
            )
            return []

        record = OutputRecord(
            segment_id=segment.id,
            prompt_text=request.prompt_text,
            narration_text=response.narration_text,
            reasoning_text=response.reasoning_text,
            backend_latency_ms=response.backend_latency_ms,
            ok=True,
            finished_at_ms=self.clock.now_ms(),
        )
        if self.config.score_outputs and segment.annotation.items:
            record.narration_score = score_narration(
                response.narration_text, segment.annotation.items, self.taxonomy
            )
            if segment.annotation.reasoning:
                statements = extract_causal_statements(response.reasoning_text, self.taxonomy)
                record.reasoning_score = validate_reasoning(
                    statements, segment.annotation.reasoning, self.taxonomy
                )
        self.state.outputs.append(record)

        texts = [response.narration_text, response.reasoning_text]
        labels = detect_hazard(texts, self.config.hazard_set, self.taxonomy)
        alerts: list[Alert] = []
        for label in sorted(labels):  # one alert per label per segment
            self._alert_counter += 1
            alert = Alert(
                alert_id=f"{self.rsu_id}-a{self._alert_counter}",
                origin=self.rsu_id,
                hazard_label=label,
                evidence=_evidence_excerpt(texts, label, self.taxonomy),
                timestamp_ms=self.clock.now_ms(),
            )
            self.state.alerts_seen.add(alert.alert_id)
            self.state.alerts.append(ReceivedAlert(alert=alert, received_at_ms=alert.timestamp_ms))
            alerts.append(alert)
        return alerts

    def process_segment(self, segment: Segment) -> list[Alert]:
        """Full pipeline for one assigned segment part.

        Backend failures are recorded and swallowed: the node stays live for
        subsequent segments and raises no alert for the failed one.
        """
        if not segment.frames:
            raise ValueError("segment has no frames")
        request = self.prepare_request(segment)
        try:
            response = self.backend.infer(request)
        except BackendError as exc:
            return self.complete_segment(segment, request, None, error=str(exc))
        return self.complete_segment(segment, request, response)

    # -- queries -----------------------------------------------------------

    def query_state(self, kind: str) -> dict:
        """Read-only snapshot document for the access window."""
        if kind == "alerts":
            ordered = sorted(
                self.state.alerts,
                key=lambda r: (r.alert.timestamp_ms, r.received_at_ms),
                reverse=True,
            )
            return {
                "rsu_id": self.rsu_id,
                "kind": "alerts",
                "alerts": [
                    {**r.alert.to_dict(), "received_at_ms": r.received_at_ms} for r in ordered
                ],
            }
        if kind == "latest":
            latest = self.state.outputs[-1].to_dict() if self.state.outputs else None
            return {
                "rsu_id": self.rsu_id,
                "kind": "latest",
                "output": latest,
                "alert_count": len(self.state.alerts),
                "pending_observations": len(self.state.pending_observations),
                "dropped_messages": self.state.dropped_messages,
            }
        if kind == "outputs":
            return {
                "rsu_id": self.rsu_id,
                "kind": "outputs",
                "outputs": [record.to_dict() for record in self.state.outputs],
            }
        raise ValueError(f"unknown query kind {kind!r}")
