"""Segment manifests: frame records, ground-truth annotations, splitting.

Manifests are line-delimited JSON, one segment per line. Frames arrive
pre-extracted (no video decoding here); image references are opaque and
never dereferenced by the loader.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .taxonomy import CATEGORIES, Taxonomy


class ManifestError(ValueError):
    """A manifest record is malformed or violates a segment invariant."""


@dataclass(frozen=True)
class FrameObservation:
    """A pre-extracted free-text snippet tagged with its stream category."""

    category: str
    text: str


@dataclass(frozen=True)
class FrameRecord:
    index: int
    timestamp_ms: float
    image_ref: str
    observations: tuple[FrameObservation, ...] = ()


@dataclass(frozen=True)
class AnnotationItem:
    """One ground-truth narration item; count is present only for agent items."""

    category: str
    label: str
    count: int | None = None


@dataclass(frozen=True)
class CausalStatement:
    causes: tuple[AnnotationItem, ...]
    effects: tuple[AnnotationItem, ...]


@dataclass(frozen=True)
class SegmentAnnotation:
    items: tuple[AnnotationItem, ...] = ()
    reasoning: tuple[CausalStatement, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.items and not self.reasoning


@dataclass(frozen=True)
class Segment:
    """An ordered run of frames plus whole-clip ground truth."""

    id: str
    frames: tuple[FrameRecord, ...]
    annotation: SegmentAnnotation = field(default_factory=SegmentAnnotation)
    source_clip: str = ""

    @property
    def is_annotated(self) -> bool:
        return bool(self.annotation.items)


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise ManifestError(f"{where}: missing field {key!r}")
    return record[key]


def _parse_item(raw: dict, where: str) -> AnnotationItem:
    category = _require(raw, "category", where)
    if category not in CATEGORIES:
        raise ManifestError(f"{where}: unknown annotation category {category!r}")
    label = _require(raw, "label", where)
    if not isinstance(label, str) or not label.strip():
        raise ManifestError(f"{where}: empty annotation label")
    count = raw.get("count")
    if count is not None and (not isinstance(count, int) or count <= 0):
        raise ManifestError(f"{where}: count must be a positive integer, got {count!r}")
    return AnnotationItem(category=category, label=label, count=count)


def _parse_statement(raw: dict, where: str) -> CausalStatement:
    causes = tuple(_parse_item(i, where) for i in _require(raw, "causes", where))
    effects = tuple(_parse_item(i, where) for i in _require(raw, "effects", where))
    if not causes or not effects:
        raise ManifestError(f"{where}: causal statement needs non-empty causes and effects")
    return CausalStatement(causes=causes, effects=effects)


def parse_segment_record(record: dict, where: str = "segment") -> Segment:
    """Build one validated Segment from a decoded manifest record."""
    seg_id = _require(record, "id", where)
    where = f"{where} {seg_id!r}"
    source_clip = record.get("source_clip", "")
    raw_frames = _require(record, "frames", where)
    if not raw_frames:
        raise ManifestError(f"{where}: segment has no frames")

    frames: list[FrameRecord] = []
    prev_ts = None
    for pos, raw in enumerate(raw_frames):
        index = _require(raw, "index", f"{where} frame {pos}")
        if index != pos:
            raise ManifestError(f"{where}: non-contiguous at index {pos} (got frame index {index})")
        ts = _require(raw, "timestamp_ms", f"{where} frame {pos}")
        if prev_ts is not None and ts < prev_ts:
            raise ManifestError(f"{where}: timestamp decreases at index {pos}")
        prev_ts = ts
        observations = []
        for obs in raw.get("observations", []):
            category = _require(obs, "category", f"{where} frame {pos}")
            if category not in CATEGORIES:
                raise ManifestError(
                    f"{where} frame {pos}: unknown observation category {category!r}"
                )
            observations.append(FrameObservation(category=category, text=_require(obs, "text", f"{where} frame {pos}")))
        frames.append(
            FrameRecord(
                index=index,
                timestamp_ms=float(ts),
                image_ref=raw.get("image_ref", ""),
                observations=tuple(observations),
            )
        )

    raw_ann = record.get("annotation") or {}
    annotation = SegmentAnnotation(
        items=tuple(_parse_item(i, where) for i in raw_ann.get("items", [])),
        reasoning=tuple(_parse_statement(s, where) for s in raw_ann.get("reasoning", [])),
    )
    return Segment(id=seg_id, frames=tuple(frames), annotation=annotation, source_clip=source_clip)


def segment_to_record(segment: Segment) -> dict:
    """Serialize a Segment back to the manifest record schema."""
    record: dict = {
        "id": segment.id,
        "source_clip": segment.source_clip,
        "frames": [
            {
                "index": f.index,
                "timestamp_ms": f.timestamp_ms,
                "image_ref": f.image_ref,
                "observations": [{"category": o.category, "text": o.text} for o in f.observations],
            }
            for f in segment.frames
        ],
        "annotation": {
            "items": [
                {"category": i.category, "label": i.label, **({"count": i.count} if i.count is not None else {})}
                for i in segment.annotation.items
            ],
            "reasoning": [
                {
                    "causes": [
                        {"category": i.category, "label": i.label, **({"count": i.count} if i.count is not None else {})}
                        for i in s.causes
                    ],
                    "effects": [
                        {"category": i.category, "label": i.label, **({"count": i.count} if i.count is not None else {})}
                        for i in s.effects
                    ],
                }
                for s in segment.annotation.reasoning
            ],
        },
    }
    return record


def load_manifest(source: str | Path | IO[str] | Iterable[str]) -> list[Segment]:
    """Read a line-delimited manifest, validating every record.

    Raises:
        ManifestError: naming the record number and field on any violation.
    """
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    elif hasattr(source, "read"):
        lines = source.read().splitlines()  # type: ignore[union-attr]
    else:
        lines = list(source)

    segments: list[Segment] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"record {lineno}: not valid JSON ({exc})") from exc
        segment = parse_segment_record(record, where=f"record {lineno}")
        if segment.id in seen_ids:
            raise ManifestError(f"record {lineno}: duplicate segment id {segment.id!r}")
        seen_ids.add(segment.id)
        segments.append(segment)
    return segments


def validate_annotation(segment: Segment, taxonomy: Taxonomy) -> None:
    """Check that every annotation label resolves to a same-category entry."""
    def check(item: AnnotationItem, where: str) -> None:
        entry = taxonomy.entry_for(item.label)
        if entry is None:
            raise ManifestError(f"{where}: label {item.label!r} is not in the taxonomy")
        if entry.category != item.category:
            raise ManifestError(
                f"{where}: label {item.label!r} belongs to category {entry.category!r}, "
                f"annotated as {item.category!r}"
            )

    where = f"segment {segment.id!r}"
    for item in segment.annotation.items:
        check(item, where)
    for statement in segment.annotation.reasoning:
        for item in statement.causes + statement.effects:
            check(item, where)


def split_segment(segment: Segment, n: int) -> list[Segment]:
    """Split a segment into *n* contiguous, ordered, non-overlapping parts.

    Part sizes differ by at most one, with earlier parts taking the
    remainder. Frame indices are re-based to 0 inside each part and the
    whole-clip annotation is attached to every part unchanged.
    """
    if n <= 0:
        raise ValueError("n must be a positive integer")
    total = len(segment.frames)
    if n > total:
        raise ValueError(f"cannot split {total} frames into {n} parts")

    base, rem = divmod(total, n)
    parts: list[Segment] = []
    cursor = 0
    for part_index in range(n):
        size = base + (1 if part_index < rem else 0)
        chunk = segment.frames[cursor : cursor + size]
        cursor += size
        frames = tuple(
            FrameRecord(
                index=i,
                timestamp_ms=f.timestamp_ms,
                image_ref=f.image_ref,
                observations=f.observations,
            )
            for i, f in enumerate(chunk)
        )
        parts.append(
            Segment(
                id=f"{segment.id}#part{part_index}",
                frames=frames,
                annotation=segment.annotation,
                source_clip=segment.source_clip,
            )
        )
    return parts


def parse_keyframe_policy(policy: str) -> tuple[str, int]:
    """Parse a keyframe policy string: ``first`` or ``stride(K)``."""
    text = policy.strip().lower()
    if text == "first":
        return ("first", 0)
    if text.startswith("stride(") and text.endswith(")"):
        try:
            k = int(text[len("stride(") : -1])
        except ValueError as exc:
            raise ValueError(f"bad stride value in policy {policy!r}") from exc
        if k == 0:
            raise ValueError("stride must be positive")
        return ("stride", k)
    raise ValueError(f"unknown keyframe policy {policy!r}")


def select_keyframes(segment: Segment, policy: str = "stride(15)") -> list[int]:
    """Pick keyframe indices for *segment* under the named policy.

    ``stride(k)`` yields 0, k, 2k, ...; ``first`` yields [0]. The result is
    non-empty, strictly increasing, and within bounds.
    """
    if not segment.frames:
        raise ValueError("segment has no frames")
    kind, k = parse_keyframe_policy(policy)
    if kind == "first":
        return [0]
    return list(range(0, len(segment.frames), k))
