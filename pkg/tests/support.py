"""Shared test helpers: segment factories and independent scoring oracles."""

from __future__ import annotations

import re

from roadscribe.segments import (
    AnnotationItem,
    CausalStatement,
    FrameObservation,
    FrameRecord,
    Segment,
    SegmentAnnotation,
)
from roadscribe.taxonomy import Taxonomy, find_matches


def make_segment(
    seg_id: str = "seg",
    n_frames: int = 30,
    observations: dict[int, list[tuple[str, str]]] | None = None,
    items: list[AnnotationItem] | None = None,
    reasoning: list[CausalStatement] | None = None,
) -> Segment:
    observations = observations or {}
    frames = tuple(
        FrameRecord(
            index=i,
            timestamp_ms=i * 100.0,
            image_ref=f"frames/{seg_id}/{i:03d}.jpg",
            observations=tuple(FrameObservation(c, t) for c, t in observations.get(i, [])),
        )
        for i in range(n_frames)
    )
    return Segment(
        id=seg_id,
        frames=frames,
        annotation=SegmentAnnotation(items=tuple(items or ()), reasoning=tuple(reasoning or ())),
        source_clip=f"clips/{seg_id}.mp4",
    )


def brute_force_narration_matched(
    output_text: str, items: list[AnnotationItem], taxonomy: Taxonomy
) -> int:
    """Exhaustive pairing oracle for narration scoring.

    Enumerates every injective assignment of annotation items to output
    keyword occurrences and returns the best matched count. Compatibility is
    re-derived from the stated rule: same resolved entry, and for counted
    items the integer token immediately before the phrase must equal the
    count.
    """
    occurrences = find_matches(output_text, taxonomy)

    def compatible(item: AnnotationItem, occ) -> bool:
        entry = taxonomy.entry_for(item.label)
        if entry is None or entry.category != item.category or occ.entry != entry:
            return False
        if item.count is not None and occ.preceding_int != item.count:
            return False
        return True

    def best(i: int, used: frozenset[int]) -> int:
        if i == len(items):
            return 0
        score = best(i + 1, used)  # leave item i unmatched
        for j, occ in enumerate(occurrences):
            if j not in used and compatible(items[i], occ):
                score = max(score, 1 + best(i + 1, used | {j}))
        return score

    return best(0, frozenset())


_STREAM_MARKER = re.compile(r"(env|agent|motion)@(\d+)")


def marker_indices(stream_text: str, tag: str) -> set[int]:
    """Frame indices recovered from 'tag@index' markers in a stream."""
    return {int(m.group(2)) for m in _STREAM_MARKER.finditer(stream_text) if m.group(1) == tag}
