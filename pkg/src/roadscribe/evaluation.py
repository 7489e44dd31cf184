"""Scoring of narration and reasoning against ground-truth annotations.

Narration is scored by keyword overlap: an annotation item counts as
matched when the output contains the same keyword (and, for counted items,
the same integer immediately before the phrase). Reasoning is scored by the
same keyword overlap, gated on causal-structure validity: statements whose
cause-effect direction is flawed zero the whole score. Misses are
penalized; spurious keywords are surfaced for diagnostics but never
subtract.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .segments import AnnotationItem, CausalStatement
from .taxonomy import KeywordEntry, Match, Taxonomy, find_matches, match_keywords


@dataclass(frozen=True)
class NarrationScore:
    matched: int
    total: int
    value: float
    missed: tuple[AnnotationItem, ...]
    spurious: tuple[KeywordEntry, ...]


@dataclass(frozen=True)
class ReasoningScore:
    structurally_valid: bool
    keyword_value: float
    value: float
    violations: tuple[CausalStatement, ...]


def _resolve(item: AnnotationItem, taxonomy: Taxonomy) -> KeywordEntry | None:
    entry = taxonomy.entry_for(item.label)
    if entry is not None and entry.category == item.category:
        return entry
    return None


def _compatible(item: AnnotationItem, entry: KeywordEntry | None, occurrence: Match) -> bool:
    if entry is None or occurrence.entry != entry:
        return False
    if item.count is not None and occurrence.preceding_int != item.count:
        return False
    return True


def _max_matching(adjacency: list[list[int]], n_right: int) -> tuple[int, set[int]]:
    """Maximum bipartite matching via Kuhn's augmenting paths.

    Returns the matching size and the set of matched left vertices.
    """
    match_right = [-1] * n_right

    def try_augment(left: int, seen: list[bool]) -> bool:
        for right in adjacency[left]:
            if seen[right]:
                continue
            seen[right] = True
            if match_right[right] == -1 or try_augment(match_right[right], seen):
                match_right[right] = left
                return True
        return False

    for left in range(len(adjacency)):
        try_augment(left, [False] * n_right)
    matched_left = {left for left in match_right if left != -1}
    return len(matched_left), matched_left


def score_narration(
    output_text: str,
    annotation: Sequence[AnnotationItem],
    taxonomy: Taxonomy,
) -> NarrationScore:
    """Score a narration output against the annotation item list.

    Each output keyword occurrence can satisfy at most one annotation item;
    the matched count is the maximum such pairing. Value is matched/total.

    Raises:
        ValueError: if the annotation is empty ("nothing to score").
    """
    if not annotation:
        raise ValueError("nothing to score")

    occurrences = find_matches(output_text, taxonomy)
    resolved = [_resolve(item, taxonomy) for item in annotation]
    adjacency = [
        [j for j, occ in enumerate(occurrences) if _compatible(item, entry, occ)]
        for item, entry in zip(annotation, resolved)
    ]
    matched, matched_left = _max_matching(adjacency, len(occurrences))
    missed = [item for i, item in enumerate(annotation) if i not in matched_left]

    annotated_entries = {entry for entry in resolved if entry is not None}
    spurious: list[KeywordEntry] = []
    for occ in occurrences:
        if occ.entry not in annotated_entries and occ.entry not in spurious:
            spurious.append(occ.entry)

    return NarrationScore(
        matched=matched,
        total=len(annotation),
        value=matched / len(annotation),
        missed=tuple(missed),
        spurious=tuple(spurious),
    )


_CONNECTIVE_RE = re.compile(
    r"\b(as a result of|caused by|because of|because|due to)\b", re.IGNORECASE
)
_SENTENCE_SPLIT_RE = re.compile(r"[.!?;\n]+")


def extract_causal_statements(reasoning_text: str, taxonomy: Taxonomy) -> list[CausalStatement]:
    """Pull cause-effect statements out of free reasoning text.

    Sentences are split on terminal punctuation; within each sentence the
    first causal connective divides it into an effect side (left) and a
    cause side (right). Sentences with no connective, or with no taxonomy
    keyword on one side, are skipped.
    """
    statements: list[CausalStatement] = []
    for sentence in _SENTENCE_SPLIT_RE.split(reasoning_text):
        hit = _CONNECTIVE_RE.search(sentence)
        if hit is None:
            continue
        effect_side = sentence[: hit.start()]
        cause_side = sentence[hit.end() :]
        effects = tuple(
            AnnotationItem(category=e.category, label=e.label)
            for e, _count in match_keywords(effect_side, taxonomy)
        )
        causes = tuple(
            AnnotationItem(category=e.category, label=e.label)
            for e, _count in match_keywords(cause_side, taxonomy)
        )
        if not effects or not causes:
            continue
        statements.append(CausalStatement(causes=causes, effects=effects))
    return statements


def _statement_flawed(statement: CausalStatement) -> bool:
    # Valid direction is environment/agent -> motion: an environment effect
    # is always flawed; a motion cause is flawed unless some effect is motion.
    if any(e.category == "environment" for e in statement.effects):
        return True
    if any(c.category == "motion" for c in statement.causes) and not any(
        e.category == "motion" for e in statement.effects
    ):
        return True
    return False


def _statement_entries(
    statements: Iterable[CausalStatement], taxonomy: Taxonomy
) -> set[KeywordEntry]:
    entries: set[KeywordEntry] = set()
    for statement in statements:
        for item in statement.causes + statement.effects:
            entry = _resolve(item, taxonomy)
            if entry is not None:
                entries.add(entry)
    return entries


def validate_reasoning(
    statements: Sequence[CausalStatement],
    annotation_reasoning: Sequence[CausalStatement],
    taxonomy: Taxonomy,
) -> ReasoningScore:
    """Gate keyword overlap on structural validity.

    Any flawed statement makes the whole output structurally invalid and
    forces the score to zero regardless of keyword overlap. Otherwise the
    score is the fraction of annotated cause/effect keywords present in the
    extracted statements.
    """
    if not annotation_reasoning:
        raise ValueError("nothing to score: empty annotation reasoning")

    violations = tuple(s for s in statements if _statement_flawed(s))
    annotated = _statement_entries(annotation_reasoning, taxonomy)
    extracted = _statement_entries(statements, taxonomy)
    keyword_value = len(annotated & extracted) / len(annotated) if annotated else 0.0
    structurally_valid = not violations
    return ReasoningScore(
        structurally_valid=structurally_valid,
        keyword_value=keyword_value,
        value=keyword_value if structurally_valid else 0.0,
        violations=violations,
    )


@dataclass(frozen=True)
class SegmentScore:
    """Per-segment evaluation result carrying its grouping keys."""

    segment_id: str
    rsu_id: str
    backend: str
    strategy: str  # "on" | "off"
    narration: NarrationScore | None = None
    reasoning: ReasoningScore | None = None


@dataclass(frozen=True)
class GroupSummary:
    backend: str
    strategy: str
    narration_mean: float
    reasoning_mean: float | None
    segments: int


@dataclass(frozen=True)
class EvaluationReport:
    groups: tuple[GroupSummary, ...]


def aggregate(scores: Sequence[SegmentScore]) -> EvaluationReport:
    """Mean narration/reasoning value per (backend, strategy) group.

    Raises:
        ValueError: if there are no scores, or a group has no narration
            scores at all.
    """
    if not scores:
        raise ValueError("empty group: no scores to aggregate")
    grouped: dict[tuple[str, str], list[SegmentScore]] = {}
    for score in scores:
        grouped.setdefault((score.backend, score.strategy), []).append(score)

    summaries: list[GroupSummary] = []
    for (backend, strategy) in sorted(grouped):
        members = grouped[(backend, strategy)]
        nar_values = [s.narration.value for s in members if s.narration is not None]
        rea_values = [s.reasoning.value for s in members if s.reasoning is not None]
        if not nar_values:
            raise ValueError(f"empty group: no narration scores for {backend}/{strategy}")
        summaries.append(
            GroupSummary(
                backend=backend,
                strategy=strategy,
                narration_mean=sum(nar_values) / len(nar_values),
                reasoning_mean=sum(rea_values) / len(rea_values) if rea_values else None,
                segments=len(members),
            )
        )
    return EvaluationReport(groups=tuple(summaries))


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{value * 100:.1f}%"


def render_report_table(report: EvaluationReport) -> str:
    """Two-task table: Nar./Rea. rows by strategy flag, one column per backend."""
    backends = sorted({g.backend for g in report.groups})
    strategies = [s for s in ("on", "off") if any(g.strategy == s for g in report.groups)]
    by_key = {(g.backend, g.strategy): g for g in report.groups}

    def cell(task: str, backend: str, strategy: str) -> str:
        g = by_key.get((backend, strategy))
        if g is None:
            return "-"
        return _pct(g.narration_mean if task == "Nar." else g.reasoning_mean)

    flag = {"on": "✓", "off": "✗"}
    width = max([len(b) for b in backends] + [8])
    header = f"{'Task':<6}{'PS':<4}" + "".join(f"{b:>{width + 2}}" for b in backends)
    lines = [header]
    for task in ("Nar.", "Rea."):
        for strategy in strategies:
            row = f"{task:<6}{flag[strategy]:<4}" + "".join(
                f"{cell(task, b, strategy):>{width + 2}}" for b in backends
            )
            lines.append(row)
    return "\n".join(lines) + "\n"


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "groups": [
            {
                "backend": g.backend,
                "strategy": g.strategy,
                "narration_mean": g.narration_mean,
                "narration_pct": _pct(g.narration_mean),
                "reasoning_mean": g.reasoning_mean,
                "reasoning_pct": _pct(g.reasoning_mean),
                "segments": g.segments,
            }
            for g in report.groups
        ]
    }
