"""Three-stream prompt construction and the pairwise enrichment corpus.

Environment descriptions come from keyframes only; agent and motion
descriptions come from every frame inside the keyframe trajectory windows
(keyframe index plus/minus the configured half-width, default 8). All
functions here are pure over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .segments import Segment, select_keyframes
from .taxonomy import CATEGORIES, KeywordEntry, Taxonomy

STREAM_HEADERS = {
    "environment": "[ENVIRONMENT]",
    "agent": "[AGENT]",
    "motion": "[MOTION]",
}

EMPTY_STREAM_TEXT = "none observed"


class PromptError(ValueError):
    """Prompt construction or rendering was misconfigured."""


@dataclass(frozen=True)
class PromptConfig:
    keyframe_policy: str = "stride(15)"
    window_half_width: int = 8

    def __post_init__(self) -> None:
        if self.window_half_width < 0:
            raise PromptError("window_half_width must be >= 0")


@dataclass(frozen=True)
class PromptBundle:
    """A rendered-ready three-stream prompt with its frame provenance."""

    environment_stream: str
    agent_stream: str
    motion_stream: str
    frame_refs: tuple[str, ...]
    keyframes: tuple[int, ...]
    windows: tuple[tuple[int, int], ...]

    def stream(self, category: str) -> str:
        return {
            "environment": self.environment_stream,
            "agent": self.agent_stream,
            "motion": self.motion_stream,
        }[category]


def _stream_text(category: str, snippets: Sequence[str]) -> str:
    header = STREAM_HEADERS[category]
    body = "; ".join(snippets) if snippets else EMPTY_STREAM_TEXT
    return f"{header} {body}"


def build_prompt(
    segment: Segment,
    taxonomy: Taxonomy,
    config: PromptConfig = PromptConfig(),
    extra_observations: Mapping[str, Sequence[str]] | None = None,
) -> PromptBundle:
    """Build the three-stream prompt bundle for *segment*.

    The environment stream concatenates environment-tagged observations from
    keyframes only; agent and motion streams concatenate their observations
    from every frame in the union of the keyframe windows. Extra
    observations (edge-user uploads) are appended to their stream after the
    frame-derived snippets. A stream with nothing to say still carries its
    header plus "none observed".
    """
    if not segment.frames:
        raise PromptError("segment has no frames")
    extras = extra_observations or {}
    for category in extras:
        if category not in CATEGORIES:
            raise PromptError(f"unknown observation category {category!r}")

    keyframes = select_keyframes(segment, config.keyframe_policy)
    last = len(segment.frames) - 1
    w = config.window_half_width
    windows = tuple((max(0, k - w), min(last, k + w)) for k in keyframes)

    window_union: set[int] = set()
    for lo, hi in windows:
        window_union.update(range(lo, hi + 1))

    env_snippets: list[str] = []
    agent_snippets: list[str] = []
    motion_snippets: list[str] = []
    for frame in segment.frames:
        for obs in frame.observations:
            if obs.category == "environment" and frame.index in keyframes:
                env_snippets.append(obs.text)
            elif obs.category == "agent" and frame.index in window_union:
                agent_snippets.append(obs.text)
            elif obs.category == "motion" and frame.index in window_union:
                motion_snippets.append(obs.text)

    env_snippets.extend(extras.get("environment", []))
    agent_snippets.extend(extras.get("agent", []))
    motion_snippets.extend(extras.get("motion", []))

    included = sorted(window_union | set(keyframes))
    frame_refs = tuple(dict.fromkeys(segment.frames[i].image_ref for i in included))

    return PromptBundle(
        environment_stream=_stream_text("environment", env_snippets),
        agent_stream=_stream_text("agent", agent_snippets),
        motion_stream=_stream_text("motion", motion_snippets),
        frame_refs=frame_refs,
        keyframes=tuple(keyframes),
        windows=windows,
    )


def build_raw_prompt(
    segment: Segment,
    extra_observations: Mapping[str, Sequence[str]] | None = None,
) -> str:
    """The strategy-off baseline: every observation dumped in frame order.

    No stream headers, no keyframe or window filtering.
    """
    snippets = [obs.text for frame in segment.frames for obs in frame.observations]
    for category in CATEGORIES:
        snippets.extend((extra_observations or {}).get(category, []))
    return "; ".join(snippets) if snippets else EMPTY_STREAM_TEXT


PROMPT_TEMPLATES: dict[str, str] = {
    "default": (
        "You are a roadside traffic observer. Using the structured scene\n"
        "information below, narrate the driving scene and then explain the\n"
        "observed motion in terms of the environment and agent conditions.\n"
        "\n"
        "{environment}\n"
        "{agent}\n"
        "{motion}\n"
    ),
    "plain": "{environment}\n{agent}\n{motion}\n",
}


def render_template_text(bundle: PromptBundle, template_text: str) -> str:
    return template_text.format(
        environment=bundle.environment_stream,
        agent=bundle.agent_stream,
        motion=bundle.motion_stream,
    )


def render_prompt(bundle: PromptBundle, template_id: str = "default") -> str:
    """Render a bundle to backend-ready text. Deterministic and idempotent."""
    if template_id not in PROMPT_TEMPLATES:
        raise PromptError(
            f"unknown template {template_id!r}; known: {sorted(PROMPT_TEMPLATES)}"
        )
    return render_template_text(bundle, PROMPT_TEMPLATES[template_id])


def load_template(path: str | Path) -> str:
    """Read a template file; it must use all three stream slots."""
    text = Path(path).read_text(encoding="utf-8")
    for slot in ("{environment}", "{agent}", "{motion}"):
        if slot not in text:
            raise PromptError(f"template {path} is missing slot {slot}")
    return text


def register_template(template_id: str, text: str) -> None:
    """Make a template available to render_prompt under *template_id*."""
    for slot in ("{environment}", "{agent}", "{motion}"):
        if slot not in text:
            raise PromptError(f"template {template_id!r} is missing slot {slot}")
    PROMPT_TEMPLATES[template_id] = text


@dataclass(frozen=True)
class EnrichmentPair:
    """A cross-category keyword pair with its description template."""

    first: KeywordEntry
    second: KeywordEntry
    description_template: str

    def render(self) -> str:
        return self.description_template.format(first=self.first.label, second=self.second.label)


_PAIR_TEMPLATES = {
    ("environment", "agent"): "In {first} conditions, pay close attention to how each {second} behaves.",
    ("environment", "motion"): "{first} conditions often explain {second} on the road.",
    ("agent", "motion"): "Watch for {second} whenever a {first} is present in the scene.",
}


def generate_enrichment_corpus(taxonomy: Taxonomy) -> list[EnrichmentPair]:
    """Exactly one pair for every cross-category unordered keyword pair.

    For category sizes (e, a, m) the corpus has e*a + e*m + a*m pairs.
    """
    pairs: list[EnrichmentPair] = []
    for (cat1, cat2), template in _PAIR_TEMPLATES.items():
        for first in taxonomy.by_category(cat1):
            for second in taxonomy.by_category(cat2):
                pairs.append(EnrichmentPair(first=first, second=second, description_template=template))
    return pairs
