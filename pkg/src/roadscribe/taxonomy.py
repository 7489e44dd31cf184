"""Keyword taxonomy: the three information streams and phrase matching.

The taxonomy is the vocabulary of the whole system. It holds exactly three
categories (environment, agent, motion); every matching, scoring, and hazard
decision resolves free text against it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator

CATEGORIES = ("environment", "agent", "motion")

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_INT_RE = re.compile(r"[0-9]+")


class TaxonomyError(ValueError):
    """A taxonomy document failed to parse or validate."""


def normalize_tokens(text: str) -> list[str]:
    """Lowercase *text* and split it into alphanumeric tokens.

    Punctuation (including hyphens) acts as a separator, so "wrong-way"
    tokenizes identically to "wrong way".
    """
    return _TOKEN_RE.findall(text.lower())


def normalize_phrase(text: str) -> str:
    return " ".join(normalize_tokens(text))


@dataclass(frozen=True)
class KeywordEntry:
    """One keyword of one stream: a canonical label plus accepted aliases."""

    category: str
    label: str
    aliases: frozenset[str] = frozenset()

    def phrases(self) -> Iterator[str]:
        yield self.label
        yield from sorted(self.aliases)


@dataclass(frozen=True)
class Taxonomy:
    """Immutable, validated collection of keyword entries.

    Safe to share between any number of concurrent readers.
    """

    entries: tuple[KeywordEntry, ...]
    _index: dict[tuple[str, ...], KeywordEntry] = field(repr=False, compare=False, default_factory=dict)
    _max_phrase_len: int = field(repr=False, compare=False, default=0)

    def __post_init__(self) -> None:
        index: dict[tuple[str, ...], KeywordEntry] = {}
        max_len = 0
        for entry in self.entries:
            for phrase in entry.phrases():
                key = tuple(phrase.split())
                index[key] = entry
                max_len = max(max_len, len(key))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_max_phrase_len", max_len)

    @property
    def counts(self) -> dict[str, int]:
        out = {c: 0 for c in CATEGORIES}
        for entry in self.entries:
            out[entry.category] += 1
        return out

    def entry_for(self, phrase: str) -> KeywordEntry | None:
        """Resolve a label or alias (in any capitalization) to its entry."""
        return self._index.get(tuple(normalize_tokens(phrase)))

    def labels(self, category: str) -> list[str]:
        return [e.label for e in self.entries if e.category == category]

    def by_category(self, category: str) -> list[KeywordEntry]:
        return [e for e in self.entries if e.category == category]


@dataclass(frozen=True)
class Match:
    """One disjoint phrase match inside a text."""

    entry: KeywordEntry
    start: int  # token index, inclusive
    end: int  # token index, exclusive
    preceding_int: int | None  # value of the integer token right before the phrase


def _parse_line(line: str, entry_index: int) -> KeywordEntry:
    parts = line.split("\t")
    if len(parts) < 2:
        raise TaxonomyError(
            f"entry {entry_index}: expected 'category<TAB>label[<TAB>aliases]', got {line!r}"
        )
    category = parts[0].strip()
    if category not in CATEGORIES:
        raise TaxonomyError(f"entry {entry_index}: unknown category {category!r}")
    label = normalize_phrase(parts[1])
    if not label:
        raise TaxonomyError(f"entry {entry_index}: empty label")
    if len(label.split()) > 4:
        raise TaxonomyError(f"entry {entry_index}: label {label!r} longer than 4 words")
    aliases: set[str] = set()
    if len(parts) >= 3 and parts[2].strip():
        for raw in parts[2].split(","):
            alias = normalize_phrase(raw)
            if alias:
                aliases.add(alias)
    return KeywordEntry(category=category, label=label, aliases=frozenset(aliases))


def load_taxonomy(source: str | Path | IO[str] | Iterable[str]) -> Taxonomy:
    """Load and validate a taxonomy document.

    Accepts a path or any iterable of lines. Lines are
    ``category<TAB>label<TAB>alias1,alias2,...`` with ``#`` comments.

    Raises:
        TaxonomyError: on parse failure, duplicate phrase, unknown category,
            or empty label, naming the offending entry.
    """
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    elif hasattr(source, "read"):
        lines = source.read().splitlines()  # type: ignore[union-attr]
    else:
        lines = list(source)

    entries: list[KeywordEntry] = []
    seen: dict[str, int] = {}
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        entry = _parse_line(line.rstrip("\n"), len(entries))
        for phrase in entry.phrases():
            if phrase in seen:
                raise TaxonomyError(
                    f"entry {len(entries)}: duplicate phrase {phrase!r} "
                    f"(already used by entry {seen[phrase]})"
                )
            seen[phrase] = len(entries)
        entries.append(entry)

    if not entries:
        raise TaxonomyError("no entries")
    return Taxonomy(entries=tuple(entries))


@lru_cache(maxsize=1)
def default_taxonomy() -> Taxonomy:
    """The shipped taxonomy: 23 environment, 15 agent, 47 motion entries."""
    with resources.files("roadscribe.data").joinpath("taxonomy.tsv").open("r", encoding="utf-8") as fh:
        return load_taxonomy(fh)


def find_matches(text: str, taxonomy: Taxonomy) -> list[Match]:
    """Longest-match-first, left-to-right phrase matching over *text*.

    Each token is consumed by at most one match, so matches never overlap.
    Returns matches in text order, each annotated with the integer token (if
    any) immediately preceding the matched phrase.
    """
    tokens = normalize_tokens(text)
    index = taxonomy._index
    max_len = taxonomy._max_phrase_len
    matches: list[Match] = []
    i = 0
    n = len(tokens)
    while i < n:
        hit = None
        for length in range(min(max_len, n - i), 0, -1):
            entry = index.get(tuple(tokens[i : i + length]))
            if entry is not None:
                hit = (entry, length)
                break
        if hit is None:
            i += 1
            continue
        entry, length = hit
        preceding = None
        if i > 0 and _INT_RE.fullmatch(tokens[i - 1]):
            preceding = int(tokens[i - 1])
        matches.append(Match(entry=entry, start=i, end=i + length, preceding_int=preceding))
        i += length
    return matches


def match_keywords(text: str, taxonomy: Taxonomy) -> list[tuple[KeywordEntry, int]]:
    """Count disjoint keyword occurrences in *text*.

    Returns (entry, occurrence count) pairs ordered by first occurrence.
    Empty text yields an empty list.
    """
    counts: dict[KeywordEntry, int] = {}
    for match in find_matches(text, taxonomy):
        counts[match.entry] = counts.get(match.entry, 0) + 1
    return list(counts.items())
