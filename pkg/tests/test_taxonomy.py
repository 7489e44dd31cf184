import dataclasses
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadscribe.taxonomy import (
    TaxonomyError,
    default_taxonomy,
    find_matches,
    load_taxonomy,
    match_keywords,
    normalize_tokens,
)


def test_default_taxonomy_counts(taxonomy):
    assert taxonomy.counts == {"environment": 23, "agent": 15, "motion": 47}


def test_named_keywords_present(taxonomy):
    for phrase, category in [
        ("rainy day", "environment"),
        ("fog", "environment"),
        ("nighttime", "environment"),
        ("pedestrians", "agent"),
        ("vehicles", "agent"),
        ("cyclists", "agent"),
        ("turning", "motion"),
        ("stopping", "motion"),
        ("lane changing", "motion"),
        ("crossing", "motion"),
        ("speeding", "motion"),
        ("sharp turns", "motion"),
    ]:
        entry = taxonomy.entry_for(phrase)
        assert entry is not None, phrase
        assert entry.category == category


def test_empty_document_is_an_error():
    with pytest.raises(TaxonomyError, match="no entries"):
        load_taxonomy(io.StringIO("# only comments\n\n"))


def test_duplicate_phrase_across_categories_names_the_phrase():
    doc = "environment\tfog\t\nagent\tfog\t\n"
    with pytest.raises(TaxonomyError, match="fog"):
        load_taxonomy(io.StringIO(doc))


def test_duplicate_alias_is_an_error():
    doc = "environment\tfog\tmist\nenvironment\tsnow\tmist\n"
    with pytest.raises(TaxonomyError, match="mist"):
        load_taxonomy(io.StringIO(doc))


@pytest.mark.parametrize(
    "line, message",
    [
        ("weather\tfog\t", "unknown category"),
        ("environment\t \t", "empty label"),
        ("environment", "expected"),
        ("environment\tone two three four five\t", "longer than 4 words"),
    ],
)
def test_bad_entries_report_entry_index(line, message):
    with pytest.raises(TaxonomyError, match=message) as err:
        load_taxonomy(io.StringIO(line + "\n"))
    assert "entry 0" in str(err.value)


def test_taxonomy_is_immutable(taxonomy):
    with pytest.raises(dataclasses.FrozenInstanceError):
        taxonomy.entries = ()


def test_match_simple_sentence(taxonomy):
    got = [(e.label, n) for e, n in match_keywords("a pedestrian crossing in fog", taxonomy)]
    assert got == [("pedestrian", 1), ("crossing", 1), ("fog", 1)]


def test_match_counts_disjoint_occurrences(taxonomy):
    got = [(e.label, n) for e, n in match_keywords("fog fog fog", taxonomy)]
    assert got == [("fog", 3)]


def test_match_empty_text(taxonomy):
    assert match_keywords("", taxonomy) == []


def test_longest_match_wins(taxonomy):
    matches = find_matches("the traffic light turned red", taxonomy)
    assert [m.entry.label for m in matches] == ["red light"]
    # All four tokens of the alias are consumed, so "turning" cannot match.
    assert matches[0].end - matches[0].start == 4


def test_alias_resolution_is_case_insensitive(taxonomy):
    assert taxonomy.entry_for("Rainy Weather").label == "rainy day"
    assert taxonomy.entry_for("WRONG-WAY").label == "wrong way"


def test_preceding_integer_is_captured(taxonomy):
    matches = find_matches("3 pedestrians, 1 vehicle in rainy weather", taxonomy)
    by_label = {m.entry.label: m.preceding_int for m in matches}
    assert by_label == {"pedestrian": 3, "vehicle": 1, "rainy day": None}


def _texts(taxonomy):
    phrases = sorted({p for e in taxonomy.entries for p in e.phrases()})
    noise = ["the", "a", "and", "on", "near", "2", "its", "while"]
    return st.lists(
        st.one_of(st.sampled_from(noise), st.sampled_from(phrases)), max_size=12
    ).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(text=_texts(default_taxonomy()))
def test_matching_is_case_insensitive(text):
    taxonomy = default_taxonomy()
    upper = [(e.label, n) for e, n in match_keywords(text.upper(), taxonomy)]
    lower = [(e.label, n) for e, n in match_keywords(text, taxonomy)]
    assert upper == lower


@settings(max_examples=200, deadline=None)
@given(text=_texts(default_taxonomy()))
def test_matches_never_overlap_and_belong_to_taxonomy(text):
    taxonomy = default_taxonomy()
    matches = find_matches(text, taxonomy)
    spans = sum(m.end - m.start for m in matches)
    assert spans <= len(normalize_tokens(text))
    for prev, nxt in zip(matches, matches[1:]):
        assert prev.end <= nxt.start
    for m in matches:
        assert m.entry in taxonomy.entries
