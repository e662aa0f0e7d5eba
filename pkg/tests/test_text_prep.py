from hypothesis import given, strategies as st

import pytest

from grc_embed.text_prep import (
    Language, ParallelPair, RawDocument, SegmentationConfig, dedup_and_filter, normalize_greek,
    read_document, read_sentences, segment_document, segment_english, segment_greek, write_sentences,
)
from oracles import strip_marks_by_table

greek_text = st.text(alphabet=st.sampled_from(list("ἀάὰᾶἁὁΣσςΩωῳΖεὺοἰκεῖ ·.;:;·\n\tαβγ")), max_size=60)


def texts(sentences):
    return [s.text for s in sentences]


@pytest.mark.parametrize("raw, expected", [
    ("Σωκράτης", "σωκρατης"),
    ("", ""),
    ("ὁ Ζεὺς οἰκεῖ ἐπὶ τὰ ὄρη·", "ο ζευς οικει επι τα ορη·"),
])
def test_normalize_greek_examples(raw, expected):
    assert strip_marks_by_table(raw) == expected
    assert normalize_greek(raw) == expected


def test_normalize_greek_keeps_punctuation_and_collapses_space():
    assert normalize_greek("  τί  ἐστιν;\n λόγος. ") == "τι εστιν; λογος."
    # iota subscript is a combining mark too
    assert normalize_greek("ᾠδῇ") == "ωδη"


@given(greek_text)
def test_normalize_greek_idempotent(text):
    once = normalize_greek(text)
    assert normalize_greek(once) == once


@given(greek_text)
def test_normalize_greek_matches_table_oracle(text):
    assert normalize_greek(text) == strip_marks_by_table(text)


def test_segment_greek_examples():
    assert texts(segment_greek("α λεγει. β ερωτᾳ; γ φησι· δ")) == ["α λεγει.", "β ερωτᾳ;", "γ φησι·", "δ"]
    assert texts(segment_greek("ουδεν")) == ["ουδεν"]
    assert texts(segment_greek("α: β", SegmentationConfig(colon_as_raised_dot=True))) == ["α:", "β"]
    assert texts(segment_greek("α: β")) == ["α: β"]


def test_segment_greek_terminator_runs_and_indices():
    sents = segment_greek("α... β;; γ", doc_id="d")
    assert texts(sents) == ["α...", "β;;", "γ"]
    assert [s.index for s in sents] == [0, 1, 2]
    assert {s.doc_id for s in sents} == {"d"}


def test_segment_english_examples():
    assert texts(segment_english("He came. He saw; he conquered.")) == ["He came.", "He saw;", "he conquered."]
    assert texts(segment_english("One sentence")) == ["One sentence"]
    cfg = SegmentationConfig(english_abbreviations=("Mr.",))
    assert texts(segment_english("Mr. Smith spoke: all listened.", cfg)) == ["Mr. Smith spoke:", "all listened."]


def test_segment_english_does_not_split_lowercase_or_times():
    assert texts(segment_english("It was 3 p.m. on the dot. Then at 10:30 it rained.")) == \
        ["It was 3 p.m. on the dot.", "Then at 10:30 it rained."]
    assert texts(segment_english('He said "Go!" Then left.')) == ['He said "Go!"', "Then left."]


@given(greek_text, st.booleans())
def test_segment_greek_loses_nothing(text, colon):
    text = normalize_greek(text)
    sents = segment_greek(text, SegmentationConfig(colon_as_raised_dot=colon))
    assert "".join("".join(texts(sents)).split()) == "".join(text.split())
    assert [s.index for s in sents] == list(range(len(sents)))
    assert all(s.text for s in sents)


@given(st.text(alphabet=st.sampled_from(list("Ab .!?;:\"'()\n")), max_size=80))
def test_segment_english_loses_nothing(text):
    sents = segment_english(text)
    assert "".join("".join(texts(sents)).split()) == "".join(text.split())
    assert all(s.text for s in sents)


def test_dedup_and_filter_examples():
    a, c = ParallelPair("a", "b"), ParallelPair("c", "d")
    assert dedup_and_filter([a, a, c], 0) == [a, c]
    assert dedup_and_filter([ParallelPair("αβγ", "abc")], 5) == []
    assert dedup_and_filter([], 5) == []
    with pytest.raises(ValueError):
        dedup_and_filter([], -1)


@given(st.lists(st.tuples(st.sampled_from(["", "a", "abcde", "λογος εστι"]),
                          st.sampled_from(["", "x", "words here", "abcdef"])), max_size=20),
       st.integers(0, 12))
def test_dedup_and_filter_properties(raw, min_chars):
    pairs = [ParallelPair(s, t) for s, t in raw]
    out = dedup_and_filter(pairs, min_chars)
    assert len(out) <= len(pairs)
    keys = [(p.source, p.target) for p in out]
    assert len(keys) == len(set(keys))
    assert all(len(p.source) >= min_chars and len(p.target) >= min_chars for p in out)
    # survivors keep their relative input order
    positions = [next(i for i, p in enumerate(pairs) if (p.source, p.target) == k) for k in keys]
    assert positions == sorted(positions)


def test_raw_document_validates_section_breaks():
    with pytest.raises(ValueError):
        RawDocument("d", Language.GRC, "abc", (2, 1))
    with pytest.raises(ValueError):
        RawDocument("d", Language.GRC, "abc", (5,))


def test_segment_document_by_sections(tmp_path):
    text = "Ἐν ἀρχῇ ἦν ὁ λόγος. καὶ ὁ λόγος ἦν· Πάντα δι᾽ αὐτοῦ ἐγένετο."
    path = tmp_path / "john.txt"
    path.write_text(text, encoding="utf-8")
    cut = text.index("Πάντα")
    (tmp_path / "john.txt.sections").write_text(f"{len(text[:cut].encode('utf-8'))}\n")
    doc = read_document(path, Language.GRC, sections_path=tmp_path / "john.txt.sections")
    assert doc.section_breaks == (cut,)
    sents, starts = segment_document(doc)
    assert texts(sents) == ["εν αρχη ην ο λογος.", "και ο λογος ην·", "παντα δι᾽ αυτου εγενετο."]
    assert starts == [0, 2]

    out = tmp_path / "john.tsv"
    write_sentences(out, sents, starts)
    back, back_starts = read_sentences(out)
    assert back == sents
    assert back_starts == starts


def test_sentence_tsv_without_sections(tmp_path):
    sents = segment_english("First one. Second: third.", doc_id="e")
    write_sentences(tmp_path / "e.tsv", sents)
    back, starts = read_sentences(tmp_path / "e.tsv")
    assert back == sents and starts is None
    assert (tmp_path / "e.tsv").read_text().splitlines()[0] == "doc_id\tindex\tlanguage\ttext"
