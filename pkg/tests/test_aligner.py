import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from grc_embed.aligner import (
    AlignConfig, AlignmentLink, BEAD_PRIORS, BilingualDictionary, LengthDictScorer, align_sections,
    bead_dp, bead_shapes, embed_align, filter_links, length_dict_align, link_f1, read_alignment,
    write_alignment,
)
from grc_embed.embed_core import LookupEncoder
from grc_embed.text_prep import Language, Sentence
from oracles import brute_force_min_cost, enumerate_alignments, py_cosine


def sents(texts, lang=Language.GRC, doc="d"):
    return [Sentence(doc, i, t, lang) for i, t in enumerate(texts)]


def spans(links):
    return [(l.src_indices, l.tgt_indices) for l in links]


def oracle_docs(src_vecs, tgt_vecs):
    """Unique placeholder texts whose embeddings are the given rows."""
    src = [f"s{i:03d}" for i in range(len(src_vecs))]
    tgt = [f"t{j:03d}" for j in range(len(tgt_vecs))]
    enc = LookupEncoder({**dict(zip(src, src_vecs)), **dict(zip(tgt, tgt_vecs))})
    return sents(src), sents(tgt, Language.EN), enc


def assert_monotone_cover(links, n_src, n_tgt):
    seen_s, seen_t = [], []
    for l in links:
        seen_s.extend(l.src_indices)
        seen_t.extend(l.tgt_indices)
    assert seen_s == list(range(n_src))
    assert seen_t == list(range(n_tgt))


# --- stage 1 ---------------------------------------------------------------

def test_equal_lengths_give_diagonal():
    src = sents(["a" * 20, "b" * 35, "c" * 50])
    tgt = sents(["x" * 20, "y" * 35, "z" * 50], Language.EN)
    links = length_dict_align(src, tgt, BilingualDictionary())
    assert spans(links) == [((0,), (0,)), ((1,), (1,)), ((2,), (2,))]
    assert all(l.score == pytest.approx(1.0) for l in links)


def _gc_by_hand(l1, l2):
    delta = (l2 - l1) / math.sqrt(l1 * 6.8)
    return -math.log(2 * norm.sf(abs(delta)))


def test_two_to_one_merge():
    src = sents(["a" * 30, "b" * 30])
    tgt = sents(["x" * 62], Language.EN)
    merged = -math.log(BEAD_PRIORS[(2, 1)]) + _gc_by_hand(60, 62)
    # the only alternatives on the 2x1 lattice: a 1-1 bead plus a source gap, in either order
    split_a = -math.log(BEAD_PRIORS[(1, 1)]) + _gc_by_hand(30, 62) + 2.0
    assert merged < split_a
    links = length_dict_align(src, tgt, BilingualDictionary())
    assert spans(links) == [((0, 1), (0,))]


def test_dictionary_flips_to_cross_alignment():
    src = sents(["λόγος", "θεός"])
    tgt = sents(["god", "word"], Language.EN)
    dictionary = BilingualDictionary.from_pairs([("λογος", "word")])
    assert spans(length_dict_align(src, tgt, dictionary, AlignConfig(dict_weight=0.0))) == [
        ((0,), (0,)), ((1,), (1,))]
    cfg = AlignConfig(dict_weight=1.0)
    links = length_dict_align(src, tgt, dictionary, cfg)
    assert spans(links) == [((), (0,)), ((0,), (1,)), ((1,), ())]
    scorer = LengthDictScorer([s.text for s in src], [t.text for t in tgt], dictionary, cfg)
    path, total = bead_dp(2, 2, bead_shapes(2), scorer)
    assert total == pytest.approx(brute_force_min_cost(2, 2, bead_shapes(2), scorer), abs=1e-12)
    assert [(tuple(range(i, i + a)), tuple(range(j, j + b))) for i, j, a, b in path] == spans(links)


def test_empty_dictionary_means_length_only():
    scorer = LengthDictScorer(["aaa"], ["bbbb"], BilingualDictionary(), AlignConfig(dict_weight=1.0))
    assert scorer.weight == 0.0
    assert scorer.evidence_cost(0, 0, 1, 1) == pytest.approx(_gc_by_hand(3, 4))


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        length_dict_align([], sents(["x"]))
    with pytest.raises(ValueError):
        embed_align(sents(["x"]), [], LookupEncoder({"x": np.ones(2)}))


# --- DP optimality -----------------------------------------------------------

def test_path_counts_match_enumeration():
    assert sum(1 for _ in enumerate_alignments(2, 2, bead_shapes(2))) == 18


@given(st.integers(0, 6), st.integers(0, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_dp_matches_brute_force(n_src, n_tgt, max_bead, seed):
    if n_src + n_tgt == 0:
        return
    rng = np.random.default_rng(seed)
    table = {}

    def cost(i, j, a, b):
        key = (i, j, a, b)
        if key not in table:
            table[key] = float(rng.uniform(-1, 3))
        return table[key]

    beads = bead_shapes(max_bead)
    expect = brute_force_min_cost(n_src, n_tgt, beads, cost)
    path, total = bead_dp(n_src, n_tgt, beads, cost)
    assert total == pytest.approx(expect, abs=1e-12)
    assert sum(cost(*b) for b in path) == pytest.approx(total, abs=1e-12)


@given(st.lists(st.integers(5, 80), min_size=1, max_size=7), st.lists(st.integers(5, 80), min_size=1, max_size=7))
def test_stage1_output_is_monotone_cover(src_lens, tgt_lens):
    src = sents(["a" * n for n in src_lens])
    tgt = sents(["b" * n for n in tgt_lens], Language.EN)
    links = length_dict_align(src, tgt)
    assert_monotone_cover(links, len(src), len(tgt))
    assert all(0.0 <= l.score <= 1.0 for l in links)


# --- stage 2 ---------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 4, 12])
def test_identity_oracle_gives_diagonal(n):
    eye = np.eye(n)
    src, tgt, enc = oracle_docs(eye, eye)
    links = embed_align(src, tgt, enc)
    assert spans(links) == [((i,), (i,)) for i in range(n)]
    assert all(l.score == pytest.approx(1.0) for l in links)


def _naive_embed_best(src_vecs, tgt_vecs, lengths_src, lengths_tgt, max_bead):
    def seg(vecs, lens, start, k):
        w = sum(lens[start:start + k])
        return [sum(lens[start + r] * vecs[start + r][d] for r in range(k)) / w for d in range(len(vecs[0]))]

    best, arg = -math.inf, None
    for path in enumerate_alignments(len(src_vecs), len(tgt_vecs), bead_shapes(max_bead)):
        total = 0.0
        for i, j, a, b in path:
            if a and b:
                total += py_cosine(seg(src_vecs, lengths_src, i, a), seg(tgt_vecs, lengths_tgt, j, b))
        if total > best + 1e-12:
            best, arg = total, path
    return best, arg


def test_merge_recovered_on_five_by_four():
    rng = np.random.default_rng(7)
    src_vecs = rng.standard_normal((5, 6))
    # placeholder texts all have 4 characters, so the length weights are equal
    tgt_vecs = np.vstack([src_vecs[:3], (src_vecs[3] + src_vecs[4]) / 2])
    src, tgt, enc = oracle_docs(src_vecs, tgt_vecs)
    best, path = _naive_embed_best(src_vecs.tolist(), tgt_vecs.tolist(), [4] * 5, [4] * 4, 3)
    assert (3, 3, 2, 1) in path
    links = embed_align(src, tgt, enc)
    assert ((3, 4), (3,)) in spans(links)
    assert sum(l.score for l in links) == pytest.approx(best, abs=1e-9)


def test_random_documents_rarely_link():
    linked = total = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        src, tgt, enc = oracle_docs(rng.standard_normal((30, 64)), rng.standard_normal((30, 64)))
        kept = filter_links(embed_align(src, tgt, enc), 0.5)
        linked += sum(len(l.src_indices) + len(l.tgt_indices) for l in kept if not l.is_gap)
        total += 60
    assert linked / total < 0.10


def test_embed_beats_length_on_synthetic_docs():
    from grc_embed.synthetic import aligned_documents
    docs = aligned_documents(n_src=60, seed=3)
    f_embed = link_f1(embed_align(docs.src, docs.tgt, docs.encoder), docs.gold)
    f_len = link_f1(length_dict_align(docs.src, docs.tgt), docs.gold)
    assert f_embed >= 0.9 and f_embed > f_len


@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 8))
def test_stage2_output_is_monotone_cover(seed, n_src, n_tgt):
    rng = np.random.default_rng(seed)
    src, tgt, enc = oracle_docs(rng.standard_normal((n_src, 4)), rng.standard_normal((n_tgt, 4)))
    links = embed_align(src, tgt, enc)
    assert_monotone_cover(links, n_src, n_tgt)
    assert all(-1.0 <= l.score <= 1.0 for l in links)


# --- sections and filtering ----------------------------------------------------

def test_sections_concatenate_per_section_results():
    eye = np.eye(6)
    src, tgt, enc = oracle_docs(eye, eye)
    links = align_sections(src, tgt, [0, 2], [0, 2], encoder=enc)
    first = embed_align(src[:2], tgt[:2], enc)
    second = [l.shifted(2, 2) for l in embed_align(src[2:], tgt[2:], enc)]
    assert links == first + second


def test_noisy_section_does_not_spoil_clean_one():
    rng = np.random.default_rng(0)
    noisy_s, noisy_t = rng.standard_normal((8, 32)), rng.standard_normal((8, 32))
    clean = rng.standard_normal((5, 32))
    src, tgt, enc = oracle_docs(np.vstack([noisy_s, clean]), np.vstack([noisy_t, clean]))
    kept = filter_links(align_sections(src, tgt, [0, 8], [0, 8], encoder=enc), 0.5)
    assert [((8 + i,), (8 + i,)) for i in range(5)] == [s for s in spans(kept) if s[0][0] >= 8]
    for l in align_sections(src, tgt, [0, 8], [0, 8], encoder=enc):
        assert all(i < 8 for i in l.src_indices) or all(i >= 8 for i in l.src_indices)


def test_sections_fallback_and_errors():
    eye = np.eye(3)
    src, tgt, enc = oracle_docs(eye, eye)
    assert align_sections(src, tgt, None, None, encoder=enc) == embed_align(src, tgt, enc)
    assert align_sections(src, tgt, [0, 1], None, "length-dict") == length_dict_align(src, tgt)
    with pytest.raises(ValueError, match="section counts"):
        align_sections(src, tgt, [0, 1], [0], encoder=enc)
    with pytest.raises(ValueError):
        align_sections(src, tgt, None, None, "hunalign")


def test_filter_links_examples():
    links = [AlignmentLink((0,), (0,), 0.9), AlignmentLink((1,), (1,), 0.4)]
    assert filter_links(links, 0.0) == links
    assert filter_links(links, 0.5) == links[:1]
    assert filter_links(links, 0.95) == []


def test_link_validation():
    with pytest.raises(ValueError):
        AlignmentLink((), (), 1.0)
    with pytest.raises(ValueError):
        AlignmentLink((0, 2), (1,), 1.0)


def test_alignment_tsv_round_trip(tmp_path):
    links = [AlignmentLink((), (0,), 0.0), AlignmentLink((0, 1), (1,), 0.123456789), AlignmentLink((2,), (), 0.0)]
    path = tmp_path / "a.tsv"
    write_alignment(path, links, "grc", "en")
    assert read_alignment(path) == links
    assert path.read_text().splitlines()[0] == "src_doc\tsrc_indices\ttgt_doc\ttgt_indices\tscore"
