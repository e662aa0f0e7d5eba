"""Synthetic corpora with known ground truth, for end-to-end checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed_core import LookupEncoder
from .student import BagEncoder, Vocabulary, init_params
from .text_prep import Language, ParallelPair, Sentence


def cipher_bitext(n_pairs: int = 2000, vocab_size: int = 200, min_len: int = 3, max_len: int = 8,
                  seed: int = 0) -> list[ParallelPair]:
    """English-like token sentences paired with a token-wise substitution cipher.

    ``source`` is the cipher ("Greek") side, ``target`` the plain side.
    Sentences are unique.
    """
    rng = np.random.default_rng(seed)
    plain = [f"w{i:03d}" for i in range(vocab_size)]
    perm = rng.permutation(vocab_size)
    cipher = {tok: f"κ{perm[i]:03d}" for i, tok in enumerate(plain)}
    seen = set()
    pairs = []
    while len(pairs) < n_pairs:
        length = int(rng.integers(min_len, max_len + 1))
        toks = [plain[i] for i in rng.integers(0, vocab_size, size=length)]
        text = " ".join(toks)
        if text in seen:
            continue
        seen.add(text)
        pairs.append(ParallelPair(" ".join(cipher[t] for t in toks), text))
    return pairs


def random_teacher(vocab_size: int = 200, dim: int = 32, seed: int = 1) -> BagEncoder:
    """Frozen randomly initialised bag encoder over the plain cipher vocabulary."""
    vocab = Vocabulary({f"w{i:03d}": i for i in range(vocab_size)}, oov_buckets=1)
    return BagEncoder(init_params(vocab, dim, dim, seed), vocab)


@dataclass
class AlignedDocs:
    src: list[Sentence]
    tgt: list[Sentence]
    gold: list[tuple[tuple[int, ...], tuple[int, ...]]]  # non-empty links only
    encoder: LookupEncoder


def _words(rng, n_chars: int) -> str:
    words = []
    total = -1
    while total < n_chars:
        w = "".join(chr(ord("a") + int(c)) for c in rng.integers(0, 26, size=int(rng.integers(2, 9))))
        words.append(w)
        total += len(w) + 1
    return " ".join(words)


def aligned_documents(n_src: int = 200, merge_frac: float = 0.10, delete_frac: float = 0.05,
                      dim: int = 64, length_noise: float = 0.25, seed: int = 0) -> AlignedDocs:
    """A source document and its "translation" with merged and dropped sentences.

    ``merge_frac`` of target sentences translate two consecutive source
    sentences (2-1 beads); ``delete_frac`` of source sentences have no
    translation. Target lengths follow the source with multiplicative noise.
    The oracle encoder maps each source sentence to a random vector and each
    target to the character-length-weighted mean of its sources.
    """
    rng = np.random.default_rng(seed)
    src_lengths = rng.integers(20, 160, size=n_src)
    src_texts = [f"{_words(rng, int(n))}." for n in src_lengths]
    src_vecs = rng.standard_normal((n_src, dim))

    # walk the source deciding which sentences merge and which are dropped
    groups: list[tuple[int, ...]] = []
    n_tgt_est = n_src * (1 - delete_frac) / (1 + merge_frac)
    p_merge = merge_frac * n_tgt_est / n_src
    i = 0
    while i < n_src:
        u = rng.random()
        if u < delete_frac:
            i += 1
        elif u < delete_frac + p_merge and i + 1 < n_src:
            groups.append((i, i + 1))
            i += 2
        else:
            groups.append((i,))
            i += 1

    tgt_texts, table, gold = [], {}, []
    for j, group in enumerate(groups):
        n_chars = sum(len(src_texts[k]) for k in group)
        noisy = max(5, int(round(n_chars * float(np.exp(rng.normal(0, length_noise))))))
        text = f"{_words(rng, noisy)}."
        tgt_texts.append(text)
        weights = np.array([len(src_texts[k]) for k in group], dtype=np.float64)
        table[text] = (weights[:, None] * src_vecs[list(group)]).sum(axis=0) / weights.sum()
        gold.append((group, (j,)))
    for text, v in zip(src_texts, src_vecs):
        table[text] = v

    src = [Sentence("src", k, t, Language.GRC) for k, t in enumerate(src_texts)]
    tgt = [Sentence("tgt", k, t, Language.EN) for k, t in enumerate(tgt_texts)]
    return AlignedDocs(src, tgt, gold, LookupEncoder(table))
