"""Two-stage monotone sentence alignment.

Stage 1 (``length_dict_align``) scores beads with a Gale-Church length model
blended with bilingual-dictionary coverage. Stage 2 (``embed_align``) finds
high-confidence 1-1 anchors in the cosine matrix of sentence embeddings,
then runs a bead DP in a corridor around the anchor path.

Both share ``bead_dp``: a minimum-cost monotone path over the
(n_src+1) x (n_tgt+1) lattice where a bead of shape (a, b) consumes a source
and b target sentences.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .embed_core import Encoder, encode_many
from .text_prep import ParallelPair, Sentence, normalize_greek

Bead = tuple[int, int]

# Gale & Church (1993) bead priors
BEAD_PRIORS = {(1, 1): 0.89, (1, 0): 0.0099, (0, 1): 0.0099, (2, 1): 0.089, (1, 2): 0.089, (2, 2): 0.011}
_UNLISTED_PRIOR = 0.001


@dataclass(frozen=True)
class AlignmentLink:
    src_indices: tuple[int, ...]
    tgt_indices: tuple[int, ...]
    score: float

    def __post_init__(self):
        if not self.src_indices and not self.tgt_indices:
            raise ValueError("a link needs at least one sentence")
        for side in (self.src_indices, self.tgt_indices):
            if side and tuple(side) != tuple(range(side[0], side[0] + len(side))):
                raise ValueError(f"link indices must be contiguous: {side}")

    @property
    def is_gap(self) -> bool:
        return not self.src_indices or not self.tgt_indices

    def shifted(self, ds: int, dt: int) -> "AlignmentLink":
        return AlignmentLink(tuple(i + ds for i in self.src_indices), tuple(j + dt for j in self.tgt_indices), self.score)


@dataclass
class AlignConfig:
    max_bead: int = 2
    score_threshold: float = 0.5
    dict_weight: float = 0.5
    gap_penalty: float = 2.0
    mean_ratio: float = 1.0     # Gale-Church c
    variance: float = 6.8       # Gale-Church s^2
    dict_cost: float = 3.0      # cost of a bead with zero dictionary coverage
    search_window: int = 5      # corridor half-width around the anchor path
    reencode: bool = False      # embed multi-sentence segments by re-encoding joined text

    def __post_init__(self):
        if self.max_bead < 1:
            raise ValueError("max_bead must be positive")
        if not 0.0 <= self.dict_weight <= 1.0:
            raise ValueError("dict_weight must be in [0, 1]")
        if self.variance <= 0 or self.mean_ratio <= 0:
            raise ValueError("Gale-Church parameters must be positive")
        if self.search_window < 0:
            raise ValueError("search_window must be >= 0")

    @classmethod
    def stage2(cls, **kw) -> "AlignConfig":
        kw.setdefault("max_bead", 3)
        return cls(**kw)


def bead_shapes(max_bead: int) -> list[Bead]:
    """1-1 first, then the two gap beads, then larger beads by size."""
    multi = [(a, b) for a in range(1, max_bead + 1) for b in range(1, max_bead + 1) if (a, b) != (1, 1)]
    return [(1, 1), (1, 0), (0, 1)] + sorted(multi, key=lambda ab: (ab[0] + ab[1], ab[0]))


def bead_dp(n_src: int, n_tgt: int, beads: Sequence[Bead], cost: Callable[[int, int, int, int], float],
            allowed: np.ndarray | None = None) -> tuple[list[tuple[int, int, int, int]], float]:
    """Minimum-cost monotone bead path from (0, 0) to (n_src, n_tgt).

    ``cost(i, j, a, b)`` prices the bead covering source [i, i+a) and target
    [j, j+b). ``allowed`` optionally masks lattice points. Returns the beads
    as (i, j, a, b) tuples and the total cost. Ties prefer the bead listed
    first in ``beads``.
    """
    inf = math.inf
    best = np.full((n_src + 1, n_tgt + 1), inf)
    back = np.full((n_src + 1, n_tgt + 1), -1, dtype=np.int64)
    best[0, 0] = 0.0
    for i in range(n_src + 1):
        for j in range(n_tgt + 1):
            if (i == 0 and j == 0) or (allowed is not None and not allowed[i, j]):
                continue
            cur, arg = inf, -1
            for k, (a, b) in enumerate(beads):
                pi, pj = i - a, j - b
                if pi < 0 or pj < 0:
                    continue
                prev = best[pi, pj]
                if prev == inf:
                    continue
                c = prev + cost(pi, pj, a, b)
                if c < cur:
                    cur, arg = c, k
            best[i, j] = cur
            back[i, j] = arg
    if best[n_src, n_tgt] == inf:
        raise ValueError("no monotone alignment reaches the end of both documents")
    path = []
    i, j = n_src, n_tgt
    while i or j:
        a, b = beads[back[i, j]]
        i, j = i - a, j - b
        path.append((i, j, a, b))
    path.reverse()
    return path, float(best[n_src, n_tgt])


def _links_from_path(path, scores) -> list[AlignmentLink]:
    return [AlignmentLink(tuple(range(i, i + a)), tuple(range(j, j + b)), float(s))
            for (i, j, a, b), s in zip(path, scores)]


# --- stage 1 ---------------------------------------------------------------

_PUNCT = re.compile(r"[^\w]+")


def _content_tokens(text: str) -> list[str]:
    return [t for t in (_PUNCT.sub("", tok) for tok in text.lower().split()) if t]


@dataclass(frozen=True)
class BilingualDictionary:
    entries: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        partners: dict[str, set[str]] = {}
        for s, t in self.entries:
            partners.setdefault(s, set()).add(t)
        object.__setattr__(self, "_partners", partners)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "BilingualDictionary":
        """Source side is Greek-normalized, target side lowercased."""
        return cls(frozenset((normalize_greek(s), t.lower().strip()) for s, t in pairs if s.strip() and t.strip()))

    def __len__(self) -> int:
        return len(self.entries)

    def coverage(self, src_text: str, tgt_text: str) -> float:
        """Fraction of source tokens with a dictionary partner among the target tokens."""
        src = _content_tokens(normalize_greek(src_text))
        if not src:
            return 0.0
        tgt = set(_content_tokens(tgt_text))
        hits = sum(1 for tok in src if self._partners.get(tok, set()) & tgt)
        return hits / len(src)


def read_dictionary(path: str | Path) -> BilingualDictionary:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and not r[0].startswith("#")]
    return BilingualDictionary.from_pairs((r[0], r[1]) for r in rows if len(r) >= 2)


def gale_church_cost(src_chars: int, tgt_chars: int, mean_ratio: float = 1.0, variance: float = 6.8) -> float:
    """-log P(|delta| >= observed) under the Gaussian length-ratio model."""
    if src_chars <= 0:
        return 0.0 if tgt_chars <= 0 else math.inf
    delta = (tgt_chars - src_chars * mean_ratio) / math.sqrt(src_chars * variance)
    p = math.erfc(abs(delta) / math.sqrt(2.0))
    return -math.log(max(p, 1e-300))


class LengthDictScorer:
    """Bead costs for stage 1; gap beads cost ``gap_penalty``."""

    def __init__(self, src: Sequence[str], tgt: Sequence[str], dictionary: BilingualDictionary, cfg: AlignConfig):
        self.src, self.tgt, self.dictionary, self.cfg = src, tgt, dictionary, cfg
        self.src_len = np.concatenate([[0], np.cumsum([len(s) for s in src])])
        self.tgt_len = np.concatenate([[0], np.cumsum([len(t) for t in tgt])])
        # an empty dictionary carries no evidence; fall back to length only
        self.weight = cfg.dict_weight if len(dictionary) else 0.0

    def __call__(self, i: int, j: int, a: int, b: int) -> float:
        if a == 0 or b == 0:
            return self.cfg.gap_penalty
        return -math.log(BEAD_PRIORS.get((a, b), _UNLISTED_PRIOR)) + self.evidence_cost(i, j, a, b)

    def evidence_cost(self, i: int, j: int, a: int, b: int) -> float:
        """Bead cost without the bead-type prior (gap beads: the gap penalty)."""
        cfg = self.cfg
        if a == 0 or b == 0:
            return cfg.gap_penalty
        cost = 0.0
        if self.weight < 1.0:
            l1 = int(self.src_len[i + a] - self.src_len[i])
            l2 = int(self.tgt_len[j + b] - self.tgt_len[j])
            cost += (1 - self.weight) * gale_church_cost(l1, l2, cfg.mean_ratio, cfg.variance)
        if self.weight > 0.0:
            f = self.dictionary.coverage(" ".join(self.src[i:i + a]), " ".join(self.tgt[j:j + b]))
            cost += self.weight * cfg.dict_cost * (1.0 - f)
        return cost


def _texts(sentences: Sequence) -> list[str]:
    return [getattr(s, "text", s) for s in sentences]


def length_dict_align(src: Sequence[Sentence], tgt: Sequence[Sentence],
                      dictionary: BilingualDictionary | None = None,
                      cfg: AlignConfig | None = None) -> list[AlignmentLink]:
    """Stage-1 aligner.

    Link score is exp(-cost) with the bead-type prior left out, so a 2-1 bead
    with a perfect length ratio scores as high as a perfect 1-1 bead.
    """
    if not src or not tgt:
        raise ValueError("cannot align an empty document")
    cfg = cfg or AlignConfig()
    scorer = LengthDictScorer(_texts(src), _texts(tgt), dictionary or BilingualDictionary(), cfg)
    path, _ = bead_dp(len(src), len(tgt), bead_shapes(cfg.max_bead), scorer)
    return _links_from_path(path, [math.exp(-scorer.evidence_cost(*bead)) for bead in path])


# --- stage 2 ---------------------------------------------------------------

class SegmentSimilarity:
    """Cosine between contiguous source and target spans of up to ``max_bead`` sentences."""

    def __init__(self, src_texts, tgt_texts, src_vecs, tgt_vecs, max_bead: int, encoder: Encoder | None = None):
        self.tables: dict[Bead, np.ndarray] = {}
        src_spans = {k: self._spans(src_texts, src_vecs, k, encoder) for k in range(1, max_bead + 1)}
        tgt_spans = {k: self._spans(tgt_texts, tgt_vecs, k, encoder) for k in range(1, max_bead + 1)}
        for a in range(1, max_bead + 1):
            for b in range(1, max_bead + 1):
                sa, tb = src_spans[a], tgt_spans[b]
                if len(sa) and len(tb):
                    self.tables[(a, b)] = np.clip(sa @ tb.T, -1.0, 1.0)

    @staticmethod
    def _spans(texts, vecs, k, encoder):
        n = len(texts)
        if n < k:
            return np.empty((0, vecs.shape[1]))
        if k == 1 or encoder is None:
            lengths = np.array([len(t) for t in texts], dtype=np.float64)
            out = np.stack([
                (lengths[i:i + k, None] * vecs[i:i + k]).sum(axis=0) / lengths[i:i + k].sum()
                for i in range(n - k + 1)])
        else:
            out = encode_many(encoder, [" ".join(texts[i:i + k]) for i in range(n - k + 1)])
        norms = np.linalg.norm(out, axis=1)
        if (norms == 0).any():
            raise ValueError("zero-norm sentence embedding")
        return out / norms[:, None]

    def __call__(self, i: int, j: int, a: int, b: int) -> float:
        if a == 0 or b == 0:
            return 0.0
        return float(self.tables[(a, b)][i, j])


def find_anchors(sims: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Maximum-weight strictly monotone chain of mutual-best cells scoring >= threshold."""
    row_best = sims.argmax(axis=1)
    col_best = sims.argmax(axis=0)
    cands = [(i, int(j)) for i, j in enumerate(row_best) if col_best[j] == i and sims[i, j] >= threshold]
    if not cands:
        return []
    # mutual-best cells have distinct rows and columns; cands are sorted by row
    total = [sims[i, j] for i, j in cands]
    prev = [-1] * len(cands)
    for k, (i, j) in enumerate(cands):
        for p in range(k):
            pi, pj = cands[p]
            if pj < j and total[p] + sims[i, j] > total[k]:
                total[k] = total[p] + sims[i, j]
                prev[k] = p
    k = int(np.argmax(total))
    chain = []
    while k != -1:
        chain.append(cands[k])
        k = prev[k]
    return chain[::-1]


def anchor_corridor(n_src: int, n_tgt: int, anchors: Sequence[tuple[int, int]], window: int) -> np.ndarray:
    """Lattice mask of points within ``window`` of the piecewise-linear anchor path."""
    xs = [0.0] + [i + 1.0 for i, _ in anchors] + [float(n_src)]
    ys = [0.0] + [j + 1.0 for _, j in anchors] + [float(n_tgt)]
    ii = np.arange(n_src + 1, dtype=np.float64)
    jj = np.arange(n_tgt + 1, dtype=np.float64)
    center_j = np.interp(ii, xs, ys)
    center_i = np.interp(jj, ys, xs)
    mask = np.abs(jj[None, :] - center_j[:, None]) <= window
    mask |= np.abs(ii[:, None] - center_i[None, :]) <= window
    return mask


def embed_align(src: Sequence[Sentence], tgt: Sequence[Sentence], encoder: Encoder,
                cfg: AlignConfig | None = None) -> list[AlignmentLink]:
    """Stage-2 aligner. Link score is the cosine of the bead's segment embeddings (0 for gaps)."""
    if not src or not tgt:
        raise ValueError("cannot align an empty document")
    cfg = cfg or AlignConfig.stage2()
    src_texts, tgt_texts = _texts(src), _texts(tgt)
    src_vecs = encode_many(encoder, src_texts)
    tgt_vecs = encode_many(encoder, tgt_texts)
    if src_vecs.shape[1] != tgt_vecs.shape[1]:
        raise ValueError("source and target embeddings differ in dimension")
    sim = SegmentSimilarity(src_texts, tgt_texts, src_vecs, tgt_vecs, cfg.max_bead,
                            encoder if cfg.reencode else None)
    anchors = find_anchors(sim.tables[(1, 1)], cfg.score_threshold)
    beads = bead_shapes(cfg.max_bead)
    cost = lambda i, j, a, b: -sim(i, j, a, b)  # noqa: E731
    mask = anchor_corridor(len(src), len(tgt), anchors, cfg.search_window) if anchors else None
    try:
        path, _ = bead_dp(len(src), len(tgt), beads, cost, mask)
    except ValueError:
        path, _ = bead_dp(len(src), len(tgt), beads, cost)
    return _links_from_path(path, [sim(*bead) for bead in path])


# --- sections, filtering, I/O ----------------------------------------------

METHODS = ("length-dict", "embed")


def _section_bounds(starts: Sequence[int], n: int) -> list[tuple[int, int]]:
    bounds = list(starts) + [n]
    return list(zip(bounds, bounds[1:]))


def align_sections(src: Sequence[Sentence], tgt: Sequence[Sentence],
                   src_sections: Sequence[int] | None, tgt_sections: Sequence[int] | None,
                   method: str = "embed", *, encoder: Encoder | None = None,
                   dictionary: BilingualDictionary | None = None,
                   cfg: AlignConfig | None = None) -> list[AlignmentLink]:
    """Align section by section when both sides carry sections, else the whole text.

    ``*_sections`` hold the index of the first sentence of each section.
    Returned links use document-global indices and never cross a section.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "embed" and encoder is None:
        raise ValueError("embedding alignment needs an encoder")

    def run(s, t):
        if not s or not t:
            return [AlignmentLink((k,), (), 0.0) for k in range(len(s))] + \
                   [AlignmentLink((), (k,), 0.0) for k in range(len(t))]
        if method == "embed":
            return embed_align(s, t, encoder, cfg)
        return length_dict_align(s, t, dictionary, cfg)

    if not src_sections or not tgt_sections:
        return run(list(src), list(tgt))
    if len(src_sections) != len(tgt_sections):
        raise ValueError(f"section counts differ: {len(src_sections)} source vs {len(tgt_sections)} target")
    links = []
    for (s0, s1), (t0, t1) in zip(_section_bounds(src_sections, len(src)), _section_bounds(tgt_sections, len(tgt))):
        links.extend(link.shifted(s0, t0) for link in run(list(src[s0:s1]), list(tgt[t0:t1])))
    return links


def filter_links(links: Sequence[AlignmentLink], threshold: float) -> list[AlignmentLink]:
    return [link for link in links if link.score >= threshold]


def link_f1(predicted: Iterable[AlignmentLink], gold: Iterable[tuple[Sequence[int], Sequence[int]]]) -> float:
    """Exact-match F1 over links with both sides non-empty."""
    pred = {(tuple(l.src_indices), tuple(l.tgt_indices)) for l in predicted if not l.is_gap}
    ref = {(tuple(s), tuple(t)) for s, t in gold if len(s) and len(t)}
    if not pred or not ref:
        return 0.0
    tp = len(pred & ref)
    if tp == 0:
        return 0.0
    p, r = tp / len(pred), tp / len(ref)
    return 2 * p * r / (p + r)


def links_to_pairs(links: Sequence[AlignmentLink], src: Sequence[Sentence], tgt: Sequence[Sentence]) -> list[ParallelPair]:
    src_texts, tgt_texts = _texts(src), _texts(tgt)
    return [ParallelPair(" ".join(src_texts[i] for i in l.src_indices), " ".join(tgt_texts[j] for j in l.tgt_indices),
                         l.score) for l in links if not l.is_gap]


ALIGNMENT_COLUMNS = ["src_doc", "src_indices", "tgt_doc", "tgt_indices", "score"]


def write_alignment(path: str | Path, links: Sequence[AlignmentLink], src_doc: str, tgt_doc: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(ALIGNMENT_COLUMNS)
        for l in links:
            w.writerow([src_doc, ",".join(map(str, l.src_indices)), tgt_doc,
                        ",".join(map(str, l.tgt_indices)), repr(float(l.score))])


def read_alignment(path: str | Path) -> list[AlignmentLink]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or rows[0] != ALIGNMENT_COLUMNS:
        raise ValueError(f"{path}: expected header {ALIGNMENT_COLUMNS}")
    parse = lambda s: tuple(int(x) for x in s.split(",") if x)  # noqa: E731
    return [AlignmentLink(parse(r[1]), parse(r[3]), float(r[4])) for r in rows[1:]]
