"""Evaluation metrics: translation search, STS, retrieval, translation-bias MRR, tokenizer stats.

All rankings break ties stably (earlier index / earlier candidate wins) so
every metric is deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .embed_core import EmbeddingStore, Encoder, cosine_matrix, encode_many, nearest_neighbors

AVG_CANDIDATE = "avg-embedding"

# cosines closer than this are ties; exact ties otherwise split on rounding noise
TIE_TOL = 1e-12


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, EmbeddingStore):
        return x.vectors.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def translation_search_accuracy(src_embs, tgt_embs) -> float:
    """Mean of source->target and target->source top-1 accuracy over aligned rows."""
    src, tgt = _as_matrix(src_embs), _as_matrix(tgt_embs)
    if src.shape[0] != tgt.shape[0]:
        raise ValueError(f"count mismatch: {src.shape[0]} sources vs {tgt.shape[0]} targets")
    n = src.shape[0]
    if n == 0:
        raise ValueError("no pairs to evaluate")
    sims = cosine_matrix(src, tgt)
    idx = np.arange(n)
    forward = np.mean(_first_argmax(sims) == idx)
    backward = np.mean(_first_argmax(sims.T) == idx)
    return float((forward + backward) / 2)


def _first_argmax(sims: np.ndarray) -> np.ndarray:
    """Per row, the first column within TIE_TOL of the row maximum."""
    near = sims >= sims.max(axis=1, keepdims=True) - TIE_TOL
    return np.argmax(near, axis=1)


def _tie_aware_order(scores: np.ndarray) -> list[int]:
    """Indices by descending score; scores within TIE_TOL of a group's best keep index order."""
    order = list(np.argsort(-scores, kind="stable"))
    out = []
    while order:
        lead = scores[order[0]]
        group = [k for k in order if scores[k] >= lead - TIE_TOL]
        out.extend(sorted(group))
        order = [k for k in order if scores[k] < lead - TIE_TOL]
    return out


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("spearman needs at least two observations")
    rx = rankdata(x) - (x.size + 1) / 2
    ry = rankdata(y) - (y.size + 1) / 2
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        raise ValueError("spearman undefined for constant input")
    return float(np.clip(rx @ ry / denom, -1.0, 1.0))


# --- STS -------------------------------------------------------------------

@dataclass(frozen=True)
class StsItem:
    a_grc: str
    a_en: str
    b_grc: str
    b_en: str
    gold: float

    def __post_init__(self):
        if not 0.0 <= self.gold <= 1.0:
            raise ValueError(f"gold score {self.gold} outside [0, 1]")
        if not all((self.a_grc, self.a_en, self.b_grc, self.b_en)):
            raise ValueError("STS texts must be non-empty")


@dataclass
class EvalReport:
    metrics: dict[str, float]
    model_id: str = ""
    dataset_hash: str = ""
    timestamp: str = field(default_factory=lambda: report_timestamp())
    counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {
            "metrics": self.metrics,
            "counts": self.counts,
            "metadata": {"model_id": self.model_id, "dataset_hash": self.dataset_hash, "timestamp": self.timestamp},
        }
        return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


REPORT_SCHEMA = {
    "type": "object",
    "required": ["metrics", "counts", "metadata"],
    "properties": {
        "metrics": {"type": "object", "additionalProperties": {"type": "number"}},
        "counts": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "metadata": {
            "type": "object",
            "required": ["model_id", "dataset_hash", "timestamp"],
            "properties": {
                "model_id": {"type": "string"},
                "dataset_hash": {"type": "string"},
                "timestamp": {"type": "string"},
            },
        },
    },
}


def report_timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible reports
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def sts_comparisons(items: Sequence[StsItem]) -> dict[str, list[tuple[str, str, float]]]:
    """Text pairs compared for each STS setting; GRC-EN uses both crossings."""
    return {
        "grc_grc": [(it.a_grc, it.b_grc, it.gold) for it in items],
        "en_en": [(it.a_en, it.b_en, it.gold) for it in items],
        "grc_en": [(it.a_grc, it.b_en, it.gold) for it in items] + [(it.a_en, it.b_grc, it.gold) for it in items],
    }


def sts_eval(items: Sequence[StsItem], encoder: Encoder, model_id: str = "") -> EvalReport:
    if not items:
        raise ValueError("no STS items")
    cache: dict[str, np.ndarray] = {}
    for i, it in enumerate(items):
        for text in (it.a_grc, it.a_en, it.b_grc, it.b_en):
            if text not in cache:
                try:
                    cache[text] = np.asarray(encoder.encode(text), dtype=np.float64)
                except Exception as exc:
                    raise ValueError(f"STS item {i}: encoder failed on {text!r}: {exc}") from exc
    metrics, counts = {}, {}
    for name, comps in sts_comparisons(items).items():
        a = np.stack([cache[x] for x, _, _ in comps])
        b = np.stack([cache[y] for _, y, _ in comps])
        cos = np.sum((a / np.linalg.norm(a, axis=1)[:, None]) * (b / np.linalg.norm(b, axis=1)[:, None]), axis=1)
        metrics[name] = 100 * spearman([g for _, _, g in comps], cos)
        counts[name] = len(comps)
    metrics["average"] = float(np.mean([metrics["grc_grc"], metrics["en_en"], metrics["grc_en"]]))
    return EvalReport(metrics, model_id=model_id, dataset_hash=dataset_hash(
        [(it.a_grc, it.a_en, it.b_grc, it.b_en, repr(it.gold)) for it in items]), counts=counts)


STS_COLUMNS = ["a_grc", "a_en", "b_grc", "b_en", "gold"]


def read_sts(path: str | Path) -> list[StsItem]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise ValueError(f"{path}: empty STS file")
    header = rows[0]
    missing = [c for c in STS_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s): {', '.join(missing)}")
    col = [header.index(c) for c in STS_COLUMNS]
    return [StsItem(*(r[c] for c in col[:4]), float(r[col[4]])) for r in rows[1:]]


# --- retrieval -------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalQuery:
    query_text: str
    relevant_ids: frozenset[str]

    def __post_init__(self):
        if not self.relevant_ids:
            raise ValueError("a query needs at least one relevant passage")


def recall_at_k(ranked_ids: Sequence[str], relevant, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    return len(set(ranked_ids[:k]) & relevant) / len(relevant)


def map_at_k(ranked_ids: Sequence[str], relevant, k: int) -> float:
    """Average precision at k for one query, normalized by min(|relevant|, k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    hits, total = 0, 0.0
    for i, doc in enumerate(ranked_ids[:k], start=1):
        if doc in relevant:
            hits += 1
            total += hits / i
    return total / min(len(relevant), k)


average_precision_at_k = map_at_k


def retrieval_eval(queries: Sequence[RetrievalQuery], passages: EmbeddingStore, encoder: Encoder,
                   ks: Sequence[int] = (10, 20), model_id: str = "") -> EvalReport:
    """Per-query recall@k and AP@k, averaged over queries (x100)."""
    if not queries:
        raise ValueError("no queries")
    known = set(passages.ids)
    for q in queries:
        unknown = q.relevant_ids - known
        if unknown:
            raise ValueError(f"query {q.query_text!r}: unknown passage ids {sorted(unknown)}")
    kmax = max(ks)
    metrics = {f"recall@{k}": 0.0 for k in ks} | {f"map@{k}": 0.0 for k in ks}
    for q in queries:
        ranked = [pid for pid, _ in nearest_neighbors(encoder.encode(q.query_text), passages, kmax)]
        for k in ks:
            metrics[f"recall@{k}"] += recall_at_k(ranked, q.relevant_ids, k)
            metrics[f"map@{k}"] += map_at_k(ranked, q.relevant_ids, k)
    metrics = {name: 100 * v / len(queries) for name, v in metrics.items()}
    return EvalReport(metrics, model_id=model_id,
                      dataset_hash=dataset_hash([(q.query_text, *sorted(q.relevant_ids)) for q in queries]),
                      counts={"queries": len(queries), "passages": len(passages)})


def read_passages(path: str | Path) -> tuple[list[str], list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or rows[0][:2] != ["id", "text"]:
        raise ValueError(f"{path}: expected header 'id<TAB>text'")
    return [r[0] for r in rows[1:]], [r[1] for r in rows[1:]]


def read_queries(path: str | Path) -> list[RetrievalQuery]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or rows[0][:2] != ["query", "relevant_ids"]:
        raise ValueError(f"{path}: expected header 'query<TAB>relevant_ids'")
    return [RetrievalQuery(r[0], frozenset(x for x in r[1].split(",") if x)) for r in rows[1:]]


# --- translation bias ------------------------------------------------------

@dataclass(frozen=True)
class BiasCorpus:
    greek_verses: tuple[str, ...]
    translations: dict[str, tuple[str, ...]]

    def __post_init__(self):
        for name, verses in self.translations.items():
            if len(verses) != len(self.greek_verses):
                raise ValueError(
                    f"translation {name!r} has {len(verses)} verses, Greek has {len(self.greek_verses)}")
        if AVG_CANDIDATE in self.translations:
            raise ValueError(f"{AVG_CANDIDATE!r} is reserved")


def mrr_from_embeddings(greek: np.ndarray, candidates: Mapping[str, np.ndarray]) -> dict[str, float]:
    """Per-candidate MRR; candidates are ranked per verse by cosine to the Greek row.

    Equal scores (within TIE_TOL) keep the mapping's order, so each verse
    hands out ranks 1..m.
    """
    greek = np.asarray(greek, dtype=np.float64)
    names = list(candidates)
    if not names:
        raise ValueError("no candidates")
    n = greek.shape[0]
    if n == 0:
        raise ValueError("no verses")
    sims = np.empty((n, len(names)))
    for c, name in enumerate(names):
        mat = np.asarray(candidates[name], dtype=np.float64)
        if mat.shape != greek.shape:
            raise ValueError(f"candidate {name!r} has shape {mat.shape}, expected {greek.shape}")
        g = greek / np.linalg.norm(greek, axis=1)[:, None]
        m = mat / np.linalg.norm(mat, axis=1)[:, None]
        sims[:, c] = np.sum(g * m, axis=1)
    ranks = np.empty((n, len(names)), dtype=np.int64)
    for v in range(n):
        ranks[v, _tie_aware_order(sims[v])] = np.arange(1, len(names) + 1)
    rr = 1.0 / ranks
    return {name: float(rr[:, c].mean()) for c, name in enumerate(names)}


def mrr_bias(corpus: BiasCorpus, encoder: Encoder) -> dict[str, float]:
    """MRR of every translation and of the per-verse averaged translation embedding."""
    greek = encode_many(encoder, corpus.greek_verses)
    cands = {name: encode_many(encoder, verses) for name, verses in corpus.translations.items()}
    cands[AVG_CANDIDATE] = np.mean(np.stack(list(cands.values())), axis=0)
    return mrr_from_embeddings(greek, cands)


def read_bias_corpus(greek_path: str | Path, translation_paths: Mapping[str, str | Path]) -> BiasCorpus:
    """One single-column TSV per text (header ``text``), verse-aligned by row."""
    def load(p):
        with open(p, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh, delimiter="\t"))
        if not rows or rows[0][0] != "text":
            raise ValueError(f"{p}: expected header 'text'")
        return tuple(r[0] for r in rows[1:])
    return BiasCorpus(load(greek_path), {name: load(p) for name, p in translation_paths.items()})


# --- tokenizer statistics --------------------------------------------------

def tokenizer_metrics(tokenize: Callable[[str], Sequence[str]], sample: Sequence[str]) -> tuple[float, float]:
    """(characters per token, whitespace words per token) over a text sample."""
    if not sample:
        raise ValueError("empty sample")
    n_tokens = n_chars = n_words = 0
    for text in sample:
        text = getattr(text, "text", text)
        toks = list(tokenize(text))
        if text.strip() and not toks:
            raise ValueError(f"tokenizer produced no tokens for {text!r}")
        n_tokens += len(toks)
        n_chars += sum(len(t) for t in toks)
        n_words += len(text.split())
    if n_tokens == 0:
        raise ValueError("tokenizer produced no tokens")
    return n_chars / n_tokens, n_words / n_tokens


def dataset_hash(rows) -> str:
    h = hashlib.sha256()
    for row in rows:
        h.update("\t".join(row).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]
