"""Bag-of-tokens student encoder: mean of token embeddings, then an affine projection.

Parameters are float64 while training so finite-difference checks are
meaningful; checkpoints store them as float32 EMBS blocks.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embed_core import read_matrix, write_matrix

PARAM_NAMES = ("embedding", "projection", "bias")
CKPT_MAGIC = b"GRCK"


def tokenize(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]
    oov_buckets: int = 64

    def __post_init__(self):
        if self.oov_buckets < 1:
            raise ValueError("oov_buckets must be positive")
        if sorted(self.token_to_id.values()) != list(range(len(self.token_to_id))):
            raise ValueError("vocabulary ids must be dense from 0")

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    @property
    def n_rows(self) -> int:
        return self.size + self.oov_buckets

    def token_id(self, token: str) -> int:
        idx = self.token_to_id.get(token)
        if idx is not None:
            return idx
        # crc32 is stable across processes, unlike hash()
        return self.size + zlib.crc32(token.encode("utf-8")) % self.oov_buckets

    def ids(self, text: str, max_tokens: int | None = None) -> list[int]:
        toks = tokenize(text)
        if max_tokens is not None:
            toks = toks[:max_tokens]
        return [self.token_id(t) for t in toks]

    def to_json(self) -> dict:
        return {"tokens": sorted(self.token_to_id, key=self.token_to_id.get), "oov_buckets": self.oov_buckets}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls({t: i for i, t in enumerate(obj["tokens"])}, obj["oov_buckets"])


def build_vocab(corpus: Iterable[str], max_size: int, oov_buckets: int = 64) -> Vocabulary:
    """Most frequent whitespace tokens, ties broken lexicographically."""
    counts = Counter()
    n = 0
    for text in corpus:
        text = getattr(text, "text", text)
        counts.update(tokenize(text))
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if max_size < 1:
        raise ValueError("max_size must be positive")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return Vocabulary({tok: i for i, (tok, _) in enumerate(ranked)}, oov_buckets)


@dataclass
class StudentParams:
    embedding: np.ndarray   # (n_rows, d_in)
    projection: np.ndarray  # (d_in, d_out)
    bias: np.ndarray        # (d_out,)

    def __post_init__(self):
        if self.embedding.shape[1] != self.projection.shape[0] or self.projection.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"inconsistent shapes {self.embedding.shape}, {self.projection.shape}, {self.bias.shape}")

    @property
    def d_in(self) -> int:
        return self.projection.shape[0]

    @property
    def d_out(self) -> int:
        return self.projection.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "StudentParams":
        return StudentParams(*(getattr(self, n).copy() for n in PARAM_NAMES))

    def zeros_like(self) -> "StudentParams":
        return StudentParams(*(np.zeros_like(getattr(self, n)) for n in PARAM_NAMES))


def init_params(vocab: Vocabulary, d_in: int = 64, d_out: int = 64, seed: int = 0) -> StudentParams:
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (d_in + d_out))
    return StudentParams(
        embedding=rng.uniform(-0.05, 0.05, size=(vocab.n_rows, d_in)),
        projection=rng.uniform(-limit, limit, size=(d_in, d_out)),
        bias=np.zeros(d_out),
    )


@dataclass
class ForwardCache:
    ids: list[list[int]]
    pooled: np.ndarray  # (n, d_in)


def encode_batch(params: StudentParams, vocab: Vocabulary, texts: Sequence[str],
                 max_tokens: int | None = None) -> tuple[np.ndarray, ForwardCache]:
    ids = []
    pooled = np.empty((len(texts), params.d_in))
    for i, text in enumerate(texts):
        row = vocab.ids(text, max_tokens)
        if not row:
            raise ValueError(f"empty token sequence: {text!r}")
        ids.append(row)
        pooled[i] = params.embedding[row].mean(axis=0)
    return pooled @ params.projection + params.bias, ForwardCache(ids, pooled)


def backward_batch(params: StudentParams, cache: ForwardCache, upstream: np.ndarray,
                   grads: StudentParams | None = None) -> StudentParams:
    """Accumulate d(sum_i upstream_i . out_i)/d(params) into ``grads``."""
    if grads is None:
        grads = params.zeros_like()
    upstream = np.asarray(upstream, dtype=np.float64).reshape(len(cache.ids), params.d_out)
    grads.projection += cache.pooled.T @ upstream
    grads.bias += upstream.sum(axis=0)
    d_pooled = upstream @ params.projection.T
    for row, g in zip(cache.ids, d_pooled):
        # repeated ids accumulate, so a token seen twice gets twice the gradient
        np.add.at(grads.embedding, row, g / len(row))
    return grads


def encode(params: StudentParams, vocab: Vocabulary, text: str, max_tokens: int | None = None) -> np.ndarray:
    out, _ = encode_batch(params, vocab, [text], max_tokens)
    return out[0]


def encode_backward(params: StudentParams, vocab: Vocabulary, text: str, upstream_grad,
                    max_tokens: int | None = None) -> StudentParams:
    _, cache = encode_batch(params, vocab, [text], max_tokens)
    return backward_batch(params, cache, np.asarray(upstream_grad)[None, :])


class BagEncoder:
    """Encoder-protocol wrapper around frozen student parameters."""

    def __init__(self, params: StudentParams, vocab: Vocabulary, max_tokens: int | None = None):
        self.params = params
        self.vocab = vocab
        self.max_tokens = max_tokens

    @property
    def dim(self) -> int:
        return self.params.d_out

    def encode(self, text: str) -> np.ndarray:
        return encode(self.params, self.vocab, text, self.max_tokens)

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.empty((0, self.dim))
        return encode_batch(self.params, self.vocab, texts, self.max_tokens)[0]


# --- checkpoints -----------------------------------------------------------

def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def save_checkpoint(path: str | Path, params: StudentParams, vocab: Vocabulary,
                    config: dict | None = None, max_tokens: int | None = None):
    """Layout: magic, u64 header length, JSON header, then one EMBS block per matrix."""
    config = config or {}
    matrices = {
        "embedding": params.embedding,
        "projection": params.projection,
        "bias": params.bias[None, :],
    }
    header = {
        "matrices": [{"name": k, "shape": list(v.shape)} for k, v in matrices.items()],
        "vocab": vocab.to_json(),
        "max_tokens": max_tokens,
        "config": config,
        "config_hash": config_hash(config),
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for m in matrices.values():
            write_matrix(fh, m)


def load_checkpoint(path: str | Path) -> tuple[StudentParams, Vocabulary, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        mats = {}
        for entry in header["matrices"]:
            m = read_matrix(fh)
            if list(m.shape) != entry["shape"]:
                raise ValueError(f"{path}: matrix {entry['name']} has shape {m.shape}, header says {entry['shape']}")
            mats[entry["name"]] = m.astype(np.float64)
    params = StudentParams(mats["embedding"], mats["projection"], mats["bias"][0])
    return params, Vocabulary.from_json(header["vocab"]), header


def load_encoder(path: str | Path) -> BagEncoder:
    params, vocab, header = load_checkpoint(path)
    return BagEncoder(params, vocab, header.get("max_tokens"))
