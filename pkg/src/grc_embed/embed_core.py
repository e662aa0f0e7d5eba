"""Vector math, exact nearest-neighbour search and the binary embedding store."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

MAGIC = b"EMBS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class StoreFormatError(ValueError):
    """Base class for unreadable store files."""


class BadMagicError(StoreFormatError):
    pass


class UnsupportedVersionError(StoreFormatError):
    pass


class DimensionMismatchError(StoreFormatError):
    pass


class TruncatedPayloadError(StoreFormatError):
    pass


class IdCountMismatchError(StoreFormatError):
    pass


@runtime_checkable
class Encoder(Protocol):
    """Anything that maps a sentence to a fixed-size vector."""

    dim: int

    def encode(self, text: str) -> np.ndarray: ...


def encode_many(encoder: Encoder, texts: Sequence[str]) -> np.ndarray:
    """Stack encodings into a (len(texts), dim) float64 matrix."""
    batch = getattr(encoder, "encode_batch", None)
    if batch is not None:
        return np.asarray(batch(list(texts)), dtype=np.float64)
    out = np.empty((len(texts), encoder.dim), dtype=np.float64)
    for i, t in enumerate(texts):
        out[i] = encoder.encode(t)
    return out


class LookupEncoder:
    """Encoder backed by a fixed text -> vector table.

    Used for precomputed teacher embeddings and for oracle embeddings in
    tests. Unknown text raises ``KeyError``.
    """

    def __init__(self, table: Mapping[str, np.ndarray]):
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        dims = {v.shape for v in self._table.values()}
        if len(dims) > 1:
            raise ValueError(f"inconsistent vector shapes {sorted(dims)}")
        self.dim = next(iter(dims))[0] if dims else 0

    @classmethod
    def from_store(cls, store: "EmbeddingStore") -> "LookupEncoder":
        return cls(dict(zip(store.ids, store.vectors)))

    def __contains__(self, text: str) -> bool:
        return text in self._table

    def encode(self, text: str) -> np.ndarray:
        try:
            return self._table[text]
        except KeyError:
            raise KeyError(f"no embedding for text {text!r}") from None


def _check_dims(u: np.ndarray, v: np.ndarray):
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dims(u, v)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine of a zero-norm vector is undefined")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosines between rows of ``a`` and rows of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if (na == 0).any() or (nb == 0).any():
        raise ValueError("cosine of a zero-norm vector is undefined")
    return np.clip((a / na[:, None]) @ (b / nb[:, None]).T, -1.0, 1.0)


def mean_pool(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(vectors) == 0:
        raise ValueError("mean_pool of an empty list")
    arrs = [np.asarray(v) for v in vectors]
    shape = arrs[0].shape
    for a in arrs[1:]:
        _check_dims(arrs[0], a)
    return np.mean(np.stack(arrs), axis=0).reshape(shape)


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Immutable id-addressed float32 matrix."""

    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=np.float32, copy=True)
        if vecs.ndim != 2:
            raise ValueError("vectors must be a 2-d matrix")
        ids = tuple(self.ids)
        if len(ids) != vecs.shape[0]:
            raise ValueError(f"{len(ids)} ids for {vecs.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in store")
        if not np.isfinite(vecs).all():
            raise ValueError("store vectors must be finite")
        vecs.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def from_texts(cls, encoder: Encoder, ids: Sequence[str], texts: Sequence[str]) -> "EmbeddingStore":
        return cls(tuple(ids), encode_many(encoder, texts))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return self.ids == other.ids and self.vectors.tobytes() == other.vectors.tobytes() \
            and self.vectors.shape == other.vectors.shape

    def get(self, id_: str) -> np.ndarray:
        return self.vectors[self.ids.index(id_)]


def nearest_neighbors(query, store: EmbeddingStore, k: int) -> list[tuple[str, float]]:
    """Top-k store entries by cosine to ``query``; ties keep insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(store) == 0:
        return []
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (store.dim,):
        raise ValueError(f"dimension mismatch: query {q.shape} vs store dim {store.dim}")
    scores = cosine_matrix(q[None, :], store.vectors)[0]
    order = np.argsort(-scores, kind="stable")[:k]
    return [(store.ids[i], float(scores[i])) for i in order]


# --- binary format ---------------------------------------------------------

def write_matrix(fh, matrix: np.ndarray):
    """Write one EMBS block (header + little-endian float32 rows)."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.isfinite(m).all():
        raise ValueError("refusing to write non-finite values")
    fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, m.shape[1], m.shape[0]))
    fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_matrix(fh, expected_dim: int | None = None) -> np.ndarray:
    head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        if len(head) >= 4 and head[:4] != MAGIC:
            raise BadMagicError("bad magic")
        raise TruncatedPayloadError("truncated header")
    magic, version, dim, count = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagicError("bad magic")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(f"dim {dim} != expected {expected_dim}")
    nbytes = 4 * dim * count
    payload = fh.read(nbytes)
    if len(payload) != nbytes:
        raise TruncatedPayloadError(f"payload has {len(payload)} of {nbytes} bytes")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(count, dim)


def ids_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids")


def store_write(store: EmbeddingStore, path: str | Path):
    """Write ``path`` (binary) and ``path.ids`` (one id per line)."""
    for i in store.ids:
        if "\n" in i or "\r" in i:
            raise ValueError(f"id contains a line break: {i!r}")
    with open(path, "wb") as fh:
        write_matrix(fh, store.vectors)
    with open(ids_path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(i + "\n" for i in store.ids)


def store_read(path: str | Path, expected_dim: int | None = None) -> EmbeddingStore:
    with open(path, "rb") as fh:
        vecs = read_matrix(fh, expected_dim)
        if fh.read(1):
            raise StoreFormatError("trailing bytes after payload")
    with open(ids_path(path), encoding="utf-8", newline="\n") as fh:
        ids = fh.read().split("\n")
    if ids and ids[-1] == "":
        ids.pop()
    if len(ids) != vecs.shape[0]:
        raise IdCountMismatchError(f"{len(ids)} ids for {vecs.shape[0]} rows")
    return EmbeddingStore(tuple(ids), vecs)
