"""Normalization and sentence segmentation for Greek and English text.

Greek text is lowercased and stripped of diacritics before segmentation.
Segments keep their terminating punctuation; the aligner downstream is
happy with sub-sentence pieces, so the rules err on the side of splitting.
"""

from __future__ import annotations

import csv
import enum
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class Language(str, enum.Enum):
    GRC = "GRC"
    EN = "EN"
    EL = "EL"


@dataclass(frozen=True)
class RawDocument:
    id: str
    language: Language
    text: str
    section_breaks: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.section_breaks is not None:
            prev = -1
            for off in self.section_breaks:
                if off <= prev:
                    raise ValueError(f"{self.id}: section breaks must be strictly increasing")
                if off < 0 or off > len(self.text):
                    raise ValueError(f"{self.id}: section break {off} outside text")
                prev = off

    def sections(self) -> list[str]:
        """Split the text at the section breaks (whole text if there are none)."""
        if not self.section_breaks:
            return [self.text]
        bounds = [0, *[b for b in self.section_breaks if b > 0], len(self.text)]
        return [self.text[a:b] for a, b in zip(bounds, bounds[1:])]


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str
    language: Language = Language.GRC


@dataclass(frozen=True)
class ParallelPair:
    source: str
    target: str
    score: float = 1.0


DEFAULT_ABBREVIATIONS = (
    "Mr.", "Mrs.", "Ms.", "Dr.", "St.", "Prof.", "Gen.", "Col.", "Lt.",
    "Jr.", "Sr.", "vs.", "cf.", "e.g.", "i.e.", "viz.", "ch.", "vol.", "p.", "pp.",
)


@dataclass(frozen=True)
class SegmentationConfig:
    colon_as_raised_dot: bool = False
    english_abbreviations: tuple[str, ...] = field(default=DEFAULT_ABBREVIATIONS)

    def __post_init__(self):
        if any(not a for a in self.english_abbreviations):
            raise ValueError("abbreviation entries must be non-empty")


_WS = re.compile(r"\s+")

# U+037E (Greek question mark) and U+0387 (ano teleia) are canonical
# equivalents of ';' and U+00B7; accept both spellings.
GREEK_TERMINATORS = frozenset(".;\u037e\u00b7\u0387")


def collapse_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def normalize_greek(text: str) -> str:
    """Lowercase, strip combining diacritics, keep punctuation.

    >>> normalize_greek("ὁ Ζεὺς οἰκεῖ ἐπὶ τὰ ὄρη·")
    'ο ζευς οικει επι τα ορη·'
    """
    decomposed = unicodedata.normalize("NFD", text.lower())
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return collapse_whitespace(unicodedata.normalize("NFC", stripped))


def _split_after(text: str, is_boundary) -> list[str]:
    """Cut ``text`` after every maximal run of characters where ``is_boundary`` holds."""
    pieces = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if is_boundary(text, i):
            j = i + 1
            while j < n and is_boundary(text, j):
                j += 1
            pieces.append(text[start:j])
            start = i = j
        else:
            i += 1
    pieces.append(text[start:])
    return [p for p in (collapse_whitespace(p) for p in pieces) if p]


def _to_sentences(pieces: Iterable[str], doc_id: str, language: Language, start: int = 0) -> list[Sentence]:
    return [Sentence(doc_id, start + i, p, language) for i, p in enumerate(pieces)]


def split_greek(text: str, cfg: SegmentationConfig | None = None) -> list[str]:
    cfg = cfg or SegmentationConfig()
    terms = GREEK_TERMINATORS | {":"} if cfg.colon_as_raised_dot else GREEK_TERMINATORS
    return _split_after(text, lambda s, i: s[i] in terms)


def segment_greek(
    text: str,
    cfg: SegmentationConfig | None = None,
    doc_id: str = "",
    language: Language = Language.GRC,
) -> list[Sentence]:
    """Segment normalized Greek at '.', ';' and '·' (and ':' in colon mode)."""
    return _to_sentences(split_greek(text, cfg), doc_id, language)


_OPENERS = "\"'“‘([«"
_CLOSERS = "\"'”’)]»"


def _english_sentences(text: str, abbreviations: Sequence[str]) -> list[str]:
    abbrevs = set(abbreviations)
    pieces = []
    start = 0
    n = len(text)
    i = 0
    while i < n:
        if text[i] not in ".!?":
            i += 1
            continue
        j = i
        while j < n and text[j] in ".!?":
            j += 1
        while j < n and text[j] in _CLOSERS:
            j += 1
        if j == n:
            break
        if not text[j].isspace():
            i = j
            continue
        k = j
        while k < n and text[k].isspace():
            k += 1
        if k == n:
            break
        nxt = text[k]
        word = text[start:j].split()[-1] if text[start:j].split() else ""
        if (nxt.isupper() or nxt in _OPENERS or nxt.isdigit()) and word not in abbrevs:
            pieces.append(text[start:j])
            start = j
        i = k
    pieces.append(text[start:])
    return [p for p in pieces if p.strip()]


def split_english(text: str, cfg: SegmentationConfig | None = None) -> list[str]:
    cfg = cfg or SegmentationConfig()
    out = []
    for sent in _english_sentences(text, cfg.english_abbreviations):
        # subdivide at ';' / ':' only when followed by whitespace, so "10:30" survives
        out.extend(_split_after(sent, lambda s, i: s[i] in ";:" and (i + 1 == len(s) or s[i + 1].isspace())))
    return out


def segment_english(text: str, cfg: SegmentationConfig | None = None, doc_id: str = "") -> list[Sentence]:
    """Rule-based sentence split, then subdivision at semicolons and colons."""
    return _to_sentences(split_english(text, cfg), doc_id, Language.EN)


def segment_document(doc: RawDocument, cfg: SegmentationConfig | None = None) -> tuple[list[Sentence], list[int]]:
    """Normalize and segment a document section by section.

    Returns the sentences (indices contiguous from 0) and the index of the
    first sentence of each section.
    """
    sentences: list[Sentence] = []
    starts: list[int] = []
    for section in doc.sections():
        if doc.language is Language.EN:
            pieces = split_english(section, cfg)
        else:
            pieces = split_greek(normalize_greek(section), cfg)
        starts.append(len(sentences))
        sentences.extend(_to_sentences(pieces, doc.id, doc.language, start=len(sentences)))
    return sentences, starts


def dedup_and_filter(pairs: Sequence[ParallelPair], min_chars: int) -> list[ParallelPair]:
    """Drop exact duplicate (source, target) pairs and pairs with a side shorter than ``min_chars``."""
    if min_chars < 0:
        raise ValueError("min_chars must be >= 0")
    seen = set()
    out = []
    for p in pairs:
        key = (p.source, p.target)
        if key in seen:
            continue
        seen.add(key)
        if len(p.source) < min_chars or len(p.target) < min_chars:
            continue
        out.append(p)
    return out


# min_chars defaults per language pair
MIN_CHARS = {Language.GRC: 5, Language.EL: 10}


# --- file formats -----------------------------------------------------------

def read_document(path: str | Path, language: Language, doc_id: str | None = None,
                  sections_path: str | Path | None = None) -> RawDocument:
    """Read a UTF-8 document; the optional sidecar holds section-break byte offsets."""
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8")
    breaks = None
    if sections_path is not None:
        byte_offsets = [int(line) for line in Path(sections_path).read_text().split()]
        for off in byte_offsets:
            if off < 0 or off > len(raw):
                raise ValueError(f"{sections_path}: byte offset {off} outside {path}")
        breaks = tuple(len(raw[:off].decode("utf-8", errors="strict")) for off in byte_offsets)
    return RawDocument(doc_id or path.stem, Language(language), text, breaks)


SENTENCE_COLUMNS = ["doc_id", "index", "language", "text"]


def write_sentences(path: str | Path, sentences: Sequence[Sentence], section_starts: Sequence[int] | None = None):
    """Write a sentence TSV; a ``section`` column is appended when sections are known."""
    columns = SENTENCE_COLUMNS + (["section"] if section_starts is not None else [])
    starts = list(section_starts or [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(columns)
        sec = -1
        for s in sentences:
            row = [s.doc_id, s.index, s.language.value, s.text]
            if section_starts is not None:
                while sec + 1 < len(starts) and starts[sec + 1] <= s.index:
                    sec += 1
                row.append(sec)
            w.writerow(row)


def read_sentences(path: str | Path) -> tuple[list[Sentence], list[int] | None]:
    """Read a sentence TSV; returns sentences and section start indices (or None)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        return [], None
    header = rows[0]
    missing = [c for c in SENTENCE_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    col = {name: header.index(name) for name in header}
    sentences = []
    sections = [] if "section" in col else None
    last_sec = None
    for row in rows[1:]:
        s = Sentence(row[col["doc_id"]], int(row[col["index"]]), row[col["text"]], Language(row[col["language"]]))
        if sections is not None:
            sec = int(row[col["section"]])
            if sec != last_sec:
                sections.append(len(sentences))
                last_sec = sec
        sentences.append(s)
    return sentences, sections


def write_pairs(path: str | Path, pairs: Sequence[ParallelPair]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["source", "target", "score"])
        for p in pairs:
            w.writerow([p.source, p.target, repr(float(p.score))])


def read_pairs(path: str | Path) -> list[ParallelPair]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        return []
    header = rows[0]
    for c in ("source", "target"):
        if c not in header:
            raise ValueError(f"{path}: missing column {c}")
    si, ti = header.index("source"), header.index("target")
    sc = header.index("score") if "score" in header else None
    return [ParallelPair(r[si], r[ti], float(r[sc]) if sc is not None else 1.0) for r in rows[1:]]
