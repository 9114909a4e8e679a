"""Mention/entity input templates, sentence splitting and embedding providers.

Mention inputs partition a tweet into (left context, surface, right context);
entity inputs pair a title with the first few sentences of a description.
Marker tokens only matter to providers that consume a raw token stream, so
they are rendered on demand by :meth:`MentionInput.marked` and
:meth:`EntityInput.marked`.
"""

from __future__ import annotations

import io
import math
import re
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Mapping, Protocol

import numpy as np

from hybridel.kb_store import Entity
from hybridel.text import word_tokens

SPAN_SOURCES = ("gold", "ner")

ABBREVIATIONS = frozenset(
    {"Dr.", "Mr.", "Mrs.", "Ms.", "St.", "No.", "vs.", "etc.", "e.g.", "i.e."}
)

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

VECTOR_MAGIC = b"ELVC"
VECTOR_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class SpanError(ValueError):
    pass


class VectorFileError(ValueError):
    pass


class MissingVectorError(KeyError):
    def __str__(self) -> str:
        return f"no precomputed vector for {self.args[0]!r}"


@dataclass(frozen=True)
class SpanAnnotation:
    tweet_id: str
    start: int
    end: int
    surface: str
    gold_ids: tuple[str, ...] = ()
    source: str = "gold"

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold_ids", tuple(self.gold_ids))
        if self.source not in SPAN_SOURCES:
            raise SpanError(f"span source must be one of {SPAN_SOURCES}, got {self.source!r}")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.tweet_id, self.start, self.end)

    @property
    def is_nil(self) -> bool:
        return not self.gold_ids

    def validate(self, text: str) -> None:
        if not (0 <= self.start < self.end <= len(text)):
            raise SpanError(
                f"span [{self.start}, {self.end}) out of range for text of length {len(text)}"
                f" (tweet {self.tweet_id})"
            )
        if text[self.start:self.end] != self.surface:
            raise SpanError(
                f"surface mismatch in tweet {self.tweet_id}: annotation says {self.surface!r},"
                f" text has {text[self.start:self.end]!r}"
            )


@dataclass(frozen=True)
class MentionInput:
    left: str
    surface: str
    right: str

    def render(self) -> str:
        return f"{self.left} {self.surface} {self.right}"

    def marked(self) -> str:
        return f"[CLS] {self.left} [M1] {self.surface} [M2] {self.right}"


@dataclass(frozen=True)
class EntityInput:
    title: str
    description: str

    def render(self) -> str:
        return f"{self.title} {self.description}"

    def marked(self) -> str:
        return f"[CLS] {self.title} [M3] {self.description}"


def build_mention_input(tweet_text: str, span: SpanAnnotation) -> MentionInput:
    span.validate(tweet_text)
    return MentionInput(
        left=tweet_text[: span.start],
        surface=tweet_text[span.start : span.end],
        right=tweet_text[span.end :],
    )


_TERMINATOR_RE = re.compile(r"[.!?]+(\s+)")


def _is_abbreviation(text: str, term_start: int, term_end: int) -> bool:
    if text[term_start:term_end] != ".":
        return False
    tok_start = term_start
    while tok_start > 0 and not text[tok_start - 1].isspace():
        tok_start -= 1
    token = text[tok_start:term_end].lstrip("([{\"'")
    return token in ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split text into sentences; ``"".join(result) == text``.

    A boundary falls after a run of ``.``/``!``/``?`` followed by whitespace
    and an uppercase letter, unless the word ending there is one of
    :data:`ABBREVIATIONS`. Inter-sentence whitespace stays attached to the
    preceding sentence.
    """
    if not text:
        return []
    out = []
    start = 0
    for m in _TERMINATOR_RE.finditer(text):
        nxt = m.end()
        if nxt >= len(text) or not text[nxt].isupper():
            continue
        if _is_abbreviation(text, m.start(), m.start(1)):
            continue
        out.append(text[start:nxt])
        start = nxt
    out.append(text[start:])
    return out


def first_sentences(text: str, n: int) -> str:
    return "".join(split_sentences(text)[:n]).rstrip()


def build_entity_input(entity: Entity, mode: str = "long", max_sentences: int = 10) -> EntityInput:
    if mode == "long":
        desc = entity.long_description
    elif mode == "short":
        desc = entity.short_description
    else:
        raise ValueError(f"unknown description mode {mode!r}")
    return EntityInput(title=entity.title, description=first_sentences(desc, max_sentences))


# --------------------------------------------------------------------------- providers


class EmbeddingProvider(Protocol):
    dim: int
    kind: str

    def embed(self, text: str) -> np.ndarray: ...


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _feature_hash(feature: str) -> int:
    return fnv1a_64(feature.encode("utf-8"))


def hash_features(text: str) -> list[str]:
    """Word tokens, then character trigrams of the lowercased text."""
    lowered = text.lower()
    feats = word_tokens(lowered)
    feats.extend(lowered[i : i + 3] for i in range(len(lowered) - 2))
    return feats


@dataclass(frozen=True)
class HashingEmbedder:
    """Deterministic signed feature-hashing embedder, L2-normalized.

    Counts are accumulated as integers, so the only floating-point steps are
    one square root and one division per bucket, both correctly rounded in
    IEEE-754; outputs are therefore identical on every platform.
    """

    dim: int = 256
    kind: str = "reference_hash"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def embed(self, text: str) -> np.ndarray:
        counts = [0] * self.dim
        for feat in hash_features(text):
            h = _feature_hash(feat)
            counts[h % self.dim] += -1 if h >> 63 else 1
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            return np.zeros(self.dim, dtype=np.float32)
        return (np.asarray(counts, dtype=np.float64) / norm).astype(np.float32)


@dataclass(frozen=True)
class PrecomputedEmbedder:
    """Serves externally computed vectors keyed by id (entity id or mention key)."""

    table: Mapping[str, np.ndarray]
    dim: int = 0
    kind: str = "precomputed"

    def __post_init__(self) -> None:
        dims = {len(v) for v in self.table.values()}
        if len(dims) > 1:
            raise VectorFileError(f"mixed vector dims {sorted(dims)}")
        if dims:
            object.__setattr__(self, "dim", dims.pop())

    def embed(self, key: str) -> np.ndarray:
        try:
            return self.table[key]
        except KeyError:
            raise MissingVectorError(key) from None


def mention_key(span: SpanAnnotation) -> str:
    """Id under which a precomputed mention vector is stored."""
    return f"{span.tweet_id}:{span.start}:{span.end}"


def embed_text(provider: EmbeddingProvider, text: str) -> np.ndarray:
    return provider.embed(text)


def embed_mention(provider: EmbeddingProvider, tweet_text: str, span: SpanAnnotation) -> np.ndarray:
    if provider.kind == "precomputed":
        return provider.embed(mention_key(span))
    return provider.embed(build_mention_input(tweet_text, span).render())


def embed_entity(
    provider: EmbeddingProvider, entity: Entity, mode: str = "long", max_sentences: int = 10
) -> np.ndarray:
    if provider.kind == "precomputed":
        return provider.embed(entity.id)
    return provider.embed(build_entity_input(entity, mode, max_sentences).render())


# --------------------------------------------------------------------------- vector files


def write_vector_records(fh: BinaryIO, table: Mapping[str, np.ndarray]) -> int:
    dims = {len(v) for v in table.values()}
    if len(dims) > 1:
        raise VectorFileError(f"mixed vector dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    fh.write(_HEADER.pack(VECTOR_MAGIC, VECTOR_VERSION, dim, len(table)))
    for key, vec in table.items():
        raw = key.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise VectorFileError(f"id too long: {key[:40]!r}...")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(np.asarray(vec, dtype="<f4").tobytes())
    return dim


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise VectorFileError(f"truncated file while reading {what}")
    return buf


def read_vector_records(fh: BinaryIO) -> tuple[int, dict[str, np.ndarray]]:
    magic, version, dim, count = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
    if magic != VECTOR_MAGIC:
        raise VectorFileError(f"bad magic {magic!r}")
    if version != VECTOR_VERSION:
        raise VectorFileError(f"unsupported version {version}")
    table: dict[str, np.ndarray] = {}
    for i in range(count):
        (n,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
        try:
            key = _read_exact(fh, n, f"record {i} id").decode("utf-8")
        except UnicodeDecodeError:
            raise VectorFileError(f"record {i}: id is not UTF-8 (dim mismatch?)") from None
        if key in table:
            raise VectorFileError(f"duplicate id {key!r}")
        vec = np.frombuffer(_read_exact(fh, 4 * dim, f"record {i} values"), dtype="<f4")
        table[key] = vec.astype(np.float32)
    return dim, table


def write_vectors(path: str | Path, table: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        write_vector_records(fh, table)


def load_vectors(source: str | Path | BinaryIO | bytes) -> dict[str, np.ndarray]:
    """Read a vector file; trailing bytes after the declared records are an error."""
    if isinstance(source, bytes):
        fh: BinaryIO = io.BytesIO(source)
    elif isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            return load_vectors(f.read())
    else:
        fh = source
    _, table = read_vector_records(fh)
    if fh.read(1):
        raise VectorFileError("trailing bytes after declared records (dim or count mismatch)")
    return table

