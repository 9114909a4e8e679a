"""Lexical candidate generation: alias-table lookup and Okapi BM25.

The alias table maps a normalized surface form to entities ranked by the
maximum-likelihood estimate of p(entity | surface). Count records come from a
headerless TSV (surface, entity id, count); store titles and aliases are added
with count 1 wherever the count stream has no record for that pair.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from hybridel.dense_index import ScoredCandidate
from hybridel.encoding import first_sentences
from hybridel.kb_store import EntityStore
from hybridel.text import NormalizationConfig, normalize_surface, word_tokens

__all__ = [
    "AliasEntry",
    "AliasTable",
    "Bm25Index",
    "NormalizationConfig",
    "normalize_surface",
    "build_alias_table",
    "lookup_candidates",
    "read_alias_counts",
    "build_bm25_index",
    "bm25_search",
    "store_abstracts",
]

logger = logging.getLogger(__name__)


class AliasCountError(ValueError):
    pass


@dataclass(frozen=True)
class AliasEntry:
    entity_id: str
    count: int
    prob: float


@dataclass(frozen=True)
class AliasTable:
    entries: Mapping[str, tuple[AliasEntry, ...]]
    normalization: NormalizationConfig = NormalizationConfig()
    skipped_unknown: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, surface: object) -> bool:
        return surface in self.entries

    def get(self, key: str) -> tuple[AliasEntry, ...]:
        return self.entries.get(key, ())

    def entry(self, surface: str, entity_id: str) -> AliasEntry | None:
        for e in self.get(normalize_surface(surface, self.normalization)):
            if e.entity_id == entity_id:
                return e
        return None

    def lookup(self, surface: str, limit: int | None = None) -> list[ScoredCandidate]:
        return lookup_candidates(self, surface, limit)


def read_alias_counts(lines: Iterable[str]) -> Iterator[tuple[str, str, int]]:
    """Parse ``surface<TAB>entity_id<TAB>count`` lines."""
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise AliasCountError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
        surface, entity_id, raw = parts
        try:
            count = int(raw)
        except ValueError:
            raise AliasCountError(f"line {lineno}: count {raw!r} is not an integer") from None
        if count < 1 or not entity_id:
            raise AliasCountError(f"line {lineno}: count must be positive and id non-empty")
        yield surface, entity_id, count


def build_alias_table(
    store: EntityStore,
    counts: Iterable[tuple[str, str, int]] = (),
    config: NormalizationConfig = NormalizationConfig(),
) -> AliasTable:
    merged: dict[str, Counter] = defaultdict(Counter)
    skipped = 0
    for surface, entity_id, count in counts:
        if entity_id not in store:
            skipped += 1
            continue
        key = normalize_surface(surface, config)
        if key:
            merged[key][entity_id] += count
    if skipped:
        logger.warning("alias counts: skipped %d records with unknown entity ids", skipped)

    for ent in store:
        for name in (ent.title, *ent.aliases):
            key = normalize_surface(name, config)
            if key and ent.id not in merged[key]:
                merged[key][ent.id] = 1

    entries = {}
    for key in sorted(merged):
        bucket = merged[key]
        total = sum(bucket.values())
        ranked = sorted(bucket.items(), key=lambda kv: (-kv[1], kv[0]))
        entries[key] = tuple(AliasEntry(eid, c, c / total) for eid, c in ranked)
    return AliasTable(MappingProxyType(entries), config, skipped)


def lookup_candidates(table: AliasTable, surface: str, limit: int | None = None) -> list[ScoredCandidate]:
    """Exact match on the normalized surface; every match unless ``limit`` is given."""
    found = table.get(normalize_surface(surface, table.normalization))
    out = [ScoredCandidate(e.entity_id, e.prob, "lookup") for e in found]
    out.sort(key=lambda c: (-c.score, c.id))
    return out if limit is None else out[:limit]


# --------------------------------------------------------------------------- BM25


@dataclass(frozen=True)
class Bm25Index:
    postings: Mapping[str, tuple[tuple[str, int], ...]]
    doc_lengths: Mapping[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float = 0.9
    b: float = 0.4
    _df: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_df", {t: len(p) for t, p in self.postings.items()})

    def idf(self, term: str) -> float:
        df = self._df.get(term, 0)
        return math.log((self.doc_count - df + 0.5) / (df + 0.5) + 1.0)

    def search(self, query: str, k: int = 16) -> list[ScoredCandidate]:
        return bm25_search(self, query, k)


def build_bm25_index(docs: Iterable[tuple[str, str]], k1: float = 0.9, b: float = 0.4) -> Bm25Index:
    lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    for doc_id, text in docs:
        if doc_id in lengths:
            raise ValueError(f"duplicate document id {doc_id!r}")
        tokens = word_tokens(text)
        lengths[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings[term].append((doc_id, tf))
    frozen = {t: tuple(sorted(p)) for t, p in sorted(postings.items())}
    avg = sum(lengths.values()) / len(lengths) if lengths else 0.0
    return Bm25Index(MappingProxyType(frozen), MappingProxyType(lengths), avg, len(lengths), k1, b)


def bm25_search(index: Bm25Index, query: str, k: int = 16) -> list[ScoredCandidate]:
    """Okapi BM25 over the distinct query terms; zero-score documents are dropped."""
    if k < 0:
        raise ValueError("k must be non-negative")
    k1, b = index.k1, index.b
    avg = index.avg_doc_length
    scores: dict[str, float] = defaultdict(float)
    for term in dict.fromkeys(word_tokens(query)):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            norm = 1.0 - b + b * index.doc_lengths[doc_id] / avg
            scores[doc_id] += idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    ranked = sorted(((d, s) for d, s in scores.items() if s > 0.0), key=lambda p: (-p[1], p[0]))
    return [ScoredCandidate(d, s, "bm25") for d, s in ranked[:k]]


def store_abstracts(store: EntityStore, max_sentences: int = 10) -> Iterator[tuple[str, str]]:
    """(id, abstract) pairs: the first sentences of each long description."""
    for ent in store:
        yield ent.id, first_sentences(ent.long_description, max_sentences)
