"""Per-span candidate generation across backends, plus the hybrid union."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Mapping, Sequence

from hybridel.dense_index import DEFAULT_K, DenseIndex, ScoredCandidate
from hybridel.encoding import EmbeddingProvider, SpanAnnotation, embed_mention
from hybridel.kb_store import EntityStore
from hybridel.sparse import AliasTable, Bm25Index, bm25_search, lookup_candidates

METHODS = ("lookup", "dense", "bm25")
# union output order: lookup block first, then dense, then bm25
_PRIORITY = {m: i for i, m in enumerate(METHODS)}
HYBRID_METHODS = ("lookup", "dense")


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    entity_id: str
    scores: Mapping[str, float]
    ranks: Mapping[str, int]

    @property
    def methods(self) -> frozenset[str]:
        return frozenset(self.scores)


@dataclass(frozen=True)
class CandidateSet:
    tweet_id: str
    span: SpanAnnotation
    candidates: tuple[Candidate, ...] = ()
    method_config: Mapping[str, int | str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [c.entity_id for c in self.candidates]
        if len(ids) != len(set(ids)):
            raise RetrievalError(f"duplicate candidates in set for {self.span.key}")
        if any(not c.scores for c in self.candidates):
            raise RetrievalError("candidate without provenance")

    def __len__(self) -> int:
        return len(self.candidates)

    def ids(self) -> list[str]:
        return [c.entity_id for c in self.candidates]

    def id_set(self) -> frozenset[str]:
        return frozenset(c.entity_id for c in self.candidates)

    def by_method(self, method: str) -> list[Candidate]:
        got = [c for c in self.candidates if method in c.ranks]
        got.sort(key=lambda c: c.ranks[method])
        return got


@dataclass
class Backends:
    store: EntityStore
    alias_table: AliasTable | None = None
    bm25: Bm25Index | None = None
    dense_index: DenseIndex | None = None
    mention_provider: EmbeddingProvider | None = None
    entity_provider: EmbeddingProvider | None = None
    description_mode: str = "long"


def from_scored(
    span: SpanAnnotation, scored: Sequence[ScoredCandidate], method: str, limit: int | str
) -> CandidateSet:
    cands = tuple(
        Candidate(c.id, MappingProxyType({method: c.score}), MappingProxyType({method: r}))
        for r, c in enumerate(scored)
    )
    return CandidateSet(span.tweet_id, span, cands, MappingProxyType({method: limit}))


def retrieve(
    method: str, tweet_text: str, span: SpanAnnotation, backends: Backends, k: int = DEFAULT_K
) -> CandidateSet:
    """Candidates for one span from one backend.

    Dense and BM25 return their top ``k``; lookup returns every exact match.
    """
    span.validate(tweet_text)
    if method == "lookup":
        if backends.alias_table is None:
            raise RetrievalError("lookup backend not built")
        return from_scored(span, lookup_candidates(backends.alias_table, span.surface), method, "all")
    if method == "bm25":
        if backends.bm25 is None:
            raise RetrievalError("bm25 backend not built")
        return from_scored(span, bm25_search(backends.bm25, span.surface, k), method, k)
    if method == "dense":
        if backends.dense_index is None or backends.mention_provider is None:
            raise RetrievalError("dense backend not built")
        query = embed_mention(backends.mention_provider, tweet_text, span)
        return from_scored(span, backends.dense_index.search(query, k), method, k)
    raise RetrievalError(f"unknown method {method!r}; expected one of {METHODS}")


def hybrid_union(a: CandidateSet, b: CandidateSet, *more: CandidateSet) -> CandidateSet:
    """Set union of candidate sets for the same span; scores are kept per method, never fused."""
    sets = (a, b, *more)
    for s in sets[1:]:
        if (s.tweet_id, s.span.start, s.span.end) != (a.tweet_id, a.span.start, a.span.end):
            raise RetrievalError(f"span mismatch: {a.span.key} vs {s.span.key}")
    scores: dict[str, dict[str, float]] = {}
    ranks: dict[str, dict[str, int]] = {}
    config: dict[str, int | str] = {}
    for s in sets:
        config.update(s.method_config)
        for c in s.candidates:
            scores.setdefault(c.entity_id, {}).update(c.scores)
            ranks.setdefault(c.entity_id, {}).update(c.ranks)

    def order(eid: str) -> tuple:
        m = min(ranks[eid], key=lambda name: _PRIORITY.get(name, len(_PRIORITY)))
        return (_PRIORITY.get(m, len(_PRIORITY)), ranks[eid][m], eid)

    cands = tuple(
        Candidate(eid, MappingProxyType(scores[eid]), MappingProxyType(ranks[eid]))
        for eid in sorted(scores, key=order)
    )
    return CandidateSet(a.tweet_id, a.span, cands, MappingProxyType(config))


def truncate(cset: CandidateSet, k: int, uncapped: Iterable[str] = ("lookup",)) -> CandidateSet:
    """Keep each method's top ``k``; methods in ``uncapped`` keep everything."""
    uncapped = frozenset(uncapped)
    kept = []
    for c in cset.candidates:
        ok = {m for m, r in c.ranks.items() if m in uncapped or r < k}
        if ok:
            kept.append(
                Candidate(
                    c.entity_id,
                    MappingProxyType({m: c.scores[m] for m in c.scores if m in ok}),
                    MappingProxyType({m: c.ranks[m] for m in c.ranks if m in ok}),
                )
            )
    return CandidateSet(cset.tweet_id, cset.span, tuple(kept), cset.method_config)


# --------------------------------------------------------------------------- files


def candidate_record(cset: CandidateSet) -> dict:
    return {
        "tweet_id": cset.tweet_id,
        "start": cset.span.start,
        "end": cset.span.end,
        "candidates": [
            {"id": c.entity_id, "methods": sorted(c.methods), "scores": dict(sorted(c.scores.items()))}
            for c in cset.candidates
        ],
    }


def write_candidates(fh: IO[str], sets: Iterable[CandidateSet]) -> None:
    for s in sets:
        fh.write(json.dumps(candidate_record(s), ensure_ascii=False) + "\n")


def read_candidates(lines: Iterable[str], spans: Mapping[tuple[str, int, int], SpanAnnotation]) -> Iterator[CandidateSet]:
    """Inverse of :func:`write_candidates`; per-method ranks are rebuilt from scores."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        key = (rec["tweet_id"], rec["start"], rec["end"])
        if key not in spans:
            raise RetrievalError(f"line {lineno}: unknown span {key}")
        per_method: dict[str, list[tuple[str, float]]] = {}
        for c in rec["candidates"]:
            for m in c["methods"]:
                per_method.setdefault(m, []).append((c["id"], float(c["scores"][m])))
        ranks: dict[str, dict[str, int]] = {}
        for m, pairs in per_method.items():
            for r, (eid, _) in enumerate(sorted(pairs, key=lambda p: (-p[1], p[0]))):
                ranks.setdefault(eid, {})[m] = r
        cands = tuple(
            Candidate(c["id"], MappingProxyType({m: float(c["scores"][m]) for m in c["methods"]}),
                      MappingProxyType(ranks[c["id"]]))
            for c in rec["candidates"]
        )
        yield CandidateSet(key[0], spans[key], cands)
