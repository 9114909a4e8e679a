"""Hybrid candidate generation for entity linking on short noisy text.

Alias-table lookup and dense nearest-neighbour retrieval are run side by side
and their candidate sets unioned; BM25 over entity abstracts is kept as a
sparse baseline. A small logistic ranker with a NIL threshold picks the final
entity.
"""

from hybridel.dense_index import DenseIndex, brute_force_search, build_dense_index, knn_search
from hybridel.encoding import HashingEmbedder, SpanAnnotation, build_entity_input, build_mention_input
from hybridel.kb_store import Entity, EntityStore, load_entities
from hybridel.retrieval import Backends, Candidate, CandidateSet, hybrid_union, retrieve
from hybridel.sparse import AliasTable, bm25_search, build_alias_table, build_bm25_index, lookup_candidates

__version__ = "0.1.0"

__all__ = [
    "AliasTable",
    "Backends",
    "Candidate",
    "CandidateSet",
    "DenseIndex",
    "Entity",
    "EntityStore",
    "HashingEmbedder",
    "SpanAnnotation",
    "bm25_search",
    "brute_force_search",
    "build_alias_table",
    "build_bm25_index",
    "build_dense_index",
    "build_entity_input",
    "build_mention_input",
    "hybrid_union",
    "knn_search",
    "load_entities",
    "lookup_candidates",
    "retrieve",
]
