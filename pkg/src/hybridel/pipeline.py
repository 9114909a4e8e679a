"""End-to-end experiment steps shared by the CLI and the scripts."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from hybridel.config import PipelineConfig
from hybridel.dense_index import DenseIndex, build_dense_index, load_index
from hybridel.disambiguation import (
    EntityVectorCache,
    LabeledSpan,
    RankerModel,
    label_spans,
    predict_spans,
    train_ranker,
)
from hybridel.encoding import (
    HashingEmbedder,
    PrecomputedEmbedder,
    SpanAnnotation,
    embed_entity,
    load_vectors,
)
from hybridel.evaluation import (
    REPORT_SPLITS,
    Dataset,
    EvalSection,
    evaluate_runs,
    f1_score,
    gold_instances,
    load_dataset,
)
from hybridel.kb_store import EntityStore, apply_type_filter, load_denylist, load_entities_file
from hybridel.retrieval import Backends, CandidateSet, hybrid_union, retrieve
from hybridel.sparse import build_alias_table, build_bm25_index, read_alias_counts, store_abstracts
from hybridel.text import NormalizationConfig

logger = logging.getLogger(__name__)

Runs = dict[str, dict[tuple, CandidateSet]]


def load_store(cfg: PipelineConfig) -> tuple[EntityStore, int]:
    """Entities after the type filter, plus the pre-filter count."""
    store = load_entities_file(cfg.paths.entities, cfg.description_mode)
    n_before = len(store)
    if cfg.paths.denylist:
        with open(cfg.paths.denylist, encoding="utf-8") as fh:
            store = apply_type_filter(store, load_denylist(fh))
    return store, n_before


def load_data(cfg: PipelineConfig) -> Dataset:
    if not cfg.paths.dataset:
        raise FileNotFoundError("paths.dataset is required for this command")
    with open(cfg.paths.dataset, encoding="utf-8") as fh:
        return load_dataset(fh)


def normalization(cfg: PipelineConfig) -> NormalizationConfig:
    n = cfg.normalization
    return NormalizationConfig(n.case_fold, n.collapse_whitespace, n.strip_outer_punct)


def providers(cfg: PipelineConfig):
    if cfg.embedder.kind == "precomputed":
        return (
            PrecomputedEmbedder(load_vectors(cfg.paths.mention_vectors)),
            PrecomputedEmbedder(load_vectors(cfg.paths.vectors)),
        )
    emb = HashingEmbedder(cfg.embedder.dim)
    # one hashing function serves both sides; the mention/entity split is kept for providers that differ
    return emb, emb


def index_path(cfg: PipelineConfig, mode: str) -> Path:
    return Path(cfg.paths.output_dir) / f"dense_index.{mode}.{cfg.embedder.kind}.elvc"


def build_entity_index(cfg: PipelineConfig, store: EntityStore, entity_provider, mode: str) -> DenseIndex:
    table = {e.id: embed_entity(entity_provider, e, mode, cfg.max_sentences) for e in store}
    r = cfg.retrieval
    return build_dense_index(
        table, r.dense_mode, n_cells=r.n_cells, nprobe=r.nprobe,
        recall_floor=r.recall_floor, seed=cfg.seed,
    )


def build_backends(
    cfg: PipelineConfig,
    store: EntityStore,
    mode: str | None = None,
    use_saved_index: bool = True,
) -> Backends:
    mode = mode or cfg.description_mode
    methods = set(cfg.retrieval.methods)
    mention_p, entity_p = providers(cfg)
    bm25 = dense = None
    # built even when lookup is disabled: disambiguation features read it
    counts = []
    if cfg.paths.alias_counts:
        with open(cfg.paths.alias_counts, encoding="utf-8") as fh:
            counts = list(read_alias_counts(fh))
    alias = build_alias_table(store, counts, normalization(cfg))
    if "bm25" in methods:
        bm25 = build_bm25_index(
            store_abstracts(store, cfg.bm25.abstract_sentences), cfg.bm25.k1, cfg.bm25.b
        )
    if "dense" in methods:
        saved = index_path(cfg, mode)
        if use_saved_index and saved.is_file():
            dense = load_index(saved, cfg.retrieval.nprobe)
            if set(dense.ids) != set(store.ids()):
                logger.warning("saved index %s does not match the entity store; rebuilding", saved)
                dense = None
        if dense is None:
            dense = build_entity_index(cfg, store, entity_p, mode)
    return Backends(store.with_mode(mode), alias, bm25, dense, mention_p, entity_p, mode)


def retrieve_spans(
    ds: Dataset,
    spans: Sequence[SpanAnnotation],
    backends: Backends,
    methods: Sequence[str],
    k: int,
    hybrid_methods: Sequence[str] = ("lookup", "dense"),
) -> Runs:
    """Candidate sets per method (plus ``hybrid``), keyed by span."""
    runs: Runs = {m: {} for m in methods}
    for span in spans:
        text = ds.tweets[span.tweet_id]
        for m in methods:
            runs[m][span.key] = retrieve(m, text, span, backends, k)
    hybrid_parts = [m for m in hybrid_methods if m in runs]
    if len(hybrid_parts) >= 2:
        runs["hybrid"] = {
            key: hybrid_union(*(runs[m][key] for m in hybrid_parts)) for key in runs[hybrid_parts[0]]
        }
    return runs


def eval_spans(ds: Dataset, source: str) -> list[SpanAnnotation]:
    return ds.spans_of(source, ("academic", "ood"))


def evaluate(cfg: PipelineConfig, ds: Dataset, backends: Backends) -> dict[str, EvalSection]:
    """Gold spans are scored span-aligned; NER spans, if any, tweet-level."""
    r = cfg.retrieval
    k_fetch = max(r.k, max(r.curve_ks))
    instances = gold_instances(ds)
    sections = {}
    for source, mode in (("gold", "span_aligned"), ("ner", "tweet_level")):
        spans = eval_spans(ds, source)
        if not spans or not instances:
            continue
        runs = retrieve_spans(ds, spans, backends, r.methods, k_fetch, r.hybrid_methods)
        sections[source] = evaluate_runs(runs, instances, r.k, mode, r.curve_ks)
    return sections


# --------------------------------------------------------------------------- disambiguation


@dataclass
class DisambigResult:
    model: RankerModel
    prf: dict[str, tuple[float, float, float]]
    n_train: int


def labeled(
    cfg: PipelineConfig,
    ds: Dataset,
    backends: Backends,
    spans: Sequence[SpanAnnotation],
    method: str,
    cache: EntityVectorCache,
) -> list[LabeledSpan]:
    r = cfg.retrieval
    base = list(r.hybrid_methods) if method == "hybrid" else [method]
    runs = retrieve_spans(ds, spans, backends, base, r.k, r.hybrid_methods)
    sets = runs[method]
    return label_spans(((ds.tweets[s.tweet_id], sets[s.key]) for s in spans), backends, cache)


def gold_map(ds: Dataset, splits: Sequence[str]) -> dict[tuple, tuple[str, ...]]:
    return {
        s.key: s.gold_ids for s in ds.spans
        if s.source == "gold" and ds.split_of[s.tweet_id] in splits
    }


def train_disambiguator(
    cfg: PipelineConfig, ds: Dataset, backends: Backends, method: str, cache: EntityVectorCache | None = None
) -> RankerModel:
    cache = cache or EntityVectorCache(backends, backends.description_mode, cfg.max_sentences)
    train = ds.spans_of("gold", ("train",))
    d = cfg.disambiguation
    data = labeled(cfg, ds, backends, train, method, cache)
    return train_ranker(data, d.learning_rate, d.epochs, cfg.seed, d.heldout_fraction)


def evaluate_disambiguator(
    cfg: PipelineConfig,
    ds: Dataset,
    backends: Backends,
    model: RankerModel,
    method: str,
    cache: EntityVectorCache | None = None,
) -> dict[str, tuple[float, float, float]]:
    cache = cache or EntityVectorCache(backends, backends.description_mode, cfg.max_sentences)
    source = cfg.disambiguation.span_source
    spans = eval_spans(ds, source)
    preds = predict_spans(model, labeled(cfg, ds, backends, spans, method, cache))
    out = {}
    for split in REPORT_SPLITS:
        members = ("academic", "ood") if split == "overall" else (split,)
        gold = gold_map(ds, members)
        p = {k: v for k, v in preds.items() if ds.split_of[k[0]] in members}
        if gold or p:
            out[split] = f1_score(p, gold)
    return out


def run_disambiguation(
    cfg: PipelineConfig, ds: Dataset, backends: Backends, method: str
) -> DisambigResult:
    cache = EntityVectorCache(backends, backends.description_mode, cfg.max_sentences)
    model = train_disambiguator(cfg, ds, backends, method, cache)
    prf = evaluate_disambiguator(cfg, ds, backends, model, method, cache)
    return DisambigResult(model, prf, len(ds.spans_of("gold", ("train",))))


def ablate(cfg: PipelineConfig, ds: Dataset, store: EntityStore) -> dict[str, dict[str, tuple[float, float, float]]]:
    """Disambiguation P/R/F1 (overall) per candidate backend, short vs long descriptions."""
    out: dict[str, dict[str, tuple[float, float, float]]] = {m: {} for m in cfg.disambiguation.candidate_methods}
    for mode in ("short", "long"):
        backends = build_backends(cfg, store, mode, use_saved_index=True)
        for method in cfg.disambiguation.candidate_methods:
            res = run_disambiguation(cfg, ds, backends, method)
            out[method][mode] = res.prf.get("overall", (0.0, 0.0, 0.0))
    return out
