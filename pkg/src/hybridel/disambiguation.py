"""Linear mention-entity scorer with a NIL threshold.

Each (span, candidate) pair gets seven features: alias-table statistics, entity
priors, and the dot product between mention and entity-description embeddings.
A logistic model is fit with full-batch gradient descent on standardized
features. The standardization is folded back into the stored weights, so the
saved model applies directly to raw feature values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from hybridel.encoding import SpanAnnotation, embed_entity, embed_mention
from hybridel.retrieval import Backends, CandidateSet
from hybridel.text import NormalizationConfig, normalize_surface

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "log_mention_count",
    "cond_prob",
    "pagerank",
    "log_link_count",
    "context_sim",
    "dense_rank_inv",
    "exact_title_match",
)


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    log_mention_count: float = 0.0
    cond_prob: float = 0.0
    pagerank: float = 0.0
    log_link_count: float = 0.0
    context_sim: float = 0.0
    dense_rank_inv: float = 0.0
    exact_title_match: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


class EntityVectorCache:
    """Entity-description embeddings, computed once per id."""

    def __init__(self, backends: Backends, mode: str = "long", max_sentences: int = 10):
        self.backends = backends
        self.mode = mode
        self.max_sentences = max_sentences
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, entity_id: str) -> np.ndarray:
        vec = self._cache.get(entity_id)
        if vec is None:
            ent = self.backends.store.get(entity_id)
            vec = embed_entity(self.backends.entity_provider, ent, self.mode, self.max_sentences)
            self._cache[entity_id] = vec
        return vec


def _features(
    span: SpanAnnotation,
    candidate_id: str,
    backends: Backends,
    mention_vec: np.ndarray | None,
    entity_vec: np.ndarray | None,
    dense_rank: int | None,
) -> FeatureVector:
    ent = backends.store.get(candidate_id)
    count, prob = 0, 0.0
    norm = NormalizationConfig()
    if backends.alias_table is not None:
        norm = backends.alias_table.normalization
        hit = backends.alias_table.entry(span.surface, candidate_id)
        if hit is not None:
            count, prob = hit.count, hit.prob
    sim = 0.0
    if mention_vec is not None and entity_vec is not None:
        sim = float(np.dot(mention_vec.astype(np.float64), entity_vec.astype(np.float64)))
    return FeatureVector(
        log_mention_count=math.log1p(count),
        cond_prob=prob,
        pagerank=float(ent.pagerank),
        log_link_count=math.log1p(ent.link_count),
        context_sim=sim,
        dense_rank_inv=0.0 if dense_rank is None else 1.0 / (1 + dense_rank),
        exact_title_match=float(normalize_surface(span.surface, norm) == normalize_surface(ent.title, norm)),
    )


def extract_features(
    tweet_text: str,
    span: SpanAnnotation,
    candidate_id: str,
    backends: Backends,
    dense_rank: int | None = None,
    entity_vectors: EntityVectorCache | None = None,
) -> FeatureVector:
    span.validate(tweet_text)
    mention_vec = entity_vec = None
    if backends.mention_provider is not None and backends.entity_provider is not None:
        mention_vec = embed_mention(backends.mention_provider, tweet_text, span)
        entity_vectors = entity_vectors or EntityVectorCache(backends, backends.description_mode)
        entity_vec = entity_vectors(candidate_id)
    return _features(span, candidate_id, backends, mention_vec, entity_vec, dense_rank)


def featurize(
    tweet_text: str,
    cset: CandidateSet,
    backends: Backends,
    entity_vectors: EntityVectorCache | None = None,
) -> tuple[list[str], np.ndarray]:
    """Feature matrix for every candidate of one span (mention embedded once)."""
    span = cset.span
    span.validate(tweet_text)
    mention_vec = None
    if backends.mention_provider is not None and backends.entity_provider is not None:
        mention_vec = embed_mention(backends.mention_provider, tweet_text, span)
        entity_vectors = entity_vectors or EntityVectorCache(backends, backends.description_mode)
    ids = cset.ids()
    rows = []
    for c in cset.candidates:
        evec = entity_vectors(c.entity_id) if mention_vec is not None else None
        fv = _features(span, c.entity_id, backends, mention_vec, evec, c.ranks.get("dense"))
        rows.append(fv.as_array())
    X = np.vstack(rows) if rows else np.zeros((0, len(FEATURE_NAMES)))
    return ids, X


@dataclass
class LabeledSpan:
    key: tuple
    candidate_ids: list[str]
    features: np.ndarray
    gold_ids: frozenset[str]

    def labels(self) -> np.ndarray:
        return np.array([1.0 if c in self.gold_ids else 0.0 for c in self.candidate_ids])


@dataclass
class RankerModel:
    weights: tuple[float, ...] = (0.0,) * len(FEATURE_NAMES)
    bias: float = 0.0
    nil_threshold: float = -math.inf
    feature_names: tuple[str, ...] = FEATURE_NAMES
    loss_history: list[float] = field(default_factory=list, compare=False, repr=False)
    warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ np.asarray(self.weights) + self.bias

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        lines = [f"{n}\t{w:.17g}" for n, w in zip(self.feature_names, self.weights)]
        lines.append(f"bias\t{self.bias:.17g}")
        lines.append(f"nil_threshold\t{self.nil_threshold:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RankerModel":
        names, weights = [], []
        bias = threshold = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                name, raw = line.split("\t")
                value = float(raw)
            except ValueError:
                raise ValueError(f"model line {lineno}: expected 'name<TAB>value'") from None
            if name == "bias":
                bias = value
            elif name == "nil_threshold":
                threshold = value
            else:
                names.append(name)
                weights.append(value)
        if bias is None or threshold is None:
            raise ValueError("model file lacks bias or nil_threshold")
        if tuple(names) != FEATURE_NAMES:
            raise ValueError(f"model features {names} do not match {list(FEATURE_NAMES)}")
        return cls(tuple(weights), bias, threshold, tuple(names))

    @classmethod
    def load(cls, path: str | Path) -> "RankerModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def select(ids: Sequence[str], scores: Sequence[float], threshold: float = -math.inf) -> str | None:
    """Highest score wins, ties to the smallest id; ``None`` (NIL) below ``threshold``."""
    if len(ids) == 0:
        return None
    best = min(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    if scores[best] < threshold:
        return None
    return ids[best]


def disambiguate_features(model: RankerModel, ids: Sequence[str], X: np.ndarray) -> str | None:
    if len(ids) == 0:
        return None
    return select(ids, model.score(X).tolist(), model.nil_threshold)


def disambiguate(
    model: RankerModel,
    tweet_text: str,
    cset: CandidateSet,
    backends: Backends,
    entity_vectors: EntityVectorCache | None = None,
) -> str | None:
    if not cset.candidates:
        return None
    ids, X = featurize(tweet_text, cset, backends, entity_vectors)
    return disambiguate_features(model, ids, X)


def prior_baseline(ids: Sequence[str], X: np.ndarray) -> str | None:
    """Pick the candidate with the highest p(entity|surface); never NIL."""
    if len(ids) == 0:
        return None
    return select(ids, X[:, FEATURE_NAMES.index("cond_prob")].tolist())


def _logistic_loss(s: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def _fit_threshold(model: RankerModel, spans: Sequence[LabeledSpan]) -> float:
    """Threshold maximizing F1 of top-1 predictions on ``spans``; ties go to the lowest.

    Candidate thresholds sit midway between consecutive distinct best-scores,
    so the cut keeps a margin on both sides instead of touching a sample.
    """
    if not spans:
        return -math.inf
    best_scores, correct, linkable = [], [], 0
    for s in spans:
        linkable += bool(s.gold_ids)
        if not s.candidate_ids:
            continue
        scores = model.score(s.features).tolist()
        pick = select(s.candidate_ids, scores)
        best_scores.append(max(scores))
        correct.append(pick in s.gold_ids)
    distinct = sorted(set(best_scores))
    options = [-math.inf, *((a + b) / 2 for a, b in zip(distinct, distinct[1:]))]
    best_t, best_f = -math.inf, -1.0
    for t in options:
        tp = sum(1 for sc, ok in zip(best_scores, correct) if sc >= t and ok)
        fp = sum(1 for sc, ok in zip(best_scores, correct) if sc >= t and not ok)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / linkable if linkable else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        if f > best_f:
            best_t, best_f = t, f
    return best_t


def train_ranker(
    spans: Sequence[LabeledSpan],
    learning_rate: float = 0.5,
    epochs: int = 300,
    seed: int = 0,
    heldout_fraction: float = 0.1,
) -> RankerModel:
    """Fit weights on (candidate, is-gold) pairs, then the NIL threshold on a held-out slice.

    All non-gold retrieved candidates are negatives. Zero epochs returns the
    all-zero initialization.
    """
    usable = [s for s in spans if s.candidate_ids]
    if not usable:
        raise TrainingError("empty training set")
    order = np.random.default_rng(seed).permutation(len(usable))
    n_held = int(round(heldout_fraction * len(usable)))
    n_held = min(n_held, len(usable) - 1)
    held = [usable[i] for i in order[:n_held]]
    fit = [usable[i] for i in order[n_held:]]

    X = np.vstack([s.features for s in fit])
    y = np.concatenate([s.labels() for s in fit])
    model = RankerModel()
    if y.min() == y.max():
        msg = f"degenerate training data: every pair has label {int(y[0])}"
        logger.warning(msg)
        model.warnings.append(msg)

    mu = X.mean(0)
    sd = X.std(0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    w = np.zeros(X.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(epochs):
        s = Z @ w + b
        model.loss_history.append(_logistic_loss(s, y))
        p = 0.5 * (1.0 + np.tanh(0.5 * s))
        resid = p - y
        w = w - learning_rate * (Z.T @ resid) / n
        b = b - learning_rate * float(resid.mean())
    model.loss_history.append(_logistic_loss(Z @ w + b, y))

    if epochs:
        model.weights = tuple(float(v) for v in w / sd)
        model.bias = float(b - np.sum(w * mu / sd))
    model.nil_threshold = _fit_threshold(model, held) if epochs else -math.inf
    return model


def label_spans(
    items: Iterable[tuple[str, CandidateSet]],
    backends: Backends,
    entity_vectors: EntityVectorCache | None = None,
) -> list[LabeledSpan]:
    """Featurize ``(tweet_text, candidate_set)`` pairs whose spans carry gold ids (or NIL)."""
    out = []
    for text, cset in items:
        ids, X = featurize(text, cset, backends, entity_vectors)
        out.append(LabeledSpan(cset.span.key, ids, X, frozenset(cset.span.gold_ids)))
    return out


def predict_spans(model: RankerModel, spans: Iterable[LabeledSpan]) -> Mapping[tuple, str | None]:
    return {s.key: disambiguate_features(model, s.candidate_ids, s.features) for s in spans}
