"""Deterministic synthetic corpora for tests and desk-scale experiments.

Entities get pseudo-word names, topical long descriptions carrying a few
"signature" words, and short descriptions drawn from a small shared pool.
Tweets mention a gold entity in one of several ways:

``title``      full title as the surface, signature words as context
``alias``      an alias-table surface with unrelated filler as context
``misspell``   a corrupted title (never an alias key) with signature words as context
``first``      the ambiguous first name alone, signature words as context
``nil``        an unknown surface with no gold entity

Alias-only mentions are found only by lookup, and misspelled mentions only
by embedding similarity. The generators combine these kinds to produce the
fixtures that exercise the hybrid union.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hybridel.disambiguation import FEATURE_NAMES, LabeledSpan
from hybridel.encoding import SpanAnnotation
from hybridel.evaluation import Dataset, write_dataset
from hybridel.kb_store import Entity, write_entities
from hybridel.text import normalize_surface

DISAMBIGUATION_TAG = "Q4167410"

_SYLLABLES = (
    "ka lo mi ren to vash qui dor bel zan tri mo sel gar fen lu pra nix od war "
    "sha bri cor del ek fa gon hal ist jor kel mar nor pel ros tam ul vin yar zem"
).split()
_FILLER = (
    "lol omg tonight honestly vibes cannot believe this again wow really so much "
    "fun today best ever literally dying here what a time yes no maybe soon"
).split()
_TOPICS = {
    "bird": "species of bird",
    "actor": "american actor",
    "city": "city in india",
    "band": "rock band",
    "film": "2009 film",
    "alert": "emergency alert system",
}
_CONNECTIVES = ("is known for", "works with", "was praised for", "often visits", "founded")


@dataclass
class Corpus:
    entities: list[Entity]
    alias_counts: list[tuple[str, str, int]]
    dataset: Dataset
    denylist: frozenset[str] = frozenset({DISAMBIGUATION_TAG})
    kinds: dict[tuple[str, int, int], str] = field(default_factory=dict)

    def write(self, directory: str | Path) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "entities": d / "entities.jsonl",
            "alias_counts": d / "alias_counts.tsv",
            "dataset": d / "dataset.jsonl",
            "denylist": d / "denylist.txt",
        }
        with open(paths["entities"], "w", encoding="utf-8") as fh:
            write_entities(self.entities, fh)
        with open(paths["alias_counts"], "w", encoding="utf-8") as fh:
            for s, e, c in self.alias_counts:
                fh.write(f"{s}\t{e}\t{c}\n")
        with open(paths["dataset"], "w", encoding="utf-8") as fh:
            write_dataset(fh, self.dataset)
        paths["denylist"].write_text(
            "# instance-of classes to drop (synthetic)\n" + "\n".join(sorted(self.denylist)) + "\n",
            encoding="utf-8",
        )
        return paths


class _Words:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set(_FILLER)

    def new(self, syllables: int | None = None) -> str:
        while True:
            n = syllables or self.rng.choice((2, 3))
            w = "".join(self.rng.choice(_SYLLABLES) for _ in range(n))
            if w not in self.used:
                self.used.add(w)
                return w


@dataclass
class _Spec:
    entity: Entity
    signature: list[str]
    codename: str | None


def _make_entities(
    rng: random.Random,
    words: _Words,
    n: int,
    topics: list[str],
    first_pool: int,
    codenames: bool,
    shared_short: str | None = None,
) -> list[_Spec]:
    firsts = [words.new(2).capitalize() for _ in range(first_pool)]
    topic_words = {t: [words.new() for _ in range(8)] for t in topics}
    specs = []
    for i in range(n):
        topic = topics[i % len(topics)]
        title = f"{rng.choice(firsts)} {words.new().capitalize()}"
        signature = [words.new() for _ in range(4)]
        tw = rng.sample(topic_words[topic], 3)
        sentences = [
            f"{title} is a {tw[0]} {tw[1]} associated with {signature[0]}.",
            f"It {rng.choice(_CONNECTIVES)} {signature[1]} and {signature[2]}.",
            f"Critics link it to {signature[3]} and {tw[2]}.",
        ]
        sentences += [f"Another {rng.choice(topic_words[topic])} fact about it." for _ in range(rng.randint(0, 3))]
        codename = words.new(3).capitalize() if codenames else None
        aliases = [title.split()[0]] + ([codename] if codename else [])
        specs.append(
            _Spec(
                Entity(
                    id=f"Q{1000 + i}",
                    title=title,
                    long_description=" ".join(sentences),
                    short_description=shared_short if shared_short is not None else _TOPICS[topic],
                    aliases=tuple(aliases),
                    type_tags=("Q5",),
                    pagerank=round(rng.uniform(0.1, 5.0), 3),
                    link_count=rng.randint(1, 500),
                ),
                signature,
                codename,
            )
        )
    return specs


def _alias_counts(rng: random.Random, specs: list[_Spec]) -> list[tuple[str, str, int]]:
    rows = []
    for s in specs:
        e = s.entity
        rows.append((e.title, e.id, rng.randint(5, 50)))
        rows.append((e.title.split()[0], e.id, rng.randint(1, 20)))
        if s.codename:
            rows.append((s.codename, e.id, rng.randint(1, 5)))
    return rows


def _misspell(rng: random.Random, title: str, taken: set[str]) -> str:
    while True:
        chars = list(title)
        i = rng.randrange(1, len(chars) - 1)
        if chars[i] != " " and chars[i + 1] != " ":
            chars[i], chars[i + 1] = chars[i + 1], chars[i]
        j = rng.randrange(1, len(chars))
        chars.insert(j, chars[j - 1] if chars[j - 1] != " " else "x")
        out = "".join(chars)
        if normalize_surface(out) not in taken:
            return out


class _TweetWriter:
    def __init__(self, rng: random.Random, taken_keys: set[str]):
        self.rng = rng
        self.taken = taken_keys
        self.ds = Dataset()
        self.kinds: dict[tuple[str, int, int], str] = {}
        self.n = 0

    def add(self, spec: _Spec | None, kind: str, split: str, ner: bool = False) -> None:
        rng = self.rng
        tid = f"t{self.n:05d}"
        self.n += 1
        filler = rng.sample(_FILLER, 4)
        if kind == "title":
            surface, ctx = spec.entity.title, rng.sample(spec.signature, 3)
        elif kind == "alias":
            surface = spec.codename or spec.entity.title.split()[0]
            ctx = filler[2:]
        elif kind == "first":
            surface, ctx = spec.entity.title.split()[0], rng.sample(spec.signature, 3)
        elif kind == "misspell":
            surface, ctx = _misspell(rng, spec.entity.title, self.taken), rng.sample(spec.signature, 3)
        elif kind == "nil":
            surface, ctx = "Zyx" + "".join(rng.choice("qwrtz") for _ in range(4)), filler[2:]
        else:
            raise ValueError(kind)
        left = " ".join(filler[:2] + ctx[:1])
        right = " ".join(ctx[1:]) + " " + rng.choice(["!", "#wow", "🔥", "…", "ok"])
        text = f"{left} {surface} {right}"
        start = len(left) + 1
        end = start + len(surface)
        gold = () if kind == "nil" else (spec.entity.id,)
        self.ds.tweets[tid] = text
        self.ds.split_of[tid] = split
        self.ds.spans.append(SpanAnnotation(tid, start, end, surface, gold, "gold"))
        self.kinds[(tid, start, end)] = kind
        if ner:
            roll = rng.random()
            if roll < 0.6:
                ns, ne = start, end
            elif roll < 0.85:
                # boundary error: NER swallows the preceding word
                ns, ne = len(" ".join(filler[:2])) + 1, end
            else:
                return  # missed mention
            self.ds.spans.append(SpanAnnotation(tid, ns, ne, text[ns:ne], gold, "ner"))


def _split_for(i: int, n: int) -> str:
    frac = i / max(n, 1)
    return "train" if frac < 0.3 else ("academic" if frac < 0.75 else "ood")


def make_corpus(
    seed: int = 0,
    n_entities: int = 200,
    n_tweets: int = 50,
    kind_weights: dict[str, float] | None = None,
    ner: bool = True,
    n_denied: int = 5,
) -> Corpus:
    """General mixed corpus: ambiguous first names, all four mention kinds."""
    rng = random.Random(seed)
    words = _Words(rng)
    specs = _make_entities(rng, words, n_entities, list(_TOPICS), max(3, n_entities // 10), True)
    entities = [s.entity for s in specs]
    for i in range(n_denied):
        first = specs[i].entity.title.split()[0]
        entities.append(Entity(f"Q9{i:04d}", f"{first} (disambiguation)", f"{first} may refer to several things.",
                               "Wikimedia disambiguation page", (), (DISAMBIGUATION_TAG,)))
    counts = _alias_counts(rng, specs)
    taken = {normalize_surface(s) for s, _, _ in counts} | {normalize_surface(e.title) for e in entities}
    kind_weights = kind_weights or {"title": 0.3, "alias": 0.2, "misspell": 0.25, "first": 0.15, "nil": 0.1}
    kinds, weights = zip(*kind_weights.items())
    tw = _TweetWriter(rng, taken)
    for i in range(n_tweets):
        kind = rng.choices(kinds, weights)[0]
        tw.add(rng.choice(specs), kind, _split_for(i, n_tweets), ner=ner)
    return Corpus(entities, counts, tw.ds, kinds=tw.kinds)


def make_disjoint_corpus(seed: int = 0, n_entities: int = 200, n_tweets: int = 60) -> Corpus:
    """Half the golds reachable only by alias match, half only by embedding similarity."""
    rng = random.Random(seed)
    words = _Words(rng)
    specs = _make_entities(rng, words, n_entities, list(_TOPICS), n_entities, True)
    counts = _alias_counts(rng, specs)
    taken = {normalize_surface(s) for s, _, _ in counts}
    tw = _TweetWriter(rng, taken)
    golds = rng.sample(specs, n_tweets)
    for i, spec in enumerate(golds):
        tw.add(spec, "alias" if i % 2 == 0 else "misspell", "academic" if i % 4 < 2 else "ood")
    return Corpus([s.entity for s in specs], counts, tw.ds, kinds=tw.kinds)


def make_shared_short_corpus(seed: int = 0, n_entities: int = 150, n_tweets: int = 120) -> Corpus:
    """Every entity shares one short description and few first names exist.

    Mentions use the bare first name with signature-word context, so only the
    long descriptions tell same-named entities apart.
    """
    rng = random.Random(seed)
    words = _Words(rng)
    specs = _make_entities(rng, words, n_entities, ["bird"], max(3, n_entities // 12), False,
                           shared_short="species of bird")
    counts = _alias_counts(rng, specs)
    taken = {normalize_surface(s) for s, _, _ in counts}
    tw = _TweetWriter(rng, taken)
    for i in range(n_tweets):
        tw.add(rng.choice(specs), "first", _split_for(i, n_tweets))
    return Corpus([s.entity for s in specs], counts, tw.ds, kinds=tw.kinds)


def make_separable_spans(
    seed: int = 0,
    n_spans: int = 400,
    n_candidates: int = 8,
    nil_fraction: float = 0.25,
    offset: float = 2.0,
) -> list[LabeledSpan]:
    """Feature-level training data, linearly separable on ``cond_prob``.

    Every candidate draws ``cond_prob`` from U(0, 1) and the other features
    from N(0, 1); the gold candidate of a linkable span gets ``+offset`` on
    ``cond_prob``. NIL spans contain only negatives, so a prior-argmax picker
    (which never abstains) pays a false positive on each of them.
    """
    rng = np.random.default_rng(seed)
    j = FEATURE_NAMES.index("cond_prob")
    out = []
    for i in range(n_spans):
        X = rng.standard_normal((n_candidates, len(FEATURE_NAMES)))
        X[:, j] = rng.uniform(0.0, 1.0, n_candidates)
        ids = [f"Q{i}_{c}" for c in range(n_candidates)]
        gold: frozenset[str] = frozenset()
        if rng.random() >= nil_fraction:
            g = int(rng.integers(n_candidates))
            X[g, j] += offset
            gold = frozenset({ids[g]})
        out.append(LabeledSpan((f"s{i:05d}", 0, 1), ids, X, gold))
    return out


def write_config(path: str | Path, data_dir: str | Path, output_dir: str | Path, **overrides) -> Path:
    """Minimal pipeline config pointing at a written corpus."""
    data_dir = Path(data_dir)
    cfg = {
        "paths": {
            "entities": str(data_dir / "entities.jsonl"),
            "denylist": str(data_dir / "denylist.txt"),
            "alias_counts": str(data_dir / "alias_counts.tsv"),
            "dataset": str(data_dir / "dataset.jsonl"),
            "output_dir": str(output_dir),
        },
    }
    for key, value in overrides.items():
        cfg[key] = value
    path = Path(path)
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
