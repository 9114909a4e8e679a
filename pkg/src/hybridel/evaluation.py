"""Candidate-generation and disambiguation metrics.

Recall is computed over non-NIL gold spans. A span with several gold ids counts
as a hit when any of them is retrieved. ``overall`` pools the academic and OOD
instances before dividing; it is not an average of the two split recalls.

Two matching modes:

``span_aligned``
    a gold span is hit if its own candidate set (same tweet and offsets)
    contains a gold id.
``tweet_level``
    a gold span is hit if the union of all candidate sets in its tweet
    contains a gold id. Use this for NER spans, whose offsets need not match.
"""

from __future__ import annotations

import csv
import itertools
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

from hybridel.encoding import SpanAnnotation
from hybridel.retrieval import CandidateSet

SPLITS = ("academic", "ood", "train")
REPORT_SPLITS = ("academic", "ood", "overall")
MATCH_MODES = ("span_aligned", "tweet_level")
OVERLAP_METHODS = ("lookup", "dense", "bm25")
# values TweetNERD-style files use for "no linkable entity"
NIL_SENTINELS = frozenset({"", "NOT FOUND", "AMBIGUOUS", "NIL", "None", "nan"})

SpanKey = tuple  # (tweet_id, start, end)
MethodRuns = Mapping[str, Mapping[SpanKey, CandidateSet]]


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    tweets: dict[str, str] = field(default_factory=dict)
    spans: list[SpanAnnotation] = field(default_factory=list)
    split_of: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        for tid, split in self.split_of.items():
            if split not in SPLITS:
                raise DatasetError(f"tweet {tid}: unknown split {split!r}")
        for span in self.spans:
            if span.tweet_id not in self.tweets:
                raise DatasetError(f"span references unknown tweet {span.tweet_id!r}")
            span.validate(self.tweets[span.tweet_id])

    def spans_of(self, source: str, splits: Iterable[str] | None = None) -> list[SpanAnnotation]:
        wanted = set(splits) if splits is not None else None
        return [
            s for s in self.spans
            if s.source == source and (wanted is None or self.split_of[s.tweet_id] in wanted)
        ]


def load_dataset(lines: Iterable[str]) -> Dataset:
    ds = Dataset()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            tid = str(rec["tweet_id"])
            text = rec["text"]
            split = rec["split"]
            if tid in ds.tweets:
                raise DatasetError(f"duplicate tweet id {tid!r}")
            ds.tweets[tid] = text
            ds.split_of[tid] = split
            for sp in rec.get("spans", []):
                ds.spans.append(
                    SpanAnnotation(
                        tweet_id=tid,
                        start=int(sp["start"]),
                        end=int(sp["end"]),
                        surface=sp["surface"],
                        gold_ids=tuple(sp.get("gold_ids") or ()),
                        source=sp.get("source", "gold"),
                    )
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
    ds.validate()
    return ds


def dataset_records(ds: Dataset) -> Iterator[dict]:
    by_tweet: dict[str, list[SpanAnnotation]] = defaultdict(list)
    for s in ds.spans:
        by_tweet[s.tweet_id].append(s)
    for tid in ds.tweets:
        yield {
            "tweet_id": tid,
            "text": ds.tweets[tid],
            "split": ds.split_of[tid],
            "spans": [
                {"start": s.start, "end": s.end, "surface": s.surface,
                 "gold_ids": list(s.gold_ids), "source": s.source}
                for s in by_tweet[tid]
            ],
        }


def write_dataset(fh: IO[str], ds: Dataset) -> None:
    for rec in dataset_records(ds):
        fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def from_tweetnerd_tsv(
    lines: Iterable[str], texts: Mapping[str, str], split: str, source: str = "gold"
) -> Dataset:
    """Adapt TweetNERD-style TSV (id, phrase, start, end, entityId, ...) to a :class:`Dataset`.

    Tweet texts are not part of the TSV and must be supplied. A header row is
    recognised by a non-numeric ``start`` column. Rows for tweets without text
    are skipped; sentinel entity values become NIL.
    """
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}")
    ds = Dataset()
    seen: dict[tuple[str, int, int], int] = {}
    for n, row in enumerate(csv.reader(lines, delimiter="\t")):
        if not row or (n == 0 and (len(row) < 3 or not row[2].strip().lstrip("-").isdigit())):
            continue
        if len(row) < 4:
            raise DatasetError(f"row {n + 1}: expected at least 4 tab-separated fields")
        tid, phrase, start, end, ent = (row + [""] * 5)[:5]
        if tid not in texts:
            continue
        ds.tweets[tid] = texts[tid]
        ds.split_of[tid] = split
        start_i, end_i = int(start), int(end)
        gold = () if ent.strip() in NIL_SENTINELS else (ent.strip(),)
        key = (tid, start_i, end_i)
        if key in seen:
            # repeated annotations of one span: pool their gold ids
            old = ds.spans[seen[key]]
            merged = tuple(dict.fromkeys(old.gold_ids + gold))
            ds.spans[seen[key]] = SpanAnnotation(tid, start_i, end_i, old.surface, merged, source)
            continue
        seen[key] = len(ds.spans)
        ds.spans.append(SpanAnnotation(tid, start_i, end_i, phrase, gold, source))
    ds.validate()
    return ds


# --------------------------------------------------------------------------- instances


@dataclass(frozen=True)
class GoldInstance:
    tweet_id: str
    start: int
    end: int
    gold_ids: frozenset[str]
    split: str

    @property
    def key(self) -> SpanKey:
        return (self.tweet_id, self.start, self.end)


def gold_instances(ds: Dataset) -> list[GoldInstance]:
    """Non-NIL gold spans outside the train split, in a canonical order."""
    out = [
        GoldInstance(s.tweet_id, s.start, s.end, frozenset(s.gold_ids), ds.split_of[s.tweet_id])
        for s in ds.spans
        if s.source == "gold" and s.gold_ids and ds.split_of[s.tweet_id] != "train"
    ]
    out.sort(key=lambda g: (g.tweet_id, g.start, g.end))
    return out


def _in_split(inst: GoldInstance, split: str) -> bool:
    if split == "overall":
        return inst.split in ("academic", "ood")
    return inst.split == split


def _ids_at_k(cset: CandidateSet, k: int | None, uncapped: frozenset[str]) -> set[str]:
    if k is None:
        return {c.entity_id for c in cset.candidates}
    return {
        c.entity_id for c in cset.candidates
        if any(m in uncapped or r < k for m, r in c.ranks.items())
    }


def hit_set(
    sets: Mapping[SpanKey, CandidateSet],
    instances: Sequence[GoldInstance],
    k: int | None = None,
    mode: str = "span_aligned",
    uncapped: Iterable[str] = ("lookup",),
) -> frozenset[int]:
    """Indices of ``instances`` retrieved within each method's top ``k``."""
    if mode not in MATCH_MODES:
        raise ValueError(f"mode must be one of {MATCH_MODES}")
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    uncapped = frozenset(uncapped)
    if mode == "span_aligned":
        pools = {key: _ids_at_k(cs, k, uncapped) for key, cs in sets.items()}
        get = lambda inst: pools.get(inst.key, ())  # noqa: E731
    else:
        pools = defaultdict(set)
        for cs in sets.values():
            pools[cs.tweet_id] |= _ids_at_k(cs, k, uncapped)
        get = lambda inst: pools.get(inst.tweet_id, ())  # noqa: E731
    return frozenset(i for i, inst in enumerate(instances) if not inst.gold_ids.isdisjoint(get(inst)))


def recall_from_hits(
    hits: frozenset[int], instances: Sequence[GoldInstance], splits: Sequence[str] = REPORT_SPLITS
) -> dict[str, float]:
    out = {}
    for split in splits:
        if split not in REPORT_SPLITS:
            raise ValueError(f"unknown split label {split!r}")
        idx = [i for i, inst in enumerate(instances) if _in_split(inst, split)]
        if idx:
            out[split] = sum(1 for i in idx if i in hits) / len(idx)
    return out


def recall_at_k(
    sets: Mapping[SpanKey, CandidateSet],
    instances: Sequence[GoldInstance],
    k: int = 16,
    mode: str = "span_aligned",
    splits: Sequence[str] = REPORT_SPLITS,
    uncapped: Iterable[str] = ("lookup",),
) -> dict[str, float]:
    """Per-split recall; splits without instances are omitted."""
    return recall_from_hits(hit_set(sets, instances, k, mode, uncapped), instances, splits)


def recall_curve(
    runs: MethodRuns,
    instances: Sequence[GoldInstance],
    ks: Sequence[int],
    mode: str = "span_aligned",
    split: str = "overall",
    uncapped: Iterable[str] = ("lookup",),
) -> dict[str, list[tuple[int, float]]]:
    if list(ks) != sorted(ks):
        raise ValueError("ks must be ascending")
    curves = {}
    for method, sets in runs.items():
        pts = []
        for k in ks:
            r = recall_at_k(sets, instances, k, mode, (split,), uncapped)
            pts.append((k, r.get(split, 0.0)))
        curves[method] = pts
    return curves


def unique_correct(hits: Mapping[str, frozenset[int]], definition: str = "exclusive") -> dict[str, int]:
    if definition == "total":
        return {m: len(h) for m, h in hits.items()}
    if definition != "exclusive":
        raise ValueError("definition must be 'exclusive' or 'total'")
    out = {}
    for m, h in hits.items():
        others = set().union(*(o for n, o in hits.items() if n != m))
        out[m] = len(h - others)
    return out


@dataclass(frozen=True)
class OverlapRow:
    pattern: tuple[bool, ...]
    count: int
    proportion: float


def overlap_table(
    hits: Mapping[str, frozenset[int]],
    denominator: Iterable[int],
    methods: Sequence[str] = OVERLAP_METHODS,
) -> list[OverlapRow]:
    """One row per Y/N presence pattern over ``methods``, all-Y first."""
    universe = list(denominator)
    counts: dict[tuple[bool, ...], int] = defaultdict(int)
    for i in universe:
        counts[tuple(i in hits[m] for m in methods)] += 1
    n = len(universe)
    return [
        OverlapRow(p, counts[p], counts[p] / n if n else 0.0)
        for p in itertools.product((True, False), repeat=len(methods))
    ]


def f1_score(
    predicted: Mapping[SpanKey, str | None], gold: Mapping[SpanKey, Iterable[str] | str | None]
) -> tuple[float, float, float]:
    """Micro precision/recall/F1; spans absent on one side count as NIL there."""
    tp = fp = fn = 0
    for key in set(predicted) | set(gold):
        pred = predicted.get(key)
        g = gold.get(key)
        golds = {g} if isinstance(g, str) else set(g or ())
        if pred is not None and pred in golds:
            tp += 1
            continue
        if pred is not None:
            fp += 1
        if golds:
            fn += 1
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


# --------------------------------------------------------------------------- reports


@dataclass
class EvalSection:
    """Metrics for one span source (gold or NER spans) at one k."""

    mode: str
    k: int
    recall: dict[str, dict[str, float]]
    curves: dict[str, list[tuple[int, float]]]
    unique_correct: dict[str, dict[str, dict[str, int]]]
    overlap: dict[str, list[OverlapRow]]
    overlap_methods: tuple[str, ...]
    denominators: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "denominators": self.denominators,
            "recall": self.recall,
            "curves": {m: [[k, r] for k, r in pts] for m, pts in self.curves.items()},
            "unique_correct": self.unique_correct,
            "overlap_methods": list(self.overlap_methods),
            "overlap": {
                split: [
                    {"pattern": ["Y" if b else "N" for b in row.pattern],
                     "count": row.count, "proportion": row.proportion}
                    for row in rows
                ]
                for split, rows in self.overlap.items()
            },
        }


def evaluate_runs(
    runs: MethodRuns,
    instances: Sequence[GoldInstance],
    k: int = 16,
    mode: str = "span_aligned",
    curve_ks: Sequence[int] = tuple(range(1, 65)),
    overlap_methods: Sequence[str] = OVERLAP_METHODS,
) -> EvalSection:
    """Recall table, curves, unique-correct counts and overlap rows for ``runs``.

    ``runs`` maps a method name (``hybrid`` included) to its candidate sets.
    """
    hits = {m: hit_set(sets, instances, k, mode) for m, sets in runs.items()}
    recall = {m: recall_from_hits(h, instances) for m, h in hits.items()}
    curves = recall_curve(runs, instances, curve_ks, mode)
    base = {m: h for m, h in hits.items() if m != "hybrid"}
    uniq: dict[str, dict[str, dict[str, int]]] = {}
    overlap = {}
    denominators = {}
    methods = tuple(m for m in overlap_methods if m in hits)
    for split in REPORT_SPLITS:
        idx = frozenset(i for i, inst in enumerate(instances) if _in_split(inst, split))
        if not idx:
            continue
        denominators[split] = len(idx)
        split_hits = {m: h & idx for m, h in base.items()}
        uniq[split] = {d: unique_correct(split_hits, d) for d in ("exclusive", "total")}
        overlap[split] = overlap_table(split_hits, sorted(idx), methods)
    return EvalSection(mode, k, recall, curves, uniq, overlap, methods, denominators)


def _fmt_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = lambda r: "  ".join(  # noqa: E731
        str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(r, widths))
    )
    rule = "-" * len(line(header))
    return "\n".join([rule, line(header), rule, *map(line, rows), rule])


def render_section(title: str, sec: EvalSection) -> str:
    methods = [m for m in ("dense", "lookup", "bm25", "hybrid") if m in sec.recall]
    label = {"academic": "Academic", "ood": "OOD", "overall": "Overall"}
    parts = [f"{title}: candidate generation (R@{sec.k}, {sec.mode})"]
    parts.append(_fmt_table(
        ["Data Split", *[m.capitalize() if m != "bm25" else "BM25" for m in methods]],
        [[label[s], *[f"{sec.recall[m].get(s, 0.0):.3f}" for m in methods]] for s in sec.denominators],
    ))
    base = [m for m in methods if m != "hybrid"]
    for d in ("exclusive", "total"):
        parts.append(f"\n{title}: unique correct candidates ({d})")
        parts.append(_fmt_table(
            ["Data Split", *[m.capitalize() if m != "bm25" else "BM25" for m in base]],
            [[label[s], *[f"{sec.unique_correct[s][d].get(m, 0):,}" for m in base]]
             for s in sec.denominators],
        ))
    if "overall" in sec.overlap and sec.overlap_methods:
        parts.append(f"\n{title}: candidate overlap (overall, n={sec.denominators['overall']:,})")
        names = [m.capitalize() if m != "bm25" else "BM25" for m in sec.overlap_methods]
        parts.append(_fmt_table(
            [*names, "counts", "prop"],
            [[*("Y" if b else "N" for b in row.pattern), f"{row.count:,}", f"{row.proportion:.2f}"]
             for row in sec.overlap["overall"]],
        ))
    return "\n".join(parts)


_ROW_LABELS = {"ood": "OOD", "bm25": "BM25"}


def render_prf_table(
    rows: Mapping[str, Mapping[str, tuple[float, float, float]]], row_header: str = "Description"
) -> str:
    """Ablation layout: one block per backend, one row per description mode (or split)."""

    def name(s: str) -> str:
        return _ROW_LABELS.get(s, s.capitalize())

    body = []
    for backend, by_mode in rows.items():
        body.append([name(backend), "", "", ""])
        for mode, (p, r, f) in by_mode.items():
            body.append([f"  {name(mode)}", f"{r:.3f}", f"{p:.3f}", f"{f:.3f}"])
    return _fmt_table([row_header, "Recall", "Precision", "F1"], body)
