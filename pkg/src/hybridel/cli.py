"""Command-line entry point.

    hybridel --config run.json --command evaluate [--override retrieval.k=32 ...]

Exit status: 0 success, 1 invalid configuration, 2 runtime failure.
Set ``HYBRIDEL_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path
from typing import Callable

from hybridel import pipeline
from hybridel.config import ConfigError, PipelineConfig, load_config
from hybridel.dense_index import save_index
from hybridel.disambiguation import RankerModel
from hybridel.evaluation import render_prf_table, render_section
from hybridel.kb_store import write_entities
from hybridel.retrieval import candidate_record, hybrid_union

logger = logging.getLogger("hybridel")

COMMANDS = (
    "ingest",
    "build-index",
    "retrieve",
    "evaluate",
    "overlap-report",
    "ablate",
    "disambig-train",
    "disambig-eval",
)

ASSUMPTIONS = [
    "overall = academic and OOD gold instances pooled before division",
    "NIL gold spans excluded from recall denominators",
    "lookup candidates are never cut at k; dense and bm25 keep their top k",
    "gold spans matched span-aligned; NER spans matched tweet-level",
]


class Outputs:
    """Atomic writes into the output dir; files written by a failed command are removed."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, text: str) -> Path:
        dest = self.path(name)
        tmp = dest.with_name(dest.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, dest)
        self.written.append(dest)
        return dest

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def track(self, path: Path) -> None:
        self.written.append(path)

    def rollback(self) -> None:
        for p in self.written:
            for q in (p, p.with_name(p.name + ".tmp")):
                if q.exists():
                    q.unlink()


def _header(cfg: PipelineConfig, command: str) -> dict:
    return {"command": command, "config": cfg.echo(), "assumptions": ASSUMPTIONS}


def cmd_ingest(cfg: PipelineConfig, out: Outputs) -> None:
    store, n_before = pipeline.load_store(cfg)
    lines = []

    class _Buf:
        def write(self, s: str) -> None:
            lines.append(s)

    write_entities(store, _Buf())
    out.write_text("entities.filtered.jsonl", "".join(lines))
    out.write_json("ingest.json", {
        **_header(cfg, "ingest"),
        "entities_before_filter": n_before,
        "entities_after_filter": len(store),
    })
    logger.info("ingest: %d -> %d entities", n_before, len(store))


def cmd_build_index(cfg: PipelineConfig, out: Outputs) -> None:
    store, _ = pipeline.load_store(cfg)
    backends = pipeline.build_backends(cfg, store, use_saved_index=False)
    summary = {**_header(cfg, "build-index"), "entities": len(store)}
    if backends.dense_index is not None:
        path = pipeline.index_path(cfg, cfg.description_mode)
        out.track(path)
        save_index(path, backends.dense_index)
        summary["dense"] = {
            "file": path.name,
            "mode": backends.dense_index.mode,
            "dim": backends.dense_index.dim,
            "measured_recall_at_16": backends.dense_index.measured_recall,
        }
    table = backends.alias_table
    out.write_text("alias_table.jsonl", "".join(
        json.dumps({"surface": key, "entries": [[e.entity_id, e.count, e.prob] for e in entries]},
                   ensure_ascii=False) + "\n"
        for key, entries in table.entries.items()
    ))
    summary["alias_table"] = {"surfaces": len(table), "skipped_unknown_ids": table.skipped_unknown}
    if backends.bm25 is not None:
        summary["bm25"] = {
            "documents": backends.bm25.doc_count,
            "terms": len(backends.bm25.postings),
            "avg_doc_length": backends.bm25.avg_doc_length,
        }
    out.write_json("index.json", summary)


def _context(cfg: PipelineConfig):
    store, _ = pipeline.load_store(cfg)
    ds = pipeline.load_data(cfg)
    return store, ds, pipeline.build_backends(cfg, store)


def cmd_retrieve(cfg: PipelineConfig, out: Outputs) -> None:
    store, ds, backends = _context(cfg)
    r = cfg.retrieval
    summary = {**_header(cfg, "retrieve"), "sources": {}}
    for source in ("gold", "ner"):
        spans = ds.spans_of(source)
        if not spans:
            continue
        runs = pipeline.retrieve_spans(ds, spans, backends, r.methods, r.k, r.hybrid_methods)
        lines = []
        for span in spans:
            parts = [runs[m][span.key] for m in r.methods]
            merged = hybrid_union(*parts) if len(parts) > 1 else parts[0]
            lines.append(json.dumps(candidate_record(merged), ensure_ascii=False) + "\n")
        out.write_text(f"candidates.{source}.jsonl", "".join(lines))
        stats = {}
        for m in [*r.methods, *(["hybrid"] if "hybrid" in runs else [])]:
            sizes = [len(runs[m][s.key]) for s in spans]
            stats[m] = {"mean": statistics.fmean(sizes), "median": statistics.median(sizes), "max": max(sizes)}
        summary["sources"][source] = {"spans": len(spans), "candidates_per_span": stats}
    out.write_json("retrieve.json", summary)


def _eval_payload(cfg: PipelineConfig, sections) -> tuple[dict, str]:
    payload = {**_header(cfg, "evaluate"), "sections": {k: v.to_dict() for k, v in sections.items()}}
    text = "\n\n".join(
        render_section("Gold spans" if src == "gold" else "NER spans", sec) for src, sec in sections.items()
    )
    return payload, "# " + "\n# ".join(ASSUMPTIONS) + "\n\n" + text + "\n"


def cmd_evaluate(cfg: PipelineConfig, out: Outputs) -> None:
    _, ds, backends = _context(cfg)
    sections = pipeline.evaluate(cfg, ds, backends)
    payload, text = _eval_payload(cfg, sections)
    out.write_json("report.json", payload)
    out.write_text("report.txt", text)


def cmd_overlap_report(cfg: PipelineConfig, out: Outputs) -> None:
    _, ds, backends = _context(cfg)
    sections = pipeline.evaluate(cfg, ds, backends)
    payload = {**_header(cfg, "overlap-report"), "sections": {}}
    text = []
    for src, sec in sections.items():
        d = sec.to_dict()
        payload["sections"][src] = {
            "mode": d["mode"], "k": d["k"], "denominators": d["denominators"],
            "overlap_methods": d["overlap_methods"], "overlap": d["overlap"],
            "unique_correct": d["unique_correct"],
        }
        text.append(render_section("Gold spans" if src == "gold" else "NER spans", sec))
    out.write_json("overlap.json", payload)
    out.write_text("overlap.txt", "\n\n".join(text) + "\n")


def cmd_ablate(cfg: PipelineConfig, out: Outputs) -> None:
    store, _ = pipeline.load_store(cfg)
    ds = pipeline.load_data(cfg)
    table = pipeline.ablate(cfg, ds, store)
    out.write_json("ablation.json", {
        **_header(cfg, "ablate"),
        "span_source": cfg.disambiguation.span_source,
        "results": {
            m: {mode: {"precision": p, "recall": r, "f1": f} for mode, (p, r, f) in by_mode.items()}
            for m, by_mode in table.items()
        },
    })
    out.write_text("ablation.txt", "Entity disambiguation by description length (overall)\n"
                   + render_prf_table(table) + "\n")


def cmd_disambig_train(cfg: PipelineConfig, out: Outputs) -> None:
    _, ds, backends = _context(cfg)
    summary = {**_header(cfg, "disambig-train"), "models": {}}
    for method in cfg.disambiguation.candidate_methods:
        model = pipeline.train_disambiguator(cfg, ds, backends, method)
        out.write_text(f"model.{method}.txt", model.dumps())
        summary["models"][method] = {
            "file": f"model.{method}.txt",
            "final_loss": model.loss_history[-1] if model.loss_history else None,
            "warnings": model.warnings,
        }
    out.write_json("disambig_train.json", summary)


def cmd_disambig_eval(cfg: PipelineConfig, out: Outputs) -> None:
    _, ds, backends = _context(cfg)
    results = {}
    for method in cfg.disambiguation.candidate_methods:
        path = out.path(f"model.{method}.txt")
        if not path.is_file():
            raise FileNotFoundError(f"{path} missing; run disambig-train first")
        model = RankerModel.load(path)
        results[method] = pipeline.evaluate_disambiguator(cfg, ds, backends, model, method)
    out.write_json("disambig.json", {
        **_header(cfg, "disambig-eval"),
        "span_source": cfg.disambiguation.span_source,
        "results": {
            m: {s: {"precision": p, "recall": r, "f1": f} for s, (p, r, f) in by_split.items()}
            for m, by_split in results.items()
        },
    })
    out.write_text("disambig.txt", "Entity disambiguation by split\n"
                   + render_prf_table(results, row_header="Split") + "\n")


HANDLERS: dict[str, Callable[[PipelineConfig, Outputs], None]] = {
    "ingest": cmd_ingest,
    "build-index": cmd_build_index,
    "retrieve": cmd_retrieve,
    "evaluate": cmd_evaluate,
    "overlap-report": cmd_overlap_report,
    "ablate": cmd_ablate,
    "disambig-train": cmd_disambig_train,
    "disambig-eval": cmd_disambig_eval,
}


def run_pipeline(cfg: PipelineConfig, command: str) -> int:
    out = Outputs(cfg.paths.output_dir)
    try:
        HANDLERS[command](cfg, out)
    except Exception as exc:  # noqa: BLE001
        out.rollback()
        logger.error("%s failed: %s", command, exc)
        logger.debug("traceback", exc_info=True)
        return 2
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hybridel", description=__doc__.split("\n")[0])
    parser.add_argument("--config", required=True, help="pipeline config (JSON)")
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path config override, repeatable")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=os.environ.get("HYBRIDEL_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run_pipeline(cfg, args.command)


if __name__ == "__main__":
    sys.exit(main())
