"""Pipeline configuration: JSON file -> nested dataclasses, with dot-path overrides."""

from __future__ import annotations

import dataclasses
import json
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from hybridel.retrieval import METHODS


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class PathsConfig:
    entities: str = ""
    output_dir: str = ""
    denylist: str | None = None
    alias_counts: str | None = None
    dataset: str | None = None
    # precomputed vectors: entity-id keyed, and mention-key keyed ("tweet:start:end")
    vectors: str | None = None
    mention_vectors: str | None = None


@dataclass
class NormalizationSection:
    case_fold: bool = True
    collapse_whitespace: bool = True
    strip_outer_punct: bool = False


@dataclass
class RetrievalSection:
    k: int = 16
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    hybrid_methods: list[str] = field(default_factory=lambda: ["lookup", "dense"])
    curve_ks: list[int] = field(default_factory=lambda: list(range(1, 65)))
    dense_mode: str = "exact"
    n_cells: int | None = None
    nprobe: int = 8
    recall_floor: float = 0.95


@dataclass
class Bm25Section:
    k1: float = 0.9
    b: float = 0.4
    abstract_sentences: int = 10


@dataclass
class EmbedderSection:
    kind: str = "reference_hash"
    dim: int = 256


@dataclass
class DisambiguationSection:
    learning_rate: float = 0.5
    epochs: int = 300
    heldout_fraction: float = 0.1
    candidate_methods: list[str] = field(default_factory=lambda: ["dense", "lookup"])
    span_source: str = "gold"


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    description_mode: str = "long"
    max_sentences: int = 10
    normalization: NormalizationSection = field(default_factory=NormalizationSection)
    bm25: Bm25Section = field(default_factory=Bm25Section)
    embedder: EmbedderSection = field(default_factory=EmbedderSection)
    disambiguation: DisambiguationSection = field(default_factory=DisambiguationSection)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def echo(self) -> dict:
        """Resolved config for embedding into reports."""
        return self.to_dict()


def _coerce(value: Any, tp: Any, where: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return [_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls: type, data: Any, where: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where + '.' if where else ''}{unknown[0]}: unknown field")
    kwargs = {
        k: _coerce(v, hints[k], f"{where}.{k}" if where else k) for k, v in data.items()
    }
    return cls(**kwargs)


def apply_override(data: dict, override: str) -> None:
    """Apply ``a.b.c=value`` in place; value is parsed as JSON, else taken as a string."""
    if "=" not in override:
        raise ConfigError(f"override {override!r}: expected key=value")
    key, raw = override.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key}: {p} is not an object")
    node[parts[-1]] = value


def _check(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def validate(cfg: PipelineConfig, check_paths: bool = True) -> None:
    r = cfg.retrieval
    _check(r.k >= 1, "retrieval.k", "must be >= 1")
    for i, m in enumerate(r.methods):
        _check(m in METHODS, f"retrieval.methods[{i}]", f"must be one of {list(METHODS)}")
    for i, m in enumerate(r.hybrid_methods):
        _check(m in r.methods, f"retrieval.hybrid_methods[{i}]", "must be an enabled method")
    _check(bool(r.curve_ks) and all(k >= 1 for k in r.curve_ks), "retrieval.curve_ks", "must be positive")
    _check(r.curve_ks == sorted(set(r.curve_ks)), "retrieval.curve_ks", "must be strictly ascending")
    _check(r.dense_mode in ("exact", "approximate"), "retrieval.dense_mode", "must be exact or approximate")
    _check(r.nprobe >= 1, "retrieval.nprobe", "must be >= 1")
    _check(r.n_cells is None or r.n_cells >= 1, "retrieval.n_cells", "must be >= 1")
    _check(0.0 <= r.recall_floor <= 1.0, "retrieval.recall_floor", "must be in [0, 1]")
    _check(cfg.description_mode in ("long", "short"), "description_mode", "must be long or short")
    _check(cfg.max_sentences >= 1, "max_sentences", "must be >= 1")
    _check(cfg.bm25.k1 >= 0, "bm25.k1", "must be >= 0")
    _check(0.0 <= cfg.bm25.b <= 1.0, "bm25.b", "must be in [0, 1]")
    _check(cfg.bm25.abstract_sentences >= 1, "bm25.abstract_sentences", "must be >= 1")
    _check(cfg.embedder.kind in ("reference_hash", "precomputed"), "embedder.kind",
           "must be reference_hash or precomputed")
    _check(cfg.embedder.dim >= 1, "embedder.dim", "must be >= 1")
    d = cfg.disambiguation
    _check(d.learning_rate > 0, "disambiguation.learning_rate", "must be > 0")
    _check(d.epochs >= 0, "disambiguation.epochs", "must be >= 0")
    _check(0.0 <= d.heldout_fraction < 1.0, "disambiguation.heldout_fraction", "must be in [0, 1)")
    _check(d.span_source in ("gold", "ner"), "disambiguation.span_source", "must be gold or ner")
    for i, m in enumerate(d.candidate_methods):
        _check(m in (*METHODS, "hybrid"), f"disambiguation.candidate_methods[{i}]",
               "must be a retrieval method or hybrid")
    if cfg.embedder.kind == "precomputed":
        _check(bool(cfg.paths.vectors), "paths.vectors", "required for precomputed embeddings")
        _check(bool(cfg.paths.mention_vectors), "paths.mention_vectors",
               "required for precomputed embeddings")

    p = cfg.paths
    _check(bool(p.entities), "paths.entities", "required")
    _check(bool(p.output_dir), "paths.output_dir", "required")
    if not check_paths:
        return
    for name in ("entities", "denylist", "alias_counts", "dataset", "vectors", "mention_vectors"):
        value = getattr(p, name)
        if value:
            _check(Path(value).is_file(), f"paths.{name}", f"file not found: {value}")
    out = Path(p.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"paths.output_dir: cannot create {out} ({exc.strerror})") from None
    _check(os.access(out, os.W_OK), "paths.output_dir", f"not writable: {out}")


def load_config(
    path: str | Path | None = None,
    overrides: typing.Sequence[str] = (),
    data: dict | None = None,
    check_paths: bool = True,
) -> PipelineConfig:
    if data is None:
        if path is None:
            raise ConfigError("config: no file given")
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config: file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON at line {exc.lineno} ({exc.msg})") from None
    else:
        data = json.loads(json.dumps(data))
    for o in overrides:
        apply_override(data, o)
    cfg = _build(PipelineConfig, data, "")
    # relative paths resolve against the config file's directory
    if path is not None:
        base = Path(path).resolve().parent
        for f in dataclasses.fields(PathsConfig):
            v = getattr(cfg.paths, f.name)
            if v and not Path(v).is_absolute():
                setattr(cfg.paths, f.name, str(base / v))
    validate(cfg, check_paths=check_paths)
    return cfg
