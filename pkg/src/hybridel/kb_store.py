"""Entity knowledge-base records: loading, type filtering and description access.

The entities file is JSON Lines, one entity per line::

    {"id": "Q290856", "title": "Amber Rose", "long_description": "...",
     "short_description": "American model", "aliases": ["Amber"],
     "type_tags": ["Q5"], "pagerank": 3.1, "link_count": 812}

Only ``id`` and ``title`` are required.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Mapping

from hybridel.text import NormalizationConfig, normalize_surface

logger = logging.getLogger(__name__)

DESCRIPTION_MODES = ("long", "short")

# Non-authoritative starting point: Wikimedia disambiguation page, Wikimedia list article,
# Wikimedia category, Wikimedia template. Operators should ship their own list.
DEFAULT_DENYLIST = frozenset({"Q4167410", "Q13406463", "Q4167836", "Q11266439"})


class KBError(ValueError):
    """Raised for malformed entity data."""


class UnknownEntityError(KeyError):
    def __init__(self, entity_id: str):
        super().__init__(entity_id)
        self.entity_id = entity_id

    def __str__(self) -> str:
        return f"unknown entity id {self.entity_id!r}"


@dataclass(frozen=True)
class Entity:
    id: str
    title: str
    long_description: str = ""
    short_description: str = ""
    aliases: tuple[str, ...] = ()
    type_tags: tuple[str, ...] = ()
    pagerank: float = 0.0
    link_count: int = 0

    def __post_init__(self) -> None:
        if not self.id:
            raise KBError("entity id must be non-empty")
        if not self.title:
            raise KBError(f"entity {self.id!r} has an empty title")
        if self.pagerank < 0 or self.link_count < 0:
            raise KBError(f"entity {self.id!r} has a negative prior")
        cfg = NormalizationConfig()
        seen: dict[str, str] = {}
        deduped = []
        for alias in self.aliases:
            key = normalize_surface(alias, cfg)
            if key and key not in seen:
                seen[key] = alias
                deduped.append(alias)
        object.__setattr__(self, "aliases", tuple(deduped))
        object.__setattr__(self, "type_tags", tuple(self.type_tags))

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "long_description": self.long_description,
            "short_description": self.short_description,
            "aliases": list(self.aliases),
            "type_tags": list(self.type_tags),
            "pagerank": self.pagerank,
            "link_count": self.link_count,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Entity":
        for key in ("id", "title"):
            if key not in rec:
                raise KBError(f"missing required field {key!r}")
        return cls(
            id=str(rec["id"]),
            title=str(rec["title"]),
            long_description=rec.get("long_description") or "",
            short_description=rec.get("short_description") or "",
            aliases=tuple(rec.get("aliases") or ()),
            type_tags=tuple(rec.get("type_tags") or ()),
            pagerank=float(rec.get("pagerank") or 0.0),
            link_count=int(rec.get("link_count") or 0),
        )


@dataclass(frozen=True)
class TypeFilter:
    denylist: frozenset[str] = frozenset()
    mode: str = "drop_if_any_match"

    def __post_init__(self) -> None:
        if self.mode != "drop_if_any_match":
            raise ValueError(f"unsupported filter mode {self.mode!r}")
        object.__setattr__(self, "denylist", frozenset(self.denylist))

    def keeps(self, entity: Entity) -> bool:
        return self.denylist.isdisjoint(entity.type_tags)


@dataclass(frozen=True)
class EntityStore:
    """Immutable id-keyed entity collection."""

    entities: Mapping[str, Entity] = field(default_factory=dict)
    description_mode: str = "long"

    def __post_init__(self) -> None:
        if self.description_mode not in DESCRIPTION_MODES:
            raise ValueError(f"description_mode must be one of {DESCRIPTION_MODES}")
        # sorted by id so iteration order never depends on input order
        ordered = {k: self.entities[k] for k in sorted(self.entities)}
        object.__setattr__(self, "entities", MappingProxyType(ordered))

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, entity_id: object) -> bool:
        return entity_id in self.entities

    def __iter__(self) -> Iterator[Entity]:
        return iter(self.entities.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EntityStore):
            return NotImplemented
        return (
            self.description_mode == other.description_mode
            and dict(self.entities) == dict(other.entities)
        )

    def __hash__(self) -> int:
        return hash((self.description_mode, tuple(self.entities)))

    def get(self, entity_id: str) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise UnknownEntityError(entity_id) from None

    def ids(self) -> list[str]:
        return list(self.entities)

    def with_mode(self, mode: str) -> "EntityStore":
        return EntityStore(self.entities, description_mode=mode)


def iter_entity_records(source: Iterable[str]) -> Iterator[tuple[int, Entity]]:
    """Yield ``(line_number, Entity)`` from JSON lines, skipping blank lines."""
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise KBError(f"line {lineno}: malformed record ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise KBError(f"line {lineno}: record is not an object")
        try:
            yield lineno, Entity.from_record(rec)
        except (KBError, TypeError, ValueError) as exc:
            raise KBError(f"line {lineno}: {exc}") from None


def load_entities(source: Iterable[str] | IO[str], description_mode: str = "long") -> EntityStore:
    entities: dict[str, Entity] = {}
    for lineno, ent in iter_entity_records(source):
        if ent.id in entities:
            raise KBError(f"line {lineno}: duplicate entity id {ent.id!r}")
        entities[ent.id] = ent
    return EntityStore(entities, description_mode=description_mode)


def load_entities_file(path: str | Path, description_mode: str = "long") -> EntityStore:
    with open(path, encoding="utf-8") as fh:
        return load_entities(fh, description_mode=description_mode)


def write_entities(store: EntityStore | Iterable[Entity], fh: IO[str]) -> None:
    for ent in store:
        fh.write(json.dumps(ent.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def load_denylist(source: Iterable[str]) -> TypeFilter:
    tags = set()
    for line in source:
        line = line.split("#", 1)[0].strip()
        if line:
            tags.add(line)
    return TypeFilter(frozenset(tags))


def apply_type_filter(store: EntityStore, type_filter: TypeFilter) -> EntityStore:
    kept = {eid: ent for eid, ent in store.entities.items() if type_filter.keeps(ent)}
    dropped = len(store) - len(kept)
    if dropped:
        logger.info("type filter dropped %d of %d entities", dropped, len(store))
    return EntityStore(kept, description_mode=store.description_mode)


def get_description(store: EntityStore, entity_id: str, mode: str | None = None) -> str:
    mode = mode or store.description_mode
    if mode not in DESCRIPTION_MODES:
        raise ValueError(f"description mode must be one of {DESCRIPTION_MODES}, got {mode!r}")
    ent = store.get(entity_id)
    return ent.long_description if mode == "long" else ent.short_description
