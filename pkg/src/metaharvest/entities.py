"""Publisher and data-center resolution.

Publisher strings are free text, so they are mapped to curated entities
through an alias table loaded from CSV. Typing and country assignment are
never inferred: whatever is not in the table stays :class:`Unresolved` and
can be exported for the next curation round, most frequent first.

Curation CSV columns: ``raw_name, entity_id, canonical_name, entity_type,
countries`` (countries semicolon-separated ISO 3166 alpha-2 codes).
Data-center registry CSV columns: ``symbol, countries``.
"""

from __future__ import annotations

import csv
import enum
import functools
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import EmptyInput, MalformedSymbol, MissingRegistry, RegistryError

UNKNOWN_COUNTRY = "Unknown"
NOT_FOUND = "Not found"


class PublisherType(str, enum.Enum):
    THEMATIC_REPOSITORY = "ThematicRepository"
    INSTITUTIONAL_REPOSITORY = "InstitutionalRepository"
    RESEARCH_BODY = "ResearchBody"
    MULTIDISCIPLINARY_REPOSITORY = "MultidisciplinaryRepository"
    SCIENTIFIC_PUBLISHER = "ScientificPublisher"
    NATIONAL_REPOSITORY = "NationalRepository"
    FIRM = "Firm"
    PROFESSIONAL_BODY = "ProfessionalBody"
    CONFERENCE = "Conference"
    INDIVIDUAL = "Individual"
    EDUCATIONAL_BODY = "EducationalBody"

    @classmethod
    def parse(cls, value: str) -> "PublisherType":
        key = re.sub(r"[\s_\-]+", "", value).casefold()
        for t in cls:
            if t.value.casefold() == key:
                return t
        raise RegistryError(f"unknown publisher type {value!r}")


@dataclass(frozen=True)
class DataCenter:
    symbol: str
    allocator: str
    repository: str
    countries: tuple[str, ...] = (UNKNOWN_COUNTRY,)


@dataclass(frozen=True)
class PublisherEntity:
    entity_id: str
    canonical_name: str
    countries: tuple[str, ...]
    entity_type: PublisherType


@dataclass(frozen=True)
class Unresolved:
    normalized: str


def parse_data_center_symbol(symbol: str) -> tuple[str, str]:
    """``"BL.IMPERIAL"`` -> ``("BL", "IMPERIAL")``; splits at the first dot."""
    allocator, dot, repository = symbol.strip().partition(".")
    if not dot or not allocator or not repository:
        raise MalformedSymbol(f"not an ALLOCATOR.REPOSITORY symbol: {symbol!r}")
    return allocator, repository


def normalize_publisher_name(raw: str) -> str:
    return " ".join(raw.split()).casefold()


@functools.lru_cache(maxsize=1)
def _iso_countries() -> frozenset[str]:
    import pycountry

    return frozenset(c.alpha_2 for c in pycountry.countries)


def parse_countries(value: str) -> tuple[str, ...]:
    codes = []
    for part in value.split(";"):
        code = part.strip()
        if not code:
            continue
        if code.casefold() == UNKNOWN_COUNTRY.casefold():
            code = UNKNOWN_COUNTRY
        else:
            code = code.upper()
            if code not in _iso_countries():
                raise RegistryError(f"not an ISO 3166 alpha-2 code: {part!r}")
        if code not in codes:
            codes.append(code)
    return tuple(codes) or (UNKNOWN_COUNTRY,)


def _read_csv(path: str | os.PathLike, required: list[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise RegistryError(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


@dataclass
class AliasTable:
    """Normalized raw publisher name -> entity id, plus the entity registry."""

    aliases: dict[str, str] = field(default_factory=dict)
    entities: dict[str, PublisherEntity] = field(default_factory=dict)

    def add(self, raw_name: str, entity: PublisherEntity) -> None:
        existing = self.entities.get(entity.entity_id)
        if existing is not None and existing != entity:
            raise RegistryError(f"entity {entity.entity_id} defined inconsistently")
        key = normalize_publisher_name(raw_name)
        if not key:
            raise RegistryError("empty raw_name")
        bound = self.aliases.get(key)
        if bound is not None and bound != entity.entity_id:
            raise RegistryError(f"alias {raw_name!r} maps to both {bound} and {entity.entity_id}")
        self.entities[entity.entity_id] = entity
        self.aliases[key] = entity.entity_id

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping[str, str]]) -> "AliasTable":
        table = cls()
        for row in rows:
            entity = PublisherEntity(
                entity_id=row["entity_id"].strip(),
                canonical_name=row["canonical_name"].strip(),
                countries=parse_countries(row.get("countries") or ""),
                entity_type=PublisherType.parse(row["entity_type"]),
            )
            if not entity.entity_id:
                raise RegistryError(f"row for {row['raw_name']!r} has no entity_id")
            table.add(row["raw_name"], entity)
        return table

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "AliasTable":
        return cls.from_rows(_read_csv(path, ["raw_name", "entity_id", "canonical_name",
                                              "entity_type", "countries"]))

    def lookup(self, raw: str) -> PublisherEntity | None:
        eid = self.aliases.get(normalize_publisher_name(raw))
        return self.entities[eid] if eid is not None else None


def resolve_publisher(raw: str, table: AliasTable) -> PublisherEntity | Unresolved:
    entity = table.lookup(raw)
    return entity if entity is not None else Unresolved(normalize_publisher_name(raw))


@dataclass
class DataCenterRegistry:
    centers: dict[str, DataCenter] = field(default_factory=dict)

    def add(self, symbol: str, countries: tuple[str, ...]) -> None:
        allocator, repository = parse_data_center_symbol(symbol)
        self.centers[symbol.strip()] = DataCenter(symbol.strip(), allocator, repository, countries)

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "DataCenterRegistry":
        reg = cls()
        for row in _read_csv(path, ["symbol", "countries"]):
            reg.add(row["symbol"], parse_countries(row["countries"] or ""))
        return reg

    def countries_for(self, symbol: str) -> tuple[str, ...]:
        center = self.centers.get(symbol)
        return center.countries if center is not None else (UNKNOWN_COUNTRY,)


@dataclass
class Registries:
    data_centers: DataCenterRegistry | None = None
    publishers: AliasTable | None = None


def attribute_countries(record, by: str, registries: Registries) -> list[str]:
    """Countries a record counts towards (whole counting).

    *record* needs ``data_center_id`` and ``publisher_raw`` attributes, as
    canonical and parsed records both have.
    """
    if by == "data_center":
        if registries.data_centers is None:
            raise MissingRegistry("data-center registry not loaded")
        return list(registries.data_centers.countries_for(record.data_center_id))
    if by == "publisher":
        if registries.publishers is None:
            raise MissingRegistry("publisher alias table not loaded")
        entity = registries.publishers.lookup(record.publisher_raw) if record.publisher_raw else None
        return list(entity.countries) if entity is not None else [UNKNOWN_COUNTRY]
    raise ValueError(f"unknown attribution {by!r}")


@dataclass(frozen=True)
class CoverageRow:
    publisher_raw: str
    record_count: int
    cumulative_share: float


@dataclass
class CoverageRanking:
    rows: list[CoverageRow]

    @property
    def total(self) -> int:
        return sum(r.record_count for r in self.rows)


def ranked(counts: Mapping[str, int]) -> list[tuple[str, int]]:
    """Descending by count, ties broken by key ascending."""
    return sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))


def minimal_prefix(sorted_counts: list[int], total: int, target: float) -> int:
    """Smallest k whose top-k sum reaches *target* of *total*."""
    running = 0
    for k, c in enumerate(sorted_counts, start=1):
        running += c
        if running / total >= target - 1e-12:
            return k
    return len(sorted_counts)


def rank_publishers_by_coverage(counts: Mapping[str, int], target: float) -> tuple[CoverageRanking, int]:
    """Rank raw publisher names by record count and find the curation cut.

    The cut is the shortest prefix of the ranking that covers at least
    *target* of all records carrying a publisher.
    """
    if not 0 < target <= 1:
        raise ValueError("target must be in (0, 1]")
    order = [(k, c) for k, c in ranked(counts) if c > 0]
    total = sum(c for _, c in order)
    if not order or total == 0:
        raise EmptyInput("no publisher counts to rank")
    rows = []
    running = 0
    for name, c in order:
        running += c
        rows.append(CoverageRow(name, c, running / total))
    return CoverageRanking(rows), minimal_prefix([c for _, c in order], total, target)


def unresolved_counts(counts: Mapping[str, int], table: AliasTable) -> dict[str, int]:
    """Aggregate raw-name counts of publishers the table does not know."""
    out: dict[str, int] = {}
    for raw, c in counts.items():
        if raw is None or not raw.strip():
            continue
        r = resolve_publisher(raw, table)
        if isinstance(r, Unresolved):
            out[r.normalized] = out.get(r.normalized, 0) + c
    return out


def export_unresolved(counts: Mapping[str, int], table: AliasTable, top_n: int | None = None) -> list[tuple[str, int]]:
    rows = ranked(unresolved_counts(counts, table))
    return rows[:top_n] if top_n is not None else rows
