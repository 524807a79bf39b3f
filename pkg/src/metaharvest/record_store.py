"""Embedded record store keyed by OAI identifier.

The store is a directory holding one SQLite database in WAL mode. Each row
keeps the parsed record, its canonical form once cleaned, and a handful of
indexed columns (data center, type, year, DOI, publisher entity, empty
flag, presence bitmap) that back filtered scans and grouped counts.

Writes follow latest-datestamp-wins. Empty records are stored like any
other, with ``is_empty`` set.
"""

from __future__ import annotations

import enum
import json
import os
import sqlite3
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .cleaning import CanonicalRecord, DateKind, QualityFlag, ResourceType
from .errors import StorageFailure
from .schema_parser import FieldName, ParsedRecord, detect_empty

MISSING = "missing"
DB_NAME = "records.sqlite3"
DATE_KIND_ORDER = list(DateKind)
FLAG_ORDER = list(QualityFlag)


def _bitmask(items, order) -> int:
    return sum(1 << order.index(i) for i in set(items))


_SCHEMA = """
CREATE TABLE IF NOT EXISTS records (
    oai_id TEXT PRIMARY KEY,
    latest_datestamp TEXT NOT NULL,
    version_count INTEGER NOT NULL,
    parsed_json TEXT NOT NULL,
    canonical_json TEXT,
    data_center TEXT NOT NULL,
    presence INTEGER NOT NULL,
    is_empty INTEGER NOT NULL,
    publisher_raw TEXT,
    publisher_entity TEXT,
    resource_type TEXT,
    resource_subtype TEXT,
    is_data_record INTEGER,
    publication_year INTEGER,
    doi TEXT,
    date_kinds INTEGER NOT NULL DEFAULT 0,
    flags INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS ix_records_center ON records(data_center);
CREATE INDEX IF NOT EXISTS ix_records_type ON records(resource_type);
CREATE INDEX IF NOT EXISTS ix_records_year ON records(publication_year);
CREATE INDEX IF NOT EXISTS ix_records_doi ON records(doi);
CREATE INDEX IF NOT EXISTS ix_records_entity ON records(publisher_entity);
CREATE INDEX IF NOT EXISTS ix_records_empty ON records(is_empty);
CREATE TABLE IF NOT EXISTS record_countries (
    oai_id TEXT NOT NULL,
    attribution TEXT NOT NULL,
    country TEXT NOT NULL,
    PRIMARY KEY (oai_id, attribution, country)
);
CREATE TABLE IF NOT EXISTS edges (
    source_oai TEXT NOT NULL,
    ordinal INTEGER NOT NULL,
    source_doi TEXT,
    target_raw TEXT NOT NULL,
    scheme TEXT NOT NULL,
    resolution TEXT NOT NULL,
    target_type TEXT,
    PRIMARY KEY (source_oai, ordinal)
);
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
"""


class UpsertResult(str, enum.Enum):
    INSERTED = "Inserted"
    REPLACED = "Replaced"
    IGNORED_STALE = "IgnoredStale"


@dataclass
class StoredRecord:
    oai_identifier: str
    latest_datestamp: str
    parsed: ParsedRecord
    canonical: CanonicalRecord | None
    version_count: int
    publisher_entity: str | None = None

    @property
    def is_empty(self) -> bool:
        return detect_empty(self.parsed)


@dataclass(frozen=True)
class ScanFilter:
    """Conjunction of optional predicates; the default matches everything."""

    has_fields: frozenset[FieldName] = frozenset()
    lacks_fields: frozenset[FieldName] = frozenset()
    resource_type: ResourceType | None = None
    has_resource_type: bool | None = None
    is_data_record: bool | None = None
    data_center: str | None = None
    year_range: tuple[int, int] | None = None
    publisher_entity: str | None = None
    empty: bool | None = None

    def where(self) -> tuple[str, list]:
        clauses: list[str] = []
        args: list = []
        if self.has_fields:
            mask = sum(f.bit for f in self.has_fields)
            clauses.append("(presence & ?) = ?")
            args += [mask, mask]
        if self.lacks_fields:
            clauses.append("(presence & ?) = 0")
            args.append(sum(f.bit for f in self.lacks_fields))
        if self.resource_type is not None:
            clauses.append("resource_type = ?")
            args.append(ResourceType(self.resource_type).value)
        if self.has_resource_type is not None:
            clauses.append("resource_type IS NOT NULL" if self.has_resource_type else "resource_type IS NULL")
        if self.is_data_record is not None:
            clauses.append("is_data_record = ?")
            args.append(int(self.is_data_record))
        if self.data_center is not None:
            clauses.append("data_center = ?")
            args.append(self.data_center)
        if self.year_range is not None:
            clauses.append("publication_year BETWEEN ? AND ?")
            args += list(self.year_range)
        if self.publisher_entity is not None:
            clauses.append("publisher_entity = ?")
            args.append(self.publisher_entity)
        if self.empty is not None:
            clauses.append("is_empty = ?")
            args.append(int(self.empty))
        return (" AND ".join(clauses) or "1=1"), args


NON_EMPTY = ScanFilter(empty=False)

_DIMENSIONS = {
    "data_center": "data_center",
    "resource_type": "resource_type",
    "resource_subtype": "resource_subtype",
    "publisher_entity": "publisher_entity",
    "publisher_raw": "publisher_raw",
    "publication_year": "publication_year",
    "is_data_record": "is_data_record",
    "presence": "presence",
    "is_empty": "is_empty",
}


def normalize_datestamp(value: str | date | datetime) -> str:
    """UTC ``YYYY-MM-DDThh:mm:ssZ`` so stamps compare as strings."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, date):
        dt = datetime(value.year, value.month, value.day)
    else:
        s = value.strip()
        if len(s) == 10:
            dt = datetime.fromisoformat(s)
        else:
            dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class RecordStore:
    """Directory-backed store; single writer, concurrent snapshot readers."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        try:
            self.path.mkdir(parents=True, exist_ok=True)
            self._conn = sqlite3.connect(self.db_path, isolation_level=None)
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.execute("PRAGMA synchronous=NORMAL")
            self._conn.executescript(_SCHEMA)
        except (sqlite3.Error, OSError) as exc:
            raise StorageFailure(f"cannot open store at {self.path}: {exc}") from exc
        self._in_batch = False

    @property
    def db_path(self) -> Path:
        return self.path / DB_NAME

    def close(self) -> None:
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @contextmanager
    def batch(self):
        """Group writes into one transaction."""
        if self._in_batch:
            yield self
            return
        try:
            self._conn.execute("BEGIN IMMEDIATE")
            self._in_batch = True
            yield self
            self._conn.execute("COMMIT")
        except BaseException:
            self._conn.execute("ROLLBACK")
            raise
        finally:
            self._in_batch = False

    def _exec(self, sql: str, args=()):
        try:
            return self._conn.execute(sql, args)
        except sqlite3.Error as exc:
            raise StorageFailure(str(exc)) from exc

    # ------------------------------------------------------------ writes

    def upsert_record(self, p: ParsedRecord, datestamp) -> UpsertResult:
        if not p.oai_identifier:
            raise ValueError("oai_identifier must not be empty")
        stamp = normalize_datestamp(datestamp)
        payload = _dumps(p.to_dict())
        with self.batch():
            row = self._exec("SELECT latest_datestamp, parsed_json, version_count FROM records WHERE oai_id = ?",
                             (p.oai_identifier,)).fetchone()
            derived = (p.data_center_id, p.presence, int(detect_empty(p)), p.publisher_raw)
            if row is None:
                self._exec(
                    "INSERT INTO records (oai_id, latest_datestamp, version_count, parsed_json, data_center,"
                    " presence, is_empty, publisher_raw) VALUES (?, ?, 1, ?, ?, ?, ?, ?)",
                    (p.oai_identifier, stamp, payload, *derived))
                return UpsertResult.INSERTED
            old_stamp, old_payload, versions = row
            # equal stamps: larger serialization wins, so any replay order converges
            if stamp < old_stamp or (stamp == old_stamp and payload <= old_payload):
                return UpsertResult.IGNORED_STALE
            self._exec(
                "UPDATE records SET latest_datestamp = ?, version_count = ?, parsed_json = ?, canonical_json = NULL,"
                " data_center = ?, presence = ?, is_empty = ?, publisher_raw = ?, publisher_entity = NULL,"
                " resource_type = NULL, resource_subtype = NULL, is_data_record = NULL, publication_year = NULL,"
                " doi = NULL, date_kinds = 0, flags = 0 WHERE oai_id = ?",
                (stamp, versions + 1, payload, *derived, p.oai_identifier))
            self._exec("DELETE FROM record_countries WHERE oai_id = ?", (p.oai_identifier,))
            return UpsertResult.REPLACED

    def set_canonical(self, oai_id: str, c: CanonicalRecord) -> bool:
        """Store *c*; returns False when it equals what is already stored."""
        payload = _dumps(c.to_dict())
        row = self._exec("SELECT canonical_json FROM records WHERE oai_id = ?", (oai_id,)).fetchone()
        if row is None:
            raise KeyError(oai_id)
        if row[0] == payload:
            return False
        self._exec(
            "UPDATE records SET canonical_json = ?, resource_type = ?, resource_subtype = ?, is_data_record = ?,"
            " publication_year = ?, doi = ?, date_kinds = ?, flags = ? WHERE oai_id = ?",
            (payload, c.resource_type.value if c.resource_type else None, c.resource_subtype,
             None if c.is_data_record is None else int(c.is_data_record), c.publication_year, c.doi,
             _bitmask((e.kind for e in c.date_events), DATE_KIND_ORDER), _bitmask(c.flags, FLAG_ORDER),
             oai_id))
        return True

    def set_resolution(self, oai_id: str, entity_id: str | None,
                       countries: dict[str, list[str]] | None = None) -> bool:
        """Store the publisher entity and per-attribution countries of a record."""
        row = self._exec("SELECT publisher_entity FROM records WHERE oai_id = ?", (oai_id,)).fetchone()
        if row is None:
            raise KeyError(oai_id)
        old = self._exec("SELECT attribution, country FROM record_countries WHERE oai_id = ?"
                         " ORDER BY attribution, country", (oai_id,)).fetchall()
        new = sorted((a, c) for a, cs in (countries or {}).items() for c in set(cs))
        if row[0] == entity_id and old == new:
            return False
        self._exec("UPDATE records SET publisher_entity = ? WHERE oai_id = ?", (entity_id, oai_id))
        self._exec("DELETE FROM record_countries WHERE oai_id = ?", (oai_id,))
        for a, c in new:
            self._exec("INSERT INTO record_countries VALUES (?, ?, ?)", (oai_id, a, c))
        return True

    def replace_edges(self, edges: Iterable) -> int:
        n = 0
        with self.batch():
            self._exec("DELETE FROM edges")
            ordinals: dict[str, int] = {}
            for e in edges:
                k = ordinals.get(e.source_oai, 0)
                ordinals[e.source_oai] = k + 1
                self._exec("INSERT INTO edges VALUES (?, ?, ?, ?, ?, ?, ?)",
                           (e.source_oai, k, e.source_doi, e.target_raw, e.scheme.value, e.resolution.value,
                            e.target_resource_type.value if e.target_resource_type else None))
                n += 1
        return n

    def iter_edges(self) -> Iterator[tuple]:
        yield from self._exec("SELECT source_oai, source_doi, target_raw, scheme, resolution, target_type"
                              " FROM edges ORDER BY source_oai, ordinal")

    def edge_count(self) -> int:
        return self._exec("SELECT COUNT(*) FROM edges").fetchone()[0]

    def get_meta(self, key: str, default=None):
        row = self._exec("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return json.loads(row[0]) if row else default

    def set_meta(self, key: str, value) -> None:
        self._exec("INSERT OR REPLACE INTO meta VALUES (?, ?)", (key, _dumps(value)))

    # ------------------------------------------------------------- reads

    def _row_to_record(self, row) -> StoredRecord:
        oai_id, stamp, versions, pj, cj, entity = row
        parsed = ParsedRecord.from_dict(json.loads(pj))
        canonical = CanonicalRecord.from_dict(json.loads(cj)) if cj else None
        return StoredRecord(oai_id, stamp, parsed, canonical, versions, entity)

    _COLUMNS = "oai_id, latest_datestamp, version_count, parsed_json, canonical_json, publisher_entity"

    def get(self, oai_id: str) -> StoredRecord | None:
        row = self._exec(f"SELECT {self._COLUMNS} FROM records WHERE oai_id = ?", (oai_id,)).fetchone()
        return self._row_to_record(row) if row else None

    def scan(self, filter: ScanFilter = ScanFilter()) -> Iterator[StoredRecord]:
        """Matching records in OAI identifier order, from a snapshot taken at call time."""
        where, args = filter.where()
        sql = f"SELECT {self._COLUMNS} FROM records WHERE {where} ORDER BY oai_id"
        reader = sqlite3.connect(self.db_path, isolation_level=None)
        try:
            reader.execute("BEGIN")
            cur = reader.execute(sql, args)
        except sqlite3.Error as exc:
            reader.close()
            raise StorageFailure(str(exc)) from exc

        def gen():
            try:
                for row in cur:
                    yield self._row_to_record(row)
            finally:
                reader.close()

        return gen()

    def count(self, filter: ScanFilter = ScanFilter()) -> int:
        where, args = filter.where()
        return self._exec(f"SELECT COUNT(*) FROM records WHERE {where}", args).fetchone()[0]

    def __len__(self) -> int:
        return self.count()

    def count_by(self, dimension: str, filter: ScanFilter = ScanFilter(), *,
                 attribution: str = "data_center") -> dict:
        """Grouped counts over *filter*; undefined values land in ``MISSING``.

        ``country`` uses the countries stored by the resolve stage and counts
        a record once per country, so its total may exceed the match count.
        """
        where, args = filter.where()
        if dimension == "country":
            sql = (f"SELECT rc.country, COUNT(*) FROM records r LEFT JOIN record_countries rc"
                   f" ON rc.oai_id = r.oai_id AND rc.attribution = ? WHERE {where} GROUP BY rc.country")
            args = [attribution] + args
        elif dimension in _DIMENSIONS:
            col = _DIMENSIONS[dimension]
            sql = f"SELECT {col}, COUNT(*) FROM records WHERE {where} GROUP BY {col}"
        else:
            raise ValueError(f"unknown dimension {dimension!r}")
        out: dict = {}
        for value, n in self._exec(sql, args):
            out[MISSING if value is None else value] = n
        return out

    def group_counts(self, columns: list[str], filter: ScanFilter = ScanFilter()) -> list[tuple]:
        """``(value_1, ..., value_n, count)`` rows grouped by indexed columns."""
        cols = [_DIMENSIONS[c] for c in columns]
        where, args = filter.where()
        sql = (f"SELECT {', '.join(cols)}, COUNT(*) FROM records WHERE {where}"
               f" GROUP BY {', '.join(cols)} ORDER BY {', '.join(cols)}")
        return list(self._exec(sql, args))

    def iter_columns(self, columns: list[str], filter: ScanFilter = ScanFilter()) -> Iterator[tuple]:
        """``(oai_id, *columns)`` tuples in identifier order, without decoding records."""
        cols = ", ".join(_DIMENSIONS[c] for c in columns)
        where, args = filter.where()
        yield from self._exec(f"SELECT oai_id, {cols} FROM records WHERE {where} ORDER BY oai_id", args)

    def presence_counts(self, filter: ScanFilter = ScanFilter()) -> dict[FieldName, int]:
        where, args = filter.where()
        sums = ", ".join(f"SUM((presence >> {i}) & 1)" for i in range(len(FieldName)))
        row = self._exec(f"SELECT {sums} FROM records WHERE {where}", args).fetchone()
        return {f: int(v or 0) for f, v in zip(FieldName, row)}

    def bit_counts(self, column: str, order: list, filter: ScanFilter = ScanFilter()) -> tuple[dict, int]:
        """Per-bit counts of a bitmask column plus the number of rows with any bit set."""
        if column not in ("date_kinds", "flags"):
            raise ValueError(column)
        where, args = filter.where()
        sums = ", ".join(f"SUM(({column} >> {i}) & 1)" for i in range(len(order)))
        row = self._exec(f"SELECT {sums}, SUM({column} != 0) FROM records WHERE {where}", args).fetchone()
        return {k: int(v or 0) for k, v in zip(order, row)}, int(row[-1] or 0)

    def doi_index(self) -> dict[str, str | None]:
        """DOI -> canonical resource type for every cleaned record with a DOI."""
        return {doi: rtype for doi, rtype in
                self._exec("SELECT doi, resource_type FROM records WHERE doi IS NOT NULL ORDER BY oai_id")}

    def uncleaned_count(self) -> int:
        return self._exec("SELECT COUNT(*) FROM records WHERE canonical_json IS NULL").fetchone()[0]

    def data_as_of(self) -> str | None:
        return self._exec("SELECT MAX(latest_datestamp) FROM records").fetchone()[0]

    # ------------------------------------------------------ import/export

    def export_ndjson(self, path: str | os.PathLike) -> int:
        n = 0
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.scan():
                fh.write(_dumps({
                    "oai_identifier": rec.oai_identifier,
                    "datestamp": rec.latest_datestamp,
                    "version_count": rec.version_count,
                    "parsed": rec.parsed.to_dict(),
                    "canonical": rec.canonical.to_dict() if rec.canonical else None,
                }) + "\n")
                n += 1
        return n

    def import_ndjson(self, path: str | os.PathLike) -> int:
        n = 0
        with open(path, encoding="utf-8") as fh, self.batch():
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                parsed = ParsedRecord.from_dict(d["parsed"])
                result = self.upsert_record(parsed, d["datestamp"])
                if result is not UpsertResult.IGNORED_STALE and d.get("canonical"):
                    self.set_canonical(parsed.oai_identifier, CanonicalRecord.from_dict(d["canonical"]))
                n += 1
        return n
