"""Relation edges between records and related identifiers.

Edges carry only an identifier scheme and a resolution status. The OAI
feed does not expose relation types, so none are invented here.
"""

from __future__ import annotations

import csv
import enum
import os
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .cleaning import ResourceType, normalize_doi
from .record_store import NON_EMPTY, RecordStore, StoredRecord


class Scheme(str, enum.Enum):
    DOI = "doi"
    ARXIV = "arxiv"
    BIBCODE = "bibcode"
    HANDLE = "handle"
    URL = "url"
    OTHER = "other"


class Resolution(str, enum.Enum):
    INTERNAL = "Internal"
    EXTERNAL_MATCHED = "ExternalMatched"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class RelationEdge:
    source_oai: str
    source_doi: str | None
    target_raw: str
    scheme: Scheme
    resolution: Resolution = Resolution.UNRESOLVED
    target_resource_type: ResourceType | None = None

    @property
    def target_doi(self) -> str | None:
        return normalize_doi(self.target_raw) if self.scheme is Scheme.DOI else None


_BIBCODE = re.compile(r"\d{4}[A-Za-z0-9&.]{14}[A-Za-z.]")
_HANDLE = re.compile(r"\d+(\.\d+)*/\S+")


def classify_scheme(value: str) -> Scheme:
    v = value.strip()
    low = v.lower()
    if normalize_doi(v) is not None:
        return Scheme.DOI
    if low.startswith("arxiv:"):
        return Scheme.ARXIV
    if len(v) == 19 and _BIBCODE.fullmatch(v):
        return Scheme.BIBCODE
    if low.startswith("hdl:") or _HANDLE.fullmatch(v):
        return Scheme.HANDLE
    if low.startswith(("http://", "https://")):
        return Scheme.URL
    return Scheme.OTHER


def extract_relation_edges(record: StoredRecord) -> list[RelationEdge]:
    """One unresolved edge per relation value; DOI targets lowercased."""
    source_doi = record.canonical.doi if record.canonical is not None else None
    edges = []
    for raw in record.parsed.relations_raw:
        if not raw.strip():
            continue
        scheme = classify_scheme(raw)
        target = normalize_doi(raw) if scheme is Scheme.DOI else raw.strip()
        edges.append(RelationEdge(record.oai_identifier, source_doi, target, scheme))
    return edges


class ExternalIndex:
    """Set of known DOIs from a newline-delimited file."""

    def __init__(self, dois: Iterable[str] = ()):
        self.dois = frozenset(d for d in (normalize_doi(x) for x in dois) if d)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ExternalIndex":
        with open(path, encoding="utf-8") as fh:
            return cls(line.strip() for line in fh if line.strip() and not line.startswith("#"))

    def __contains__(self, doi: str) -> bool:
        return doi in self.dois

    def __len__(self) -> int:
        return len(self.dois)


def resolve_edges(edges: Iterable[RelationEdge], store: RecordStore | Mapping[str, str | None],
                  index: ExternalIndex | None = None) -> list[RelationEdge]:
    """Internal beats ExternalMatched beats Unresolved.

    *store* may be a :class:`RecordStore` or a prebuilt ``doi -> type`` map.
    """
    internal = store.doi_index() if isinstance(store, RecordStore) else store
    index = index or ExternalIndex()
    out = []
    for e in edges:
        doi = e.target_doi
        if doi is not None and doi in internal:
            rtype = internal[doi]
            out.append(replace(e, resolution=Resolution.INTERNAL,
                               target_resource_type=ResourceType(rtype) if rtype else None))
        elif doi is not None and doi in index:
            out.append(replace(e, resolution=Resolution.EXTERNAL_MATCHED, target_resource_type=None))
        else:
            out.append(replace(e, resolution=Resolution.UNRESOLVED, target_resource_type=None))
    return out


@dataclass
class RelationStats:
    """Relation-field aggregates.

    ``share_with_relations`` uses non-empty records as denominator and
    ``share_with_relations_all`` all stored records. Edge shares use the
    total edge count; ``internal_dataset_share`` uses internal edges.
    """

    share_with_relations: float = 0.0
    share_with_relations_all: float = 0.0
    edges_per_record: dict[int, int] = field(default_factory=dict)
    internal_share: float = 0.0
    internal_dataset_share: float = 0.0
    internal_typed_share: float = 0.0
    external_share: float = 0.0
    unresolved_share: float = 0.0
    centers_with_any: int = 0
    centers_with_all: int = 0
    centers_total: int = 0
    records_nonempty: int = 0
    records_all: int = 0
    records_with_relations: int = 0
    edges_total: int = 0
    resolution_counts: dict[str, int] = field(default_factory=dict)
    center_coverage: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def max_edges_per_record(self) -> int:
        return max(self.edges_per_record, default=0)

    @property
    def median_edges_per_record(self) -> float:
        values = sorted(Counter(self.edges_per_record).elements())
        return statistics.median(values) if values else 0.0


def _share(num: int, den: int) -> float:
    return num / den if den else 0.0


def compute_relation_stats(store: RecordStore, edges: Iterable[RelationEdge]) -> RelationStats:
    edges = list(edges)
    per_record: Counter[str] = Counter(e.source_oai for e in edges)
    center_totals: Counter[str] = Counter()
    center_linked: Counter[str] = Counter()
    for center, n in store.group_counts(["data_center"], NON_EMPTY):
        center_totals[center] += n
    linked_nonempty = 0
    if per_record:
        for oai_id, center in store.iter_columns(["data_center"], NON_EMPTY):
            if per_record.get(oai_id):
                linked_nonempty += 1
                center_linked[center] += 1
    stats = RelationStats()
    stats.records_nonempty = store.count(NON_EMPTY)
    stats.records_all = store.count()
    stats.records_with_relations = linked_nonempty
    stats.share_with_relations = _share(linked_nonempty, stats.records_nonempty)
    stats.share_with_relations_all = _share(linked_nonempty, stats.records_all)
    stats.edges_per_record = dict(sorted(Counter(per_record.values()).items()))
    res = Counter(e.resolution for e in edges)
    stats.edges_total = len(edges)
    stats.resolution_counts = {r.value: res.get(r, 0) for r in Resolution}
    n_int = res.get(Resolution.INTERNAL, 0)
    stats.internal_share = _share(n_int, len(edges))
    stats.external_share = _share(res.get(Resolution.EXTERNAL_MATCHED, 0), len(edges))
    stats.unresolved_share = _share(res.get(Resolution.UNRESOLVED, 0), len(edges))
    internal = [e for e in edges if e.resolution is Resolution.INTERNAL]
    stats.internal_dataset_share = _share(
        sum(1 for e in internal if e.target_resource_type is ResourceType.DATASET), n_int)
    stats.internal_typed_share = _share(sum(1 for e in internal if e.target_resource_type), n_int)
    stats.centers_total = len(center_totals)
    stats.center_coverage = {c: (center_linked.get(c, 0), n) for c, n in sorted(center_totals.items())}
    stats.centers_with_any = sum(1 for c in center_totals if center_linked.get(c, 0) > 0)
    stats.centers_with_all = sum(1 for c, n in center_totals.items() if center_linked.get(c, 0) == n)
    return stats


def stored_edges(store: RecordStore) -> list[RelationEdge]:
    return [RelationEdge(src, sdoi, target, Scheme(scheme), Resolution(res),
                         ResourceType(ttype) if ttype else None)
            for src, sdoi, target, scheme, res, ttype in store.iter_edges()]


def write_edges_csv(edges: Iterable[RelationEdge], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_doi", "target_raw", "scheme", "resolution", "target_type"])
        for e in edges:
            w.writerow([e.source_doi or "", e.target_raw, e.scheme.value, e.resolution.value,
                        e.target_resource_type.value if e.target_resource_type else ""])
            n += 1
    return n
