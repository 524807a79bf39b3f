"""Aggregate tables over a record store, and their serialization.

Each table has a pure ``*_from_counts`` / ``*_from_groups`` core that works
on plain counts (so published figures can be fed in directly) and a thin
store-backed wrapper. :func:`build_reports` assembles every table into
:class:`Report` objects; :func:`write_report` emits, per report::

    <out>/<name>.csv        display table, percentages rounded half-up to 2 dp
    <out>/<name>.json       envelope: raw fractions, denominators, filters, warnings
    <out>/<name>.plot.csv   x,y series standing in for the figure
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .cleaning import DateKind, QualityFlag, ResourceType
from .entities import (NOT_FOUND, UNKNOWN_COUNTRY, AliasTable, PublisherType, Registries, Unresolved,
                       minimal_prefix, ranked, resolve_publisher)
from .errors import EmptyInput, InvalidRange, MissingRegistry
from .record_store import DATE_KIND_ORDER, FLAG_ORDER, MISSING, NON_EMPTY, RecordStore, ScanFilter
from .schema_parser import FieldName


def percent(fraction: float | None) -> str:
    """Display form: percentage rounded half-up to two decimals."""
    if fraction is None:
        return ""
    return str((Decimal(repr(fraction)) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _share(num: int, den: int) -> float | None:
    return num / den if den else None


# ------------------------------------------------------------ completeness

@dataclass(frozen=True)
class CompletenessRow:
    field: FieldName
    count_present: int
    count_present_nonempty: int
    share_over_all_records: float | None
    share_over_nonempty_records: float | None


@dataclass
class CompletenessMatrix:
    rows: list[CompletenessRow]
    total: int
    nonempty: int

    @property
    def empty(self) -> int:
        return self.total - self.nonempty

    @property
    def empty_share(self) -> float | None:
        return _share(self.empty, self.total)

    def row(self, name: FieldName) -> CompletenessRow:
        return next(r for r in self.rows if r.field is name)


def completeness_from_counts(present_all: Mapping[FieldName, int], present_nonempty: Mapping[FieldName, int],
                             total: int, nonempty: int) -> CompletenessMatrix:
    rows = [CompletenessRow(f, present_all.get(f, 0), present_nonempty.get(f, 0),
                            _share(present_all.get(f, 0), total),
                            _share(present_nonempty.get(f, 0), nonempty)) for f in FieldName]
    return CompletenessMatrix(rows, total, nonempty)


def completeness_matrix(store: RecordStore) -> CompletenessMatrix:
    return completeness_from_counts(store.presence_counts(), store.presence_counts(NON_EMPTY),
                                    store.count(), store.count(NON_EMPTY))


# ---------------------------------------------------------- resource types

@dataclass(frozen=True)
class ResourceTypeRow:
    resource_type: str
    count: int
    share: float | None
    subtypes: tuple[tuple[str, int, float], ...] = ()
    subtype_total: int = 0


@dataclass
class ResourceTypeTable:
    rows: list[ResourceTypeRow]
    denominator: int
    counts_sum: int

    @property
    def consistent(self) -> bool:
        """Whether the per-type counts add up to the denominator used."""
        return self.counts_sum == self.denominator

    def row(self, resource_type: str | ResourceType) -> ResourceTypeRow:
        key = resource_type.value if isinstance(resource_type, ResourceType) else resource_type
        return next(r for r in self.rows if r.resource_type == key)

    def percentages(self) -> dict[str, float]:
        return {r.resource_type: (r.share or 0.0) * 100 for r in self.rows}


def resource_type_table_from_counts(type_counts: Mapping, subtype_counts: Mapping | None = None, *,
                                    total: int | None = None, top_k: int = 3) -> ResourceTypeTable:
    """Shares over *total* (default: the sum of *type_counts*).

    Subtype shares are within their type, ranked by count then name.
    """
    counts = {(k.value if isinstance(k, ResourceType) else str(k)): int(v) for k, v in type_counts.items()
              if v and k != MISSING}
    counts_sum = sum(counts.values())
    denominator = counts_sum if total is None else total
    subs = {(k.value if isinstance(k, ResourceType) else str(k)): v for k, v in (subtype_counts or {}).items()}
    rows = []
    for name, n in ranked(counts):
        ranking = ranked({s: c for s, c in subs.get(name, {}).items() if s not in (None, MISSING) and c})
        top = tuple((s, c, c / n) for s, c in ranking[:top_k])
        rows.append(ResourceTypeRow(name, n, _share(n, denominator), top, sum(c for _, c in ranking)))
    return ResourceTypeTable(rows, denominator, counts_sum)


def resource_type_table(store: RecordStore, top_k: int = 3) -> ResourceTypeTable:
    typed = ScanFilter(has_resource_type=True)
    subs: dict[str, dict[str, int]] = defaultdict(dict)
    for rtype, sub, n in store.group_counts(["resource_type", "resource_subtype"], typed):
        if sub is not None:
            subs[rtype][sub] = n
    return resource_type_table_from_counts(store.count_by("resource_type", typed), subs, top_k=top_k)


@dataclass(frozen=True)
class Discrepancy:
    key: str
    computed: float
    printed: float | str


def compare_with_printed(computed: Mapping[str, float], printed: Mapping[str, float | str],
                         tol: float = 0.01) -> list[Discrepancy]:
    """Rows whose computed percentage misses the printed one by more than *tol*.

    A printed value of the form ``"<x"`` means "below x" and is checked as an
    upper bound.
    """
    out = []
    for key, p in printed.items():
        c = computed.get(key)
        if c is None:
            out.append(Discrepancy(key, float("nan"), p))
            continue
        if isinstance(p, str) and p.strip().startswith("<"):
            ok = c < float(p.strip()[1:])
        else:
            ok = abs(c - float(p)) <= tol + 1e-9
        if not ok:
            out.append(Discrepancy(key, c, p))
    return out


# ---------------------------------------------------------------- countries

@dataclass(frozen=True)
class CountryRow:
    country: str
    source_count: int
    record_count: int
    typed_count: int
    data_record_count: int

    @property
    def data_record_share(self) -> float | None:
        return _share(self.data_record_count, self.typed_count)


@dataclass
class CountryTable:
    attribution: str
    rows: list[CountryRow]
    record_total: int

    def row(self, country: str) -> CountryRow:
        return next(r for r in self.rows if r.country == country)


def country_table_from_groups(groups: Iterable[tuple[str, int, int, int]],
                              countries_of: Callable[[str], Iterable[str]],
                              attribution: str = "data_center") -> CountryTable:
    """Whole-counting country table.

    *groups* yields ``(source_key, records, typed_records, data_records)`` per
    data center or publisher; *countries_of* maps a source key to countries.
    """
    acc: dict[str, list] = {}
    record_total = 0
    for key, n, typed, data in groups:
        record_total += n
        for country in dict.fromkeys(countries_of(key)):
            slot = acc.setdefault(country, [set(), 0, 0, 0])
            slot[0].add(key)
            slot[1] += n
            slot[2] += typed
            slot[3] += data
    rows = [CountryRow(c, len(s), n, t, d) for c, (s, n, t, d) in acc.items()]
    rows.sort(key=lambda r: (-r.record_count, r.country))
    return CountryTable(attribution, rows, record_total)


def _center_groups(store: RecordStore, flt: ScanFilter) -> list[tuple[str, int, int, int]]:
    acc: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for center, is_data, n in store.group_counts(["data_center", "is_data_record"], flt):
        slot = acc[center]
        slot[0] += n
        if is_data is not None:
            slot[1] += n
            slot[2] += n if is_data else 0
    return [(k, *v) for k, v in sorted(acc.items())]


def _publisher_groups(store: RecordStore, flt: ScanFilter,
                      table: AliasTable) -> tuple[list[tuple[str, int, int, int]], dict[str, tuple[str, ...]]]:
    acc: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    countries: dict[str, tuple[str, ...]] = {}
    for raw, is_data, n in store.group_counts(["publisher_raw", "is_data_record"], flt):
        r = resolve_publisher(raw, table)
        if isinstance(r, Unresolved):
            key = f"unresolved:{r.normalized}"
            countries[key] = (UNKNOWN_COUNTRY,)
        else:
            key = r.entity_id
            countries[key] = r.countries
        slot = acc[key]
        slot[0] += n
        if is_data is not None:
            slot[1] += n
            slot[2] += n if is_data else 0
    return [(k, *v) for k, v in sorted(acc.items())], countries


def country_table(store: RecordStore, by: str, registries: Registries | None, *,
                  include_empty: bool = False) -> CountryTable:
    """Records per country under data-center or publisher attribution.

    Publisher attribution only counts records that carry both a publisher
    and a resource type. ``data_record_share`` is over typed records.
    """
    if registries is None:
        raise MissingRegistry("no registries loaded")
    base = ScanFilter() if include_empty else NON_EMPTY
    if by == "data_center":
        if registries.data_centers is None:
            raise MissingRegistry("data-center registry not loaded")
        reg = registries.data_centers
        return country_table_from_groups(_center_groups(store, base), reg.countries_for, by)
    if by == "publisher":
        if registries.publishers is None:
            raise MissingRegistry("publisher alias table not loaded")
        flt = ScanFilter(empty=base.empty, has_resource_type=True, has_fields=frozenset({FieldName.PUBLISHER}))
        groups, countries = _publisher_groups(store, flt, registries.publishers)
        return country_table_from_groups(groups, countries.__getitem__, by)
    raise ValueError(f"unknown attribution {by!r}")


# ---------------------------------------------------------- publisher types

@dataclass(frozen=True)
class PublisherTypeRow:
    publisher_type: str
    record_count: int
    data_record_count: int
    publisher_count: int

    @property
    def data_record_share(self) -> float | None:
        return _share(self.data_record_count, self.record_count)


@dataclass
class PublisherTypeTable:
    rows: list[PublisherTypeRow]

    def row(self, key: str | PublisherType) -> PublisherTypeRow:
        key = key.value if isinstance(key, PublisherType) else key
        return next(r for r in self.rows if r.publisher_type == key)

    @property
    def total(self) -> PublisherTypeRow:
        return PublisherTypeRow("Total", sum(r.record_count for r in self.rows),
                                sum(r.data_record_count for r in self.rows),
                                sum(r.publisher_count for r in self.rows))


def publisher_type_table_from_groups(groups: Iterable[tuple[str, bool, int]], table: AliasTable) -> PublisherTypeTable:
    """*groups* yields ``(publisher_raw, is_data_record, count)`` for typed records."""
    records: dict[str, list[int]] = {t.value: [0, 0] for t in PublisherType}
    records[NOT_FOUND] = [0, 0]
    publishers: dict[str, set[str]] = defaultdict(set)
    for raw, is_data, n in groups:
        if not raw or is_data is None or not n:
            continue
        r = resolve_publisher(raw, table)
        if isinstance(r, Unresolved):
            key, who = NOT_FOUND, r.normalized
        else:
            key, who = r.entity_type.value, r.entity_id
        records[key][0] += n
        records[key][1] += n if is_data else 0
        publishers[key].add(who)
    rows = [PublisherTypeRow(k, n, d, len(publishers[k])) for k, (n, d) in records.items()]
    return PublisherTypeTable(rows)


def publisher_type_table(store: RecordStore, table: AliasTable | None) -> PublisherTypeTable:
    if table is None:
        raise MissingRegistry("publisher alias table not loaded")
    flt = ScanFilter(empty=False, has_resource_type=True, has_fields=frozenset({FieldName.PUBLISHER}))
    groups = [(raw, None if d is None else bool(d), n)
              for raw, d, n in store.group_counts(["publisher_raw", "is_data_record"], flt)]
    return publisher_type_table_from_groups(groups, table)


# -------------------------------------------------------------------- years

@dataclass
class YearHistogram:
    lo: int
    hi: int
    counts: dict[int, int]
    excluded: int = 0
    missing: int = 0


def year_histogram_from_counts(year_counts: Mapping, year_range: tuple[int, int]) -> YearHistogram:
    lo, hi = year_range
    if lo > hi:
        raise InvalidRange(f"empty year range {lo}..{hi}")
    hist = YearHistogram(lo, hi, {y: 0 for y in range(lo, hi + 1)})
    for year, n in year_counts.items():
        if year in (None, MISSING):
            hist.missing += n
        elif lo <= int(year) <= hi:
            hist.counts[int(year)] += n
        else:
            hist.excluded += n
    return hist


def year_histogram(store: RecordStore, year_range: tuple[int, int]) -> YearHistogram:
    return year_histogram_from_counts(store.count_by("publication_year", NON_EMPTY), year_range)


def date_subtype_distribution(store: RecordStore) -> dict[DateKind, tuple[int, float]]:
    """Per date kind: records carrying it, and share of records with any event."""
    per_kind, with_any = store.bit_counts("date_kinds", DATE_KIND_ORDER)
    if with_any == 0:
        return {}
    return {k: (n, n / with_any) for k, n in per_kind.items() if n}


# ------------------------------------------------------------ concentration

@dataclass(frozen=True)
class ConcentrationStats:
    k_for_threshold: int
    threshold: float
    top_share: float
    keys: int
    total: int
    top_keys: tuple = ()


def concentration_stats(counts: Mapping, threshold: float) -> ConcentrationStats:
    """Fewest keys whose combined count reaches *threshold* of the total."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    order = [(k, c) for k, c in ranked(counts) if c > 0]
    total = sum(c for _, c in order)
    if not order:
        raise EmptyInput("no counts")
    k = minimal_prefix([c for _, c in order], total, threshold)
    top = order[:k]
    return ConcentrationStats(k, threshold, sum(c for _, c in top) / total, len(order), total,
                              tuple(key for key, _ in top))


def data_center_type_table(store: RecordStore, top_n: int = 20) -> list[tuple[str, int, dict[str, int]]]:
    """Largest data centers with their typed-record breakdown."""
    totals = store.count_by("data_center", NON_EMPTY)
    top = ranked(totals)[:top_n]
    breakdown: dict[str, dict[str, int]] = defaultdict(dict)
    for center, rtype, n in store.group_counts(["data_center", "resource_type"], NON_EMPTY):
        if rtype is not None:
            breakdown[center][rtype] = n
    return [(c, n, dict(sorted(breakdown[c].items()))) for c, n in top]


def flag_counts(store: RecordStore) -> dict[QualityFlag, int]:
    counts, _ = store.bit_counts("flags", FLAG_ORDER)
    return counts


def quality_warnings(store: RecordStore) -> list[str]:
    """Caveats about the corpus a reader of any report should know."""
    total = store.count()
    if total == 0:
        return []
    warnings = []
    nonempty = store.count(NON_EMPTY)
    empty = total - nonempty
    if empty:
        warnings.append(f"{empty} of {total} records ({percent(empty / total)}%) are empty; "
                        "they are excluded from analytic denominators unless stated")
    typed = store.count(ScanFilter(empty=False, has_resource_type=True))
    if nonempty and typed < nonempty:
        warnings.append(f"{nonempty - typed} non-empty records ({percent((nonempty - typed) / nonempty)}%) "
                        "have no usable resource type and cannot be classed as data or text")
    flags = flag_counts(store)
    labels = {
        QualityFlag.DATASET_LIKE_OTHER: "typed Other with subtype 'data sheet' (possibly datasets)",
        QualityFlag.MULTIPLE_PUBLICATION_YEARS: "carry several publication years (earliest used)",
        QualityFlag.YEAR_OUT_OF_RANGE: "carry a year outside the accepted window",
        QualityFlag.UNPARSEABLE_DATE: "carry an unparseable date value",
        QualityFlag.UNKNOWN_RESOURCE_TYPE: "carry a resource type outside the closed list",
        QualityFlag.AMBIGUOUS_LANGUAGE: "carry an unmappable language token",
    }
    for flag, label in labels.items():
        if flags.get(flag):
            warnings.append(f"{flags[flag]} records {label}")
    return warnings


# ------------------------------------------------------------ serialization

@dataclass
class Report:
    """A table plus the context needed to read it.

    ``columns`` pairs each name with a kind: ``"text"``, ``"int"`` or
    ``"share"``. Every share column needs an entry in ``denominators``.
    """

    name: str
    columns: list[tuple[str, str]]
    rows: list[list]
    denominators: dict[str, str] = field(default_factory=dict)
    filters: dict[str, object] = field(default_factory=dict)
    plot: tuple[str, str, list[tuple]] | None = None
    warnings: list[str] = field(default_factory=list)
    summary: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c, kind in self.columns if kind == "share" and c not in self.denominators]
        if missing:
            raise ValueError(f"report {self.name}: share column(s) without denominator: {missing}")


def _csv_text(header: list[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_csv(report: Report) -> str:
    header = [f"{c}_pct" if kind == "share" else c for c, kind in report.columns]
    rows = ([percent(v) if kind == "share" else ("" if v is None else v)
             for v, (_, kind) in zip(row, report.columns)] for row in report.rows)
    return _csv_text(header, rows)


def render_json(report: Report, generated_at: str | None) -> str:
    doc = {
        "report": report.name,
        "generated_at": generated_at,
        "columns": [{"name": c, "kind": k} for c, k in report.columns],
        "rows": [dict(zip((c for c, _ in report.columns), row)) for row in report.rows],
        "denominators": report.denominators,
        "filters": report.filters,
        "summary": report.summary,
        "warnings": report.warnings,
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n"


def write_report(report: Report, out_dir: str | os.PathLike, generated_at: str | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for suffix, text in ((".csv", render_csv(report)), (".json", render_json(report, generated_at))):
        path = out / f"{report.name}{suffix}"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    if report.plot is not None:
        x, y, points = report.plot
        path = out / f"{report.name}.plot.csv"
        path.write_text(_csv_text([x, y], points), encoding="utf-8")
        written.append(path)
    return written


# ------------------------------------------------------------- report set

def completeness_report(m: CompletenessMatrix, warnings: list[str]) -> Report:
    rows = [[r.field.value, r.count_present, r.share_over_all_records, r.count_present_nonempty,
             r.share_over_nonempty_records] for r in m.rows]
    rows.append(["EmptyRecords", m.empty, m.empty_share, 0, 0.0 if m.nonempty else None])
    return Report(
        "completeness",
        [("field", "text"), ("count_present", "int"), ("share_over_all_records", "share"),
         ("count_present_nonempty", "int"), ("share_over_nonempty_records", "share")],
        rows,
        denominators={"share_over_all_records": f"all stored records ({m.total})",
                      "share_over_nonempty_records": f"non-empty records ({m.nonempty})"},
        plot=("field", "share_over_all_records",
              [(r.field.value, r.share_over_all_records) for r in m.rows]),
        warnings=warnings,
        summary={"total": m.total, "nonempty": m.nonempty, "empty": m.empty, "empty_share": m.empty_share},
    )


def resource_type_report(t: ResourceTypeTable, top_k: int) -> Report:
    columns = [("resource_type", "text"), ("count", "int"), ("share", "share")]
    denominators = {"share": f"records with a resource type ({t.denominator})"}
    for i in range(1, top_k + 1):
        columns += [(f"subtype_{i}", "text"), (f"subtype_{i}_share", "share")]
        denominators[f"subtype_{i}_share"] = "records of the same resource type"
    rows = []
    for r in t.rows:
        row = [r.resource_type, r.count, r.share]
        for i in range(top_k):
            row += [r.subtypes[i][0], r.subtypes[i][2]] if i < len(r.subtypes) else ["", None]
        rows.append(row)
    return Report("resource_types", columns, rows, denominators,
                  plot=("resource_type", "count", [(r.resource_type, r.count) for r in t.rows]),
                  summary={"denominator": t.denominator, "counts_sum": t.counts_sum})


def country_report(t: CountryTable) -> Report:
    src = "data_centers" if t.attribution == "data_center" else "publishers"
    return Report(
        f"countries_by_{t.attribution}",
        [("country", "text"), (src, "int"), ("records", "int"), ("typed_records", "int"),
         ("data_records", "int"), ("data_record_share", "share")],
        [[r.country, r.source_count, r.record_count, r.typed_count, r.data_record_count, r.data_record_share]
         for r in t.rows],
        denominators={"data_record_share": "records of the country with a resource type"},
        filters={"attribution": t.attribution, "counting": "whole",
                 "records": "non-empty" + (", with publisher and resource type"
                                           if t.attribution == "publisher" else "")},
        plot=("country", "data_records", [(r.country, r.data_record_count) for r in t.rows]),
        summary={"record_total": t.record_total},
    )


def publisher_type_report(t: PublisherTypeTable) -> Report:
    rows = [[r.publisher_type, r.record_count, r.data_record_share, r.publisher_count]
            for r in t.rows + [t.total]]
    return Report(
        "publisher_types",
        [("publisher_type", "text"), ("records", "int"), ("data_record_share", "share"),
         ("publishers", "int")],
        rows,
        denominators={"data_record_share": "records of the publisher type"},
        filters={"records": "non-empty, with publisher and resource type"},
        plot=("publisher_type", "records", [(r.publisher_type, r.record_count) for r in t.rows]),
    )


def year_report(h: YearHistogram, plausible: tuple[int, int] | None = None) -> Report:
    summary = {"excluded_out_of_range": h.excluded, "missing_year": h.missing}
    if plausible is not None:
        summary["plausible_window"] = list(plausible)
    return Report(
        "publication_years",
        [("year", "int"), ("records", "int")],
        [[y, n] for y, n in h.counts.items()],
        filters={"year_range": [h.lo, h.hi], "records": "non-empty"},
        plot=("year", "records", list(h.counts.items())),
        summary=summary,
    )


def date_subtype_report(dist: Mapping[DateKind, tuple[int, float]], with_events: int) -> Report:
    rows = [[k.value, dist[k][0], dist[k][1]] for k in DateKind if k in dist]
    return Report(
        "date_subtypes",
        [("date_kind", "text"), ("records", "int"), ("share", "share")],
        rows,
        denominators={"share": f"records with at least one typed date ({with_events})"},
        plot=("date_kind", "share", [(r[0], r[2]) for r in rows]),
    )


def concentration_report(name: str, c: ConcentrationStats) -> Report:
    return Report(
        name,
        [("rank", "int"), ("key", "text")],
        [[i, k] for i, k in enumerate(c.top_keys, start=1)],
        summary={"k_for_threshold": c.k_for_threshold, "threshold": c.threshold, "top_share": c.top_share,
                 "keys": c.keys, "total": c.total},
        denominators={},
    )


def relation_reports(stats) -> list[Report]:
    summary_rows = [
        ["records_with_relations", stats.records_with_relations, stats.share_with_relations,
         stats.share_with_relations_all],
    ]
    main = Report(
        "relations",
        [("measure", "text"), ("count", "int"), ("share_over_nonempty", "share"), ("share_over_all", "share")],
        summary_rows,
        denominators={"share_over_nonempty": f"non-empty records ({stats.records_nonempty})",
                      "share_over_all": f"all stored records ({stats.records_all})"},
        plot=("edges_per_record", "records", sorted(stats.edges_per_record.items())),
        summary={
            "edges_total": stats.edges_total,
            "resolution_counts": stats.resolution_counts,
            "internal_share": stats.internal_share,
            "external_share": stats.external_share,
            "unresolved_share": stats.unresolved_share,
            "internal_dataset_share": stats.internal_dataset_share,
            "internal_typed_share": stats.internal_typed_share,
            "centers_with_any": stats.centers_with_any,
            "centers_with_all": stats.centers_with_all,
            "centers_total": stats.centers_total,
            "max_edges_per_record": stats.max_edges_per_record,
            "denominators": {"edge shares": f"all extracted edges ({stats.edges_total})",
                             "internal_dataset_share": "internal edges"},
        },
    )
    coverage = Report(
        "relation_coverage_by_center",
        [("data_center", "text"), ("records", "int"), ("records_with_relations", "int"), ("share", "share")],
        [[c, n, k, _share(k, n)] for c, (k, n) in stats.center_coverage.items()],
        denominators={"share": "non-empty records of the data center"},
        plot=("data_center", "share", [(c, _share(k, n)) for c, (k, n) in stats.center_coverage.items()]),
    )
    return [main, coverage]


def build_reports(store: RecordStore, registries: Registries | None = None, *,
                  year_range: tuple[int, int] = (1950, 2020), plausible_window: tuple[int, int] | None = None,
                  top_k: int = 3, threshold: float = 0.8, relation_stats=None) -> list[Report]:
    warnings = quality_warnings(store)
    reports = [completeness_report(completeness_matrix(store), warnings),
               resource_type_report(resource_type_table(store, top_k), top_k)]
    registries = registries or Registries()
    if registries.data_centers is not None:
        reports.append(country_report(country_table(store, "data_center", registries)))
    if registries.publishers is not None:
        reports.append(country_report(country_table(store, "publisher", registries)))
        reports.append(publisher_type_report(publisher_type_table(store, registries.publishers)))
    reports.append(year_report(year_histogram(store, year_range), plausible_window))
    per_kind, with_any = store.bit_counts("date_kinds", DATE_KIND_ORDER)
    reports.append(date_subtype_report(date_subtype_distribution(store), with_any))
    centers = store.count_by("data_center", NON_EMPTY)
    if centers:
        reports.append(concentration_report("concentration_data_centers", concentration_stats(centers, threshold)))
    top = data_center_type_table(store)
    types = [t.value for t in ResourceType]
    reports.append(Report(
        "top_data_centers_by_type",
        [("data_center", "text"), ("records", "int")] + [(t, "int") for t in types],
        [[c, n] + [b.get(t, 0) for t in types] for c, n, b in top],
        filters={"records": "non-empty", "top_n": 20},
    ))
    if relation_stats is not None:
        reports.extend(relation_reports(relation_stats))
    return reports
