from __future__ import annotations

import csv
import io
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaharvest.cleaning import DateKind, ResourceType, canonicalize
from metaharvest.entities import NOT_FOUND, UNKNOWN_COUNTRY, AliasTable, DataCenterRegistry, PublisherType, Registries
from metaharvest.errors import EmptyInput, InvalidRange, MissingRegistry
from metaharvest.record_store import RecordStore
from metaharvest.reports import (Report, build_reports, compare_with_printed, completeness_from_counts,
                                 completeness_matrix, concentration_stats, country_table, country_table_from_groups,
                                 date_subtype_distribution, percent, publisher_type_table,
                                 publisher_type_table_from_groups, render_csv, render_json,
                                 resource_type_table, resource_type_table_from_counts, write_report,
                                 year_histogram, year_histogram_from_counts)
from metaharvest.schema_parser import FieldName, ParsedRecord

from oracles import exhaustive_k, percent_half_up
from published_counts import PRINTED_TYPE_PERCENT, TOTAL_RECORDS, TYPE_COUNTS, TYPED_TOTAL


def rec(i, center="A.B", **kw):
    kw.setdefault("titles", [f"t{i}"])
    return ParsedRecord(f"oai:rep:{i:06d}", center, **kw)


def load(store, records):
    with store.batch():
        for p in records:
            store.upsert_record(p, "2016-04-01")
            store.set_canonical(p.oai_identifier, canonicalize(p))


@pytest.fixture
def store(tmp_path):
    with RecordStore(tmp_path / "s") as s:
        yield s


ALIASES = AliasTable.from_rows([
    {"raw_name": raw, "entity_id": eid, "canonical_name": eid, "entity_type": etype, "countries": cc}
    for raw, eid, etype, cc in [
        ("Figshare", "figshare", "MultidisciplinaryRepository", "GB"),
        ("nanoHUB", "nanohub", "EducationalBody", "US"),
        ("PANGAEA", "pangaea", "ThematicRepository", "DE"),
        ("GBIF", "gbif", "ThematicRepository", "DK"),
        ("Some Conference", "conf", "Conference", "US"),
        ("Data-Planet", "dataplanet", "ThematicRepository", "US;GB"),
    ]
])


# --------------------------------------------------------------- rounding

@pytest.mark.parametrize("fraction,shown", [(0.0, "0.00"), (1.0, "100.00"), (1 / 8, "12.50"),
                                            (5e-05, "0.01"), (0.41686, "41.69"), (None, "")])
def test_percent_display(fraction, shown):
    assert percent(fraction) == shown


@settings(max_examples=500)
@given(den=st.integers(1, 10**7), data=st.data())
def test_percent_matches_exact_half_up(den, data):
    num = data.draw(st.integers(0, den))
    assert percent(num / den) == percent_half_up(num, den)


# ----------------------------------------------------------- completeness

def test_title_only_record(store):
    load(store, [rec(1)])
    m = completeness_matrix(store)
    assert m.row(FieldName.TITLE).count_present == 1
    content = [f for f in FieldName if f not in (FieldName.TITLE, FieldName.DATA_CENTER)]
    assert all(m.row(f).count_present == 0 for f in content)


def test_both_denominators(store):
    load(store, [rec(i, resource_type_raw=("Dataset", None)) for i in range(3)]
         + [ParsedRecord(f"oai:e{i}", "A.B") for i in range(2)])
    m = completeness_matrix(store)
    row = m.row(FieldName.RESOURCE_TYPE)
    assert (m.total, m.nonempty, m.empty) == (5, 3, 2)
    assert row.share_over_all_records == 0.6 and row.share_over_nonempty_records == 1.0
    assert m.empty_share == 0.4


def test_resource_type_completeness_from_published_counts():
    m = completeness_from_counts({FieldName.RESOURCE_TYPE: TYPED_TOTAL}, {FieldName.RESOURCE_TYPE: TYPED_TOTAL},
                                 TOTAL_RECORDS, TOTAL_RECORDS)
    assert percent(m.row(FieldName.RESOURCE_TYPE).share_over_all_records) == "60.21"


def test_completeness_of_empty_store(store):
    m = completeness_matrix(store)
    assert m.total == 0 and m.empty_share is None
    assert all(r.share_over_all_records is None for r in m.rows)


# --------------------------------------------------------- resource types

def test_published_type_percentages():
    table = resource_type_table_from_counts(TYPE_COUNTS, total=TYPED_TOTAL)
    assert table.row(ResourceType.DATASET).share * 100 == pytest.approx(41.69, abs=0.01)
    assert table.row(ResourceType.TEXT).share * 100 == pytest.approx(17.56, abs=0.01)
    issues = compare_with_printed(table.percentages(), PRINTED_TYPE_PERCENT)
    assert [d.key for d in issues] == ["Software"]
    assert not table.consistent and table.counts_sum == 4_491_183


def test_upper_bound_printed_value():
    assert compare_with_printed({"x": 0.004}, {"x": "<0.01"}) == []
    assert [d.key for d in compare_with_printed({"x": 0.02}, {"x": "< 0.01"})] == ["x"]
    assert [d.key for d in compare_with_printed({}, {"x": 1.0})] == ["x"]


def test_subtypes_ranked_with_name_tie_break(store):
    subs = ["b", "a", "c", "c", None, "d", "d"]
    load(store, [rec(i, resource_type_raw=("Image", s)) for i, s in enumerate(subs)]
         + [rec(100, resource_type_raw=("Text", None)), rec(101)])
    table = resource_type_table(store, top_k=3)
    image = table.row(ResourceType.IMAGE)
    assert [s for s, _, _ in image.subtypes] == ["c", "d", "a"]
    assert image.subtypes[0][2] == 2 / 7
    assert table.denominator == 8
    assert sum(r.share for r in table.rows) == pytest.approx(1.0, abs=1e-9)


def test_empty_store_type_table(store):
    assert resource_type_table(store).rows == []


# ---------------------------------------------------------------- countries

def registries(tmp_path):
    path = tmp_path / "centers.csv"
    path.write_text("symbol,countries\nBL.IMPERIAL,GB\nTIB.PANGAEA,DE;GB\n", encoding="utf-8")
    return Registries(DataCenterRegistry.from_csv(path), ALIASES)


def test_country_table_whole_counting(store, tmp_path):
    load(store, [rec(1, "BL.IMPERIAL", resource_type_raw=("Dataset", None)),
                 rec(2, "TIB.PANGAEA", resource_type_raw=("Text", None)),
                 rec(3, "TIB.PANGAEA", resource_type_raw=("Image", None)),
                 rec(4, "XX.NOWHERE"),
                 ParsedRecord("oai:empty", "BL.IMPERIAL")])
    t = country_table(store, "data_center", registries(tmp_path))
    gb, de, unknown = t.row("GB"), t.row("DE"), t.row(UNKNOWN_COUNTRY)
    assert (gb.source_count, gb.record_count, gb.typed_count, gb.data_record_count) == (2, 3, 3, 2)
    assert (de.record_count, de.data_record_share) == (2, 0.5)
    assert (unknown.record_count, unknown.data_record_share) == (1, None)
    assert t.record_total == 4
    assert country_table(store, "data_center", registries(tmp_path), include_empty=True).row("GB").record_count == 4


def test_country_by_publisher(store, tmp_path):
    load(store, [rec(1, publisher_raw="Data-Planet", resource_type_raw=("Other", "Data sheet")),
                 rec(2, publisher_raw="Nobody", resource_type_raw=("Dataset", None)),
                 rec(3, publisher_raw="Figshare")])
    t = country_table(store, "publisher", registries(tmp_path))
    assert {r.country: r.record_count for r in t.rows} == {"US": 1, "GB": 1, UNKNOWN_COUNTRY: 1}


def test_country_table_needs_registries(store):
    with pytest.raises(MissingRegistry):
        country_table(store, "data_center", None)
    with pytest.raises(MissingRegistry):
        country_table(store, "publisher", Registries())


def test_country_rows_from_groups():
    groups = [(f"EE.C{i}", n, n, d) for i, (n, d) in enumerate([(100, 99), (50, 50), (10, 9)])]
    t = country_table_from_groups(groups, lambda k: ["EE"])
    [row] = t.rows
    assert (row.source_count, row.record_count, row.data_record_count) == (3, 160, 158)


# ----------------------------------------------------------- publisher types

def test_publisher_type_table(store):
    load(store, [rec(1, publisher_raw="PANGAEA", resource_type_raw=("Dataset", None)),
                 rec(2, publisher_raw="GBIF", resource_type_raw=("Text", None)),
                 rec(3, publisher_raw="Some Conference", resource_type_raw=("Text", "paper")),
                 rec(4, publisher_raw="Unknown Press", resource_type_raw=("Dataset", None)),
                 rec(5, publisher_raw="unknown  press", resource_type_raw=("Image", None)),
                 rec(6, publisher_raw="Figshare")])
    t = publisher_type_table(store, ALIASES)
    assert len(t.rows) == 12
    thematic = t.row(PublisherType.THEMATIC_REPOSITORY)
    assert (thematic.record_count, thematic.data_record_share, thematic.publisher_count) == (2, 0.5, 2)
    assert t.row(PublisherType.CONFERENCE).data_record_share == 0.0
    assert (t.row(NOT_FOUND).record_count, t.row(NOT_FOUND).publisher_count) == (2, 1)
    assert t.row(PublisherType.MULTIDISCIPLINARY_REPOSITORY).record_count == 0
    assert t.total.record_count == 5


def test_publisher_type_from_groups_skips_untyped():
    t = publisher_type_table_from_groups([("PANGAEA", None, 5), ("", True, 3), ("PANGAEA", True, 2)], ALIASES)
    assert t.total.record_count == 2


def test_publisher_type_needs_alias_table(store):
    with pytest.raises(MissingRegistry):
        publisher_type_table(store, None)


# -------------------------------------------------------------------- years

def test_year_histogram_excludes_out_of_range(store):
    load(store, [rec(1, date_values=["1929"]), rec(2, date_values=["2005"]), rec(3, date_values=["2005"]),
                 rec(4)])
    h = year_histogram(store, (1950, 2020))
    assert {y: n for y, n in h.counts.items() if n} == {2005: 2}
    assert (h.excluded, h.missing) == (1, 1)
    assert set(h.counts) == set(range(1950, 2021))


def test_year_histogram_edge_cases(store):
    assert set(year_histogram(store, (1950, 2020)).counts.values()) == {0}
    assert year_histogram_from_counts({2005: 3, 2006: 1}, (2005, 2005)).counts == {2005: 3}
    with pytest.raises(InvalidRange):
        year_histogram_from_counts({}, (2020, 1950))


# ---------------------------------------------------------------- date kinds

def test_date_subtype_shares(store):
    records = []
    for i in range(100):
        dates = [f"Available:2005-01-0{1 + i % 9}"] if i < 43 else ["Created:2004"]
        if i < 25:
            dates.append("Created:2004")
        records.append(rec(i, date_values=dates + ["2005"]))
    records.append(rec(500, date_values=["2005"]))
    load(store, records)
    dist = date_subtype_distribution(store)
    assert dist[DateKind.AVAILABLE] == (43, 0.43)
    assert dist[DateKind.CREATED] == (82, 0.82)
    assert set(dist) == {DateKind.AVAILABLE, DateKind.CREATED}


def test_no_date_events(store):
    load(store, [rec(1, date_values=["2005"])])
    assert date_subtype_distribution(store) == {}


def test_repeated_kind_counts_once(store):
    load(store, [rec(1, date_values=["Available:2005", "Available:2006", "Issued:2005"])])
    assert date_subtype_distribution(store) == {DateKind.AVAILABLE: (1, 1.0), DateKind.ISSUED: (1, 1.0)}


# ------------------------------------------------------------ concentration

def test_concentration_examples():
    c = concentration_stats({"A": 50, "B": 30, "C": 10, "D": 5, "E": 5}, 0.8)
    assert (c.k_for_threshold, c.top_share, c.top_keys) == (2, 0.8, ("A", "B"))
    assert concentration_stats({"only": 7}, 0.3).k_for_threshold == 1
    assert concentration_stats({"only": 7}, 1.0).k_for_threshold == 1


def test_concentration_errors():
    with pytest.raises(EmptyInput):
        concentration_stats({}, 0.8)
    with pytest.raises(ValueError):
        concentration_stats({"a": 1}, 1.5)


@settings(max_examples=200)
@given(counts=st.dictionaries(st.integers(0, 500), st.integers(1, 10**6), min_size=1, max_size=60),
       threshold=st.sampled_from([0.1, 0.5, 0.8, 0.9, 0.95, 1.0]))
def test_concentration_is_minimal(counts, threshold):
    c = concentration_stats(counts, threshold)
    assert c.k_for_threshold == exhaustive_k(counts, threshold)
    assert c.top_share >= threshold - 1e-12


# ------------------------------------------------------------ serialization

def test_share_column_needs_denominator():
    with pytest.raises(ValueError):
        Report("bad", [("x", "share")], [[0.5]])


def test_csv_rounds_and_json_keeps_fractions():
    r = Report("r", [("k", "text"), ("n", "int"), ("s", "share")], [["a", 1, 2 / 3], ["b", None, None]],
               {"s": "all"})
    assert render_csv(r) == "k,n,s_pct\na,1,66.67\nb,,\n"
    doc = json.loads(render_json(r, "2016-04-01T00:00:00Z"))
    assert doc["rows"][0]["s"] == 2 / 3
    assert doc["denominators"] == {"s": "all"} and doc["generated_at"] == "2016-04-01T00:00:00Z"


@pytest.fixture
def populated(tmp_path):
    rng = random.Random(4)
    s = RecordStore(tmp_path / "pop")
    records = []
    for i in range(300):
        if rng.random() < 0.15:
            records.append(ParsedRecord(f"oai:e{i}", f"BL.C{rng.randrange(4)}"))
            continue
        records.append(rec(i, f"BL.C{rng.randrange(4)}",
                           resource_type_raw=rng.choice([None, ("Dataset", "survey"), ("Text", None),
                                                         ("Other", "Data sheet")]),
                           publisher_raw=rng.choice([None, "PANGAEA", "Figshare", "Who"]),
                           date_values=rng.choice([["2001"], ["1929", "Available:2001"], ["3000"], []])))
    load(s, records)
    yield s
    s.close()


def test_every_share_names_its_denominator(populated, tmp_path):
    reports = build_reports(populated, registries(tmp_path))
    names = {r.name for r in reports}
    assert {"completeness", "resource_types", "countries_by_data_center", "countries_by_publisher",
            "publisher_types", "publication_years", "date_subtypes", "concentration_data_centers"} <= names
    for r in reports:
        for col, kind in r.columns:
            if kind == "share":
                assert r.denominators[col]
                assert all(v is None or 0 <= v <= 1 for v in (row[[c for c, _ in r.columns].index(col)]
                                                              for row in r.rows))


def test_reports_are_deterministic(populated, tmp_path):
    outputs = []
    for run in range(2):
        out = tmp_path / f"out{run}"
        for r in build_reports(populated, registries(tmp_path)):
            write_report(r, out, "2016-04-01T00:00:00Z")
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]
    assert "completeness.plot.csv" in outputs[0]


def test_completeness_csv_matches_recount(populated, tmp_path):
    [r] = [r for r in build_reports(populated) if r.name == "completeness"]
    rows = {row["field"]: row for row in csv.DictReader(io.StringIO(render_csv(r)))}
    total = len(populated)
    titled = sum(1 for x in populated.scan() if x.parsed.titles)
    assert int(rows["Title"]["count_present"]) == titled
    assert rows["Title"]["share_over_all_records_pct"] == percent_half_up(titled, total)
    assert r.warnings and "empty" in r.warnings[0]
