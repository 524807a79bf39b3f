from __future__ import annotations

import itertools
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaharvest.cleaning import QualityFlag, ResourceType, canonicalize
from metaharvest.errors import StorageFailure
from metaharvest.record_store import MISSING, NON_EMPTY, RecordStore, ScanFilter, UpsertResult, normalize_datestamp
from metaharvest.schema_parser import FieldName, ParsedRecord


def rec(i, center="BL.IMPERIAL", **kw):
    kw.setdefault("titles", [f"title {i}"])
    return ParsedRecord(f"oai:x:{i:05d}", center, **kw)


@pytest.fixture
def store(tmp_path):
    with RecordStore(tmp_path / "store") as s:
        yield s


def fill(store, records, stamp="2016-04-01"):
    with store.batch():
        for p in records:
            store.upsert_record(p, stamp)
            store.set_canonical(p.oai_identifier, canonicalize(p))


# ------------------------------------------------------------------ upsert

def test_latest_wins(store):
    assert store.upsert_record(rec(1), "2016-01-01") is UpsertResult.INSERTED
    newer = rec(1, titles=["new"])
    assert store.upsert_record(newer, "2016-02-01") is UpsertResult.REPLACED
    got = store.get("oai:x:00001")
    assert got.version_count == 2 and got.parsed.titles == ["new"]
    assert store.upsert_record(rec(1, titles=["old"]), "2015-12-01") is UpsertResult.IGNORED_STALE
    got = store.get("oai:x:00001")
    assert got.parsed.titles == ["new"] and got.latest_datestamp == "2016-02-01T00:00:00Z"


def test_replace_drops_stale_canonical(store):
    fill(store, [rec(1, resource_type_raw=("Dataset", None))])
    store.upsert_record(rec(1), "2017-01-01")
    assert store.get("oai:x:00001").canonical is None
    assert store.uncleaned_count() == 1


def test_empty_records_are_stored(store):
    assert store.upsert_record(ParsedRecord("oai:e", "BL.IMPERIAL"), "2016-01-01") is UpsertResult.INSERTED
    assert store.count(ScanFilter(empty=True)) == 1


def test_blank_identifier_rejected(store):
    with pytest.raises(ValueError):
        store.upsert_record(ParsedRecord("", "A.B"), "2016-01-01")


def test_datestamp_normalization():
    assert normalize_datestamp("2016-04-01") == "2016-04-01T00:00:00Z"
    assert normalize_datestamp("2016-04-01T02:00:00+02:00") == "2016-04-01T00:00:00Z"


def test_durability(tmp_path):
    with RecordStore(tmp_path / "s") as s:
        fill(s, [rec(i) for i in range(5)])
    with RecordStore(tmp_path / "s") as s:
        assert len(s) == 5
        assert s.get("oai:x:00003").canonical is not None


def test_unopenable_store(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(StorageFailure):
        RecordStore(blocker)


def test_batch_rolls_back_on_error(store):
    with pytest.raises(RuntimeError):
        with store.batch():
            store.upsert_record(rec(1), "2016-01-01")
            raise RuntimeError
    assert len(store) == 0


def state(store):
    return [(r.oai_identifier, r.latest_datestamp, r.parsed.to_dict()) for r in store.scan()]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_replay_in_any_order_converges(tmp_path_factory, seed):
    rng = random.Random(seed)
    stream = [(rec(rng.randrange(4), titles=[f"v{rng.randrange(3)}"]), f"2016-01-0{rng.randrange(1, 4)}")
              for _ in range(10)]
    states = []
    for order in range(3):
        shuffled = list(stream)
        random.Random(order).shuffle(shuffled)
        with RecordStore(tmp_path_factory.mktemp("s")) as s:
            for p, stamp in shuffled:
                s.upsert_record(p, stamp)
            states.append(state(s))
    assert states[0] == states[1] == states[2]


# -------------------------------------------------------------------- scan

def test_scan_filters(store):
    records = [rec(i, center="BL.IMPERIAL" if i % 2 else "CDL.DRYAD", resource_type_raw=("Dataset", None))
               for i in range(6)]
    records.append(ParsedRecord("oai:empty", "BL.IMPERIAL"))
    fill(store, records)
    assert [r.oai_identifier for r in store.scan(ScanFilter(data_center="BL.IMPERIAL"))] == \
        ["oai:empty", "oai:x:00001", "oai:x:00003", "oai:x:00005"]
    assert list(store.scan(ScanFilter(data_center="NOPE.NOPE"))) == []
    assert store.count(ScanFilter(empty=True)) == 1
    assert store.count(ScanFilter(resource_type=ResourceType.DATASET, data_center="CDL.DRYAD")) == 3
    assert store.count(ScanFilter(has_fields=frozenset({FieldName.TITLE}))) == 6
    assert store.count(ScanFilter(lacks_fields=frozenset({FieldName.TITLE}))) == 1


def test_scan_sees_snapshot_taken_at_start(store):
    fill(store, [rec(i) for i in range(3)])
    it = store.scan()
    first = next(it)
    fill(store, [rec(i) for i in range(3, 6)])
    assert [first.oai_identifier] + [r.oai_identifier for r in it] == [f"oai:x:{i:05d}" for i in range(3)]
    assert len(store) == 6


def test_empty_filter_on_fixture(store):
    rng = random.Random(3)
    flags = [rng.random() < 0.15 for _ in range(300)]
    fill(store, [ParsedRecord(f"oai:{i}", "A.B") if e else rec(i) for i, e in enumerate(flags)])
    assert sum(1 for _ in store.scan(ScanFilter(empty=True))) == sum(flags)


# ---------------------------------------------------------------- count_by

def test_count_by_type_with_missing_bucket(store):
    types = ["Dataset"] * 5 + ["Text"] * 3 + [None] * 2
    fill(store, [rec(i, resource_type_raw=(t, None) if t else None) for i, t in enumerate(types)])
    assert store.count_by("resource_type") == {"Dataset": 5, "Text": 3, MISSING: 2}


def test_count_by_on_empty_store(store):
    assert store.count_by("resource_type") == {}
    assert store.count_by("country") == {}


def test_count_by_historical_year(store):
    fill(store, [rec(1, date_values=["1929"])])
    assert store.count_by("publication_year") == {1929: 1}


def test_count_by_country_is_whole_counting(store):
    fill(store, [rec(1), rec(2)])
    store.set_resolution("oai:x:00001", None, {"data_center": ["GB", "US"]})
    store.set_resolution("oai:x:00002", None, {"data_center": ["GB"]})
    assert store.count_by("country") == {"GB": 2, "US": 1}
    assert store.count_by("country", attribution="publisher") == {MISSING: 2}


def test_unknown_dimension(store):
    with pytest.raises(ValueError):
        store.count_by("colour")


@pytest.fixture(scope="module")
def mixed_store(tmp_path_factory):
    rng = random.Random(11)
    s = RecordStore(tmp_path_factory.mktemp("mixed"))
    records = []
    for i in range(400):
        if rng.random() < 0.15:
            records.append(ParsedRecord(f"oai:{i:04d}", f"C.{rng.randrange(5)}"))
            continue
        records.append(rec(i, center=f"C.{rng.randrange(5)}",
                           resource_type_raw=rng.choice([None, ("Dataset", None), ("Text", "report"), ("Image", None)]),
                           date_values=rng.choice([[], ["2001"], ["1999", "2003"]]),
                           publisher_raw=rng.choice([None, "Pub A", "Pub B"])))
    fill(s, records)
    yield s
    s.close()


FILTERS = [
    ScanFilter(), NON_EMPTY, ScanFilter(empty=True), ScanFilter(data_center="C.1"),
    ScanFilter(is_data_record=True), ScanFilter(has_resource_type=False),
    ScanFilter(year_range=(2000, 2002), data_center="C.2"),
    ScanFilter(has_fields=frozenset({FieldName.PUBLISHER, FieldName.RESOURCE_TYPE})),
]
DIMENSIONS = ["data_center", "resource_type", "publication_year", "publisher_raw", "is_data_record"]


@pytest.mark.parametrize("flt", FILTERS)
@pytest.mark.parametrize("dim", DIMENSIONS)
def test_scan_count_agreement(mixed_store, flt, dim):
    counts = mixed_store.count_by(dim, flt)
    scanned = list(mixed_store.scan(flt))
    assert sum(counts.values()) == len(scanned) == mixed_store.count(flt)

    def value(r):
        c = r.canonical
        v = {"data_center": r.parsed.data_center_id,
             "resource_type": c.resource_type.value if c.resource_type else None,
             "publication_year": c.publication_year, "publisher_raw": r.parsed.publisher_raw,
             "is_data_record": None if c.is_data_record is None else int(c.is_data_record)}[dim]
        return MISSING if v is None else v

    assert counts == dict(Counter(value(r) for r in scanned))


def _set(flt):
    return {k: getattr(flt, k) for k in flt.__dataclass_fields__ if getattr(flt, k) not in (None, frozenset())}


COMPATIBLE = [(a, b) for a, b in itertools.combinations(FILTERS[1:], 2)
              if all(_set(b).get(k, v) == v for k, v in _set(a).items())]


@pytest.mark.parametrize("a,b", COMPATIBLE)
def test_adding_a_filter_never_increases_counts(mixed_store, a, b):
    merged = ScanFilter(**{**_set(a), **_set(b)})
    assert mixed_store.count(merged) <= min(mixed_store.count(a), mixed_store.count(b))


def test_group_counts_and_bits(mixed_store):
    rows = mixed_store.group_counts(["data_center", "resource_type"], NON_EMPTY)
    assert sum(n for *_, n in rows) == mixed_store.count(NON_EMPTY)
    flags, any_flag = mixed_store.bit_counts("flags", list(QualityFlag))
    assert flags[QualityFlag.EMPTY_RECORD] == mixed_store.count(ScanFilter(empty=True))
    assert any_flag >= flags[QualityFlag.EMPTY_RECORD]


# --------------------------------------------------------------- NDJSON I/O

def test_ndjson_round_trip(tmp_path, mixed_store):
    path = tmp_path / "dump.ndjson"
    n = mixed_store.export_ndjson(path)
    assert n == len(mixed_store)
    with RecordStore(tmp_path / "copy") as copy:
        assert copy.import_ndjson(path) == n
        assert state(copy) == state(mixed_store)
        assert [r.canonical for r in copy.scan()] == [r.canonical for r in mixed_store.scan()]
        assert copy.count_by("resource_type") == mixed_store.count_by("resource_type")


def test_set_canonical_reports_changes(store):
    p = rec(1, resource_type_raw=("Dataset", None))
    store.upsert_record(p, "2016-01-01")
    assert store.set_canonical(p.oai_identifier, canonicalize(p)) is True
    assert store.set_canonical(p.oai_identifier, canonicalize(p)) is False
    with pytest.raises(KeyError):
        store.set_canonical("oai:nope", canonicalize(p))


def test_meta_values(store):
    assert store.get_meta("k", 7) == 7
    store.set_meta("k", {"a": [1, 2]})
    assert store.get_meta("k") == {"a": [1, 2]}
