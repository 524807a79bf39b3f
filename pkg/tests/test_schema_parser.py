from __future__ import annotations

import tracemalloc

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaharvest.errors import MalformedMetadata, MalformedResponse
from metaharvest.schema_parser import (ALL_FIELDS_MASK, FieldName, ParsedRecord, RawRecord, detect_empty, fields_in,
                                       iter_page, parse_page, parse_record_metadata, read_page)
from metaharvest.testing import RecordSpec, list_records_page

FULL = RecordSpec(
    "oai:datacite.org:1",
    data_center="BL.IMPERIAL",
    doi="10.5072/full",
    alternate_identifiers=[("URL", "http://example.org/x")],
    creators=["Sheldon, H. H."],
    titles=["Main title", "A subtitle"],
    publisher="Imperial College London",
    publication_year="2005",
    dates=[("Available", "01/2/2005")],
    subjects=[("physics", "DDC")],
    contributors=[("Doe, J.", "DataCollector")],
    resource_type=("Dataset", "Survey"),
    descriptions=[("Abstract", "Some text"), ("Methods", "How")],
    related=["10.15468/dl.qnbifh"],
    formats=["text/csv"],
    language="en",
    rights=["CC-BY"],
)


def parse_one(spec, prefix="oai_datacite"):
    [raw] = parse_page(list_records_page([spec], metadata_prefix=prefix))
    return parse_record_metadata(raw)


# ---------------------------------------------------------------- pages

def test_page_of_100_records_in_document_order():
    specs = [RecordSpec(f"oai:x:{i}", titles=[str(i)]) for i in range(100)]
    body = list_records_page(specs)
    raws = parse_page(body)
    # independent count of record start tags
    assert len(raws) == body.count(b"<record>") == 100
    assert [r.oai_identifier for r in raws] == [s.oai_identifier for s in specs]


def test_deleted_header_is_a_tombstone():
    raws = parse_page(list_records_page([RecordSpec("oai:x:1"), RecordSpec("oai:x:2", deleted=True)]))
    assert [r.deleted for r in raws] == [False, True]
    assert raws[1].metadata_payload is None


def test_page_without_records():
    assert parse_page(list_records_page([])) == []


def test_malformed_page_reports_byte_offset():
    body = list_records_page([RecordSpec("oai:x:1", titles=["x"])])
    broken = body.replace(b"</titles>", b"</tittles>")
    with pytest.raises(MalformedResponse) as info:
        parse_page(broken)
    assert info.value.offset is not None
    assert abs(info.value.offset - broken.index(b"</tittles>")) <= 2


def test_empty_body_is_malformed():
    with pytest.raises(MalformedResponse):
        parse_page(b"   ")


def test_envelope_details():
    body = list_records_page([RecordSpec("oai:x:1")], "tok", cursor=5, complete_list_size=10)
    info = read_page(body)
    assert (info.resumption_token, info.cursor, info.complete_list_size) == ("tok", 5, 10)
    assert info.response_date == "2016-04-01T00:00:00Z"


def test_raw_record_rejects_payload_on_tombstone():
    with pytest.raises(ValueError):
        RawRecord("oai:x", "2016-01-01", deleted=True, metadata_payload=b"<x/>")


def test_parsing_is_streaming():
    specs = [RecordSpec(f"oai:x:{i}", doi=f"10.5072/{i}", titles=["t" * 200], descriptions=[("Abstract", "d" * 500)])
             for i in range(4000)]
    body = list_records_page(specs)
    tracemalloc.start()
    n = sum(1 for _ in iter_page(body))
    _, streaming_peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    tracemalloc.start()
    kept = list(iter_page(body))
    _, holding_peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert n == len(kept) == 4000
    # records are detached as they are emitted, so discarding them keeps memory flat
    assert streaming_peak * 5 < holding_peak


# --------------------------------------------------------------- payloads

def test_all_fields_present():
    rec = parse_one(FULL)
    assert rec.presence == ALL_FIELDS_MASK
    assert bin(rec.presence).count("1") == 14
    assert fields_in(rec.presence) == list(FieldName)


def test_data_center_symbol():
    assert parse_one(FULL).data_center_id == "BL.IMPERIAL"


@pytest.mark.parametrize("prefix", ["oai_datacite", "oai_dc"])
def test_merged_date_values_in_order(prefix):
    rec = parse_one(RecordSpec("oai:x", publication_year="2005", dates=[("Available", "01/2/2005")]), prefix)
    assert rec.date_values == ["2005", "Available:01/2/2005"]


def test_subtitle_kept_as_separate_title():
    assert parse_one(FULL).titles == ["Main title", "A subtitle"]


def test_description_sections_kept_as_pairs():
    assert parse_one(FULL).descriptions == [("Abstract", "Some text"), ("Methods", "How")]


def test_unknown_elements_go_to_extras():
    payload = (b'<resource xmlns="http://datacite.org/schema/kernel-3"><titles><title>x</title></titles>'
               b"<geoLocations><geoLocation><geoLocationPlace>Leiden</geoLocationPlace></geoLocation>"
               b"</geoLocations><version>2</version></resource>")
    rec = parse_record_metadata(RawRecord("oai:x", "2016-01-01", ["BL.X"], metadata_payload=payload))
    assert ("geoLocations", "Leiden") in rec.extras
    assert ("version", "2") in rec.extras
    assert rec.data_center_id == "BL.X"


def test_dc_type_with_slash_and_spare_types():
    payload = (b'<oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" '
               b'xmlns:dc="http://purl.org/dc/elements/1.1/"><dc:type>Text/Report</dc:type>'
               b"<dc:type>info:eu-repo/x</dc:type><dc:type>Other</dc:type></oai_dc:dc>")
    rec = parse_record_metadata(RawRecord("oai:x", "2016-01-01", ["A.B"], metadata_payload=payload))
    assert rec.resource_type_raw == ("Text", "Report")
    assert ("type", "Other") in rec.extras and ("type", "info:eu-repo/x") in rec.extras


def test_malformed_payload_raises_with_identifier():
    raw = RawRecord("oai:bad", "2016-01-01", ["A.B"], metadata_payload=b"<resource><title>")
    with pytest.raises(MalformedMetadata) as info:
        parse_record_metadata(raw)
    assert info.value.oai_identifier == "oai:bad"


def test_unsupported_root_is_malformed():
    raw = RawRecord("oai:x", "2016-01-01", ["A.B"], metadata_payload=b"<marc/>")
    with pytest.raises(MalformedMetadata):
        parse_record_metadata(raw)


def test_deleted_record_cannot_be_parsed():
    with pytest.raises(ValueError):
        parse_record_metadata(RawRecord("oai:x", "2016-01-01", deleted=True))


def test_data_center_from_set_specs_when_symbol_missing():
    rec = parse_one(RecordSpec("oai:x", data_center="CDL.DRYAD", empty=True))
    assert rec.data_center_id == "CDL.DRYAD"


# --------------------------------------------------------------- emptiness

def test_empty_record_detection():
    empty = parse_one(RecordSpec("oai:x", data_center="BL.IMPERIAL", empty=True))
    assert detect_empty(empty)
    assert empty.presence == FieldName.DATA_CENTER.bit
    assert not detect_empty(ParsedRecord("oai:x", "A.B", titles=["only a title"]))
    assert not detect_empty(parse_one(FULL))


# -------------------------------------------------------------- properties

word = st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd")), min_size=1, max_size=8)
phrase = st.lists(word, min_size=1, max_size=3).map(" ".join)
maybe = lambda s: st.none() | s  # noqa: E731


@st.composite
def record_specs(draw):
    return RecordSpec(
        oai_identifier="oai:gen:" + draw(word),
        data_center=draw(word) + "." + draw(word),
        doi=draw(maybe(word.map(lambda w: f"10.5072/{w}"))),
        alternate_identifiers=draw(st.lists(word.map(lambda w: ("URL", f"http://x.org/{w}")), max_size=2)),
        creators=draw(st.lists(phrase, max_size=3)),
        titles=draw(st.lists(phrase, max_size=2)),
        publisher=draw(maybe(phrase)),
        publication_year=draw(maybe(st.integers(1000, 2099).map(str))),
        dates=draw(st.lists(st.tuples(st.sampled_from(["Available", "Created"]), word), max_size=2)),
        subjects=draw(st.lists(st.tuples(phrase, maybe(word)), max_size=2)),
        contributors=draw(st.lists(st.tuples(phrase, maybe(word)), max_size=2)),
        resource_type=draw(maybe(st.tuples(word, maybe(phrase)))),
        descriptions=draw(st.lists(st.tuples(word, phrase), max_size=2)),
        related=draw(st.lists(word.map(lambda w: f"10.1234/{w}"), max_size=3)),
        formats=draw(st.lists(word, max_size=2)),
        language=draw(maybe(word)),
        rights=draw(st.lists(phrase, max_size=2)),
    )


def expected_fields(spec: RecordSpec) -> set[FieldName]:
    """Recount of non-empty fields straight from the authored spec."""
    present = {
        FieldName.IDENTIFIER: bool(spec.doi or spec.alternate_identifiers),
        FieldName.CREATOR: bool(spec.creators),
        FieldName.TITLE: bool(spec.titles),
        FieldName.PUBLISHER: spec.publisher is not None,
        FieldName.DATE: bool(spec.publication_year or spec.dates),
        FieldName.SUBJECT: bool(spec.subjects),
        FieldName.CONTRIBUTOR: bool(spec.contributors),
        FieldName.RESOURCE_TYPE: spec.resource_type is not None,
        FieldName.DESCRIPTION: bool(spec.descriptions),
        FieldName.DATA_CENTER: True,
        FieldName.RELATION: bool(spec.related),
        FieldName.FORMAT: bool(spec.formats),
        FieldName.LANGUAGE: spec.language is not None,
        FieldName.RIGHTS: bool(spec.rights),
    }
    return {f for f, ok in present.items() if ok}


@settings(max_examples=150, deadline=None)
@given(spec=record_specs(), prefix=st.sampled_from(["oai_datacite", "oai_dc"]))
def test_presence_matches_independent_recount(spec, prefix):
    rec = parse_one(spec, prefix)
    assert set(fields_in(rec.presence)) == expected_fields(spec)
    assert detect_empty(rec) == (expected_fields(spec) == {FieldName.DATA_CENTER})


@settings(max_examples=150, deadline=None)
@given(spec=record_specs())
def test_verbatim_capture_round_trip(spec):
    rec = parse_one(spec)
    assert rec.primary_identifier == spec.doi
    assert rec.alternate_identifiers == spec.alternate_identifiers
    assert rec.creators == spec.creators
    assert rec.titles == spec.titles
    assert rec.publisher_raw == spec.publisher
    assert rec.date_values == ([spec.publication_year] if spec.publication_year else []) + \
        [f"{k}:{v}" for k, v in spec.dates]
    assert rec.subjects == spec.subjects
    assert rec.contributors == spec.contributors
    assert rec.resource_type_raw == spec.resource_type
    assert rec.descriptions == spec.descriptions
    assert rec.relations_raw == spec.related
    assert rec.formats == spec.formats
    assert rec.languages_raw == ([spec.language] if spec.language else [])
    assert rec.rights == spec.rights
    assert ParsedRecord.from_dict(rec.to_dict()) == rec
