"""Fixture builders: OAI-PMH pages, a replay transport and a fake clock.

These are used by the test-suite and the demo scripts, and are handy for
exercising the pipeline without a live repository::

    pages = chain_pages([records[:2], records[2:]])
    transport = ReplayTransport.for_chain("http://oai.example/oai", pages)
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .oai_client import DEFAULT_METADATA_PREFIX, HarvestRequest, HttpResponse, build_request_url

OAI_NS = "http://www.openarchives.org/OAI/2.0/"
OAI_DATACITE_NS = "http://schema.datacite.org/oai/oai-1.0/"
KERNEL_NS = "http://datacite.org/schema/kernel-3"
DC_NS = "http://purl.org/dc/elements/1.1/"
OAI_DC_NS = "http://www.openarchives.org/OAI/2.0/oai_dc/"


@dataclass
class RecordSpec:
    """Plain description of one record, serializable as oai_datacite or oai_dc."""

    oai_identifier: str
    data_center: str = "BL.IMPERIAL"
    datestamp: str = "2016-04-01T00:00:00Z"
    doi: str | None = None
    alternate_identifiers: list[tuple[str, str]] = field(default_factory=list)
    creators: list[str] = field(default_factory=list)
    titles: list[str] = field(default_factory=list)
    publisher: str | None = None
    publication_year: str | None = None
    dates: list[tuple[str, str]] = field(default_factory=list)
    subjects: list[tuple[str, str | None]] = field(default_factory=list)
    contributors: list[tuple[str, str | None]] = field(default_factory=list)
    resource_type: tuple[str, str | None] | None = None
    descriptions: list[tuple[str, str]] = field(default_factory=list)
    related: list[str] = field(default_factory=list)
    formats: list[str] = field(default_factory=list)
    language: str | None = None
    rights: list[str] = field(default_factory=list)
    deleted: bool = False
    empty: bool = False


def _el(tag: str, text: str, **attrs) -> str:
    a = "".join(f" {k}={quoteattr(v)}" for k, v in attrs.items() if v is not None)
    return f"<{tag}{a}>{escape(text)}</{tag}>"


def datacite_payload(spec: RecordSpec) -> str:
    """The <oai_datacite> element for *spec* (kernel-3 resource inside)."""
    if spec.empty:
        return ""
    parts: list[str] = []
    if spec.doi:
        parts.append(_el("identifier", spec.doi, identifierType="DOI"))
    if spec.creators:
        parts.append("<creators>" + "".join(
            f"<creator>{_el('creatorName', c)}</creator>" for c in spec.creators) + "</creators>")
    if spec.titles:
        parts.append("<titles>" + "".join(_el("title", t) for t in spec.titles) + "</titles>")
    if spec.publisher:
        parts.append(_el("publisher", spec.publisher))
    if spec.publication_year:
        parts.append(_el("publicationYear", spec.publication_year))
    if spec.subjects:
        parts.append("<subjects>" + "".join(
            _el("subject", v, subjectScheme=s) for v, s in spec.subjects) + "</subjects>")
    if spec.contributors:
        parts.append("<contributors>" + "".join(
            f"<contributor{'' if t is None else ' contributorType=' + quoteattr(t)}>"
            f"{_el('contributorName', n)}</contributor>" for n, t in spec.contributors) + "</contributors>")
    if spec.dates:
        parts.append("<dates>" + "".join(_el("date", v, dateType=k) for k, v in spec.dates) + "</dates>")
    if spec.language:
        parts.append(_el("language", spec.language))
    if spec.resource_type:
        general, sub = spec.resource_type
        parts.append(_el("resourceType", sub or "", resourceTypeGeneral=general))
    if spec.alternate_identifiers:
        parts.append("<alternateIdentifiers>" + "".join(
            _el("alternateIdentifier", v, alternateIdentifierType=s)
            for s, v in spec.alternate_identifiers) + "</alternateIdentifiers>")
    if spec.related:
        parts.append("<relatedIdentifiers>" + "".join(
            _el("relatedIdentifier", r, relatedIdentifierType="DOI") for r in spec.related)
            + "</relatedIdentifiers>")
    if spec.formats:
        parts.append("<formats>" + "".join(_el("format", f) for f in spec.formats) + "</formats>")
    if spec.rights:
        parts.append("<rightsList>" + "".join(_el("rights", r) for r in spec.rights) + "</rightsList>")
    if spec.descriptions:
        parts.append("<descriptions>" + "".join(
            _el("description", b, descriptionType=k) for k, b in spec.descriptions) + "</descriptions>")
    resource = f'<resource xmlns="{KERNEL_NS}">' + "".join(parts) + "</resource>"
    return (f'<oai_datacite xmlns="{OAI_DATACITE_NS}"><schemaVersion>3.1</schemaVersion>'
            f"{_el('datacentreSymbol', spec.data_center)}<payload>{resource}</payload></oai_datacite>")


def dc_payload(spec: RecordSpec) -> str:
    """The <oai_dc:dc> element for *spec*, with dates merged as the DC feed does."""
    if spec.empty:
        return ""
    p: list[str] = []
    if spec.doi:
        p.append(_el("dc:identifier", spec.doi))
    p += [_el("dc:identifier", v) for _, v in spec.alternate_identifiers]
    p += [_el("dc:creator", c) for c in spec.creators]
    p += [_el("dc:title", t) for t in spec.titles]
    if spec.publisher:
        p.append(_el("dc:publisher", spec.publisher))
    if spec.publication_year:
        p.append(_el("dc:date", spec.publication_year))
    p += [_el("dc:date", f"{k}:{v}") for k, v in spec.dates]
    p += [_el("dc:subject", v) for v, _ in spec.subjects]
    p += [_el("dc:contributor", n) for n, _ in spec.contributors]
    if spec.resource_type:
        general, sub = spec.resource_type
        p.append(_el("dc:type", general))
        if sub:
            p.append(_el("dc:type", sub))
    p += [_el("dc:description", b) for _, b in spec.descriptions]
    p += [_el("dc:relation", r) for r in spec.related]
    p += [_el("dc:format", f) for f in spec.formats]
    if spec.language:
        p.append(_el("dc:language", spec.language))
    p += [_el("dc:rights", r) for r in spec.rights]
    return f'<oai_dc:dc xmlns:oai_dc="{OAI_DC_NS}" xmlns:dc="{DC_NS}">' + "".join(p) + "</oai_dc:dc>"


def record_xml(spec: RecordSpec, metadata_prefix: str = DEFAULT_METADATA_PREFIX) -> str:
    status = ' status="deleted"' if spec.deleted else ""
    header = (f"<header{status}>{_el('identifier', spec.oai_identifier)}"
              f"{_el('datestamp', spec.datestamp)}{_el('setSpec', spec.data_center.split('.')[0])}"
              f"{_el('setSpec', spec.data_center)}</header>")
    if spec.deleted:
        return f"<record>{header}</record>"
    payload = dc_payload(spec) if metadata_prefix == "oai_dc" else datacite_payload(spec)
    return f"<record>{header}<metadata>{payload}</metadata></record>"


def _envelope(verb: str, body: str, response_date: str, request_attrs: str = "") -> bytes:
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n<OAI-PMH xmlns="{OAI_NS}">'
            f"<responseDate>{response_date}</responseDate>"
            f'<request verb="{verb}"{request_attrs}>http://oai.example/oai</request>'
            f"{body}</OAI-PMH>").encode("utf-8")


def list_records_page(records: Sequence[RecordSpec], token: str | None = None, *,
                      cursor: int | None = None, complete_list_size: int | None = None,
                      metadata_prefix: str = DEFAULT_METADATA_PREFIX,
                      response_date: str = "2016-04-01T00:00:00Z", final_token_element: bool = True) -> bytes:
    body = "".join(record_xml(r, metadata_prefix) for r in records)
    attrs = ""
    if cursor is not None:
        attrs += f' cursor="{cursor}"'
    if complete_list_size is not None:
        attrs += f' completeListSize="{complete_list_size}"'
    if token is not None:
        body += f"<resumptionToken{attrs}>{escape(token)}</resumptionToken>"
    elif final_token_element and attrs:
        body += f"<resumptionToken{attrs}/>"
    return _envelope("ListRecords", f"<ListRecords>{body}</ListRecords>", response_date)


def get_record_page(spec: RecordSpec, metadata_prefix: str = DEFAULT_METADATA_PREFIX) -> bytes:
    return _envelope("GetRecord", f"<GetRecord>{record_xml(spec, metadata_prefix)}</GetRecord>",
                     "2016-04-01T00:00:00Z")


def error_page(code: str, message: str = "", verb: str = "ListRecords") -> bytes:
    return _envelope(verb, f'<error code="{code}">{escape(message)}</error>', "2016-04-01T00:00:00Z")


def metadata_formats_page(prefixes: Iterable[str]) -> bytes:
    body = "".join(f"<metadataFormat><metadataPrefix>{p}</metadataPrefix></metadataFormat>" for p in prefixes)
    return _envelope("ListMetadataFormats", f"<ListMetadataFormats>{body}</ListMetadataFormats>",
                     "2016-04-01T00:00:00Z")


def chain_pages(batches: Sequence[Sequence[RecordSpec]], *, token_prefix: str = "T",
                metadata_prefix: str = DEFAULT_METADATA_PREFIX) -> list[tuple[str | None, bytes]]:
    """Build a paging chain: returns ``(request_token, page_bytes)`` pairs.

    Page *i* (1-based) returns token ``T<i>`` except the last, which returns none.
    """
    total = sum(len(b) for b in batches)
    out = []
    cursor = 0
    for i, batch in enumerate(batches, start=1):
        request_token = None if i == 1 else f"{token_prefix}{i - 1}"
        next_token = f"{token_prefix}{i}" if i < len(batches) else None
        out.append((request_token, list_records_page(batch, next_token, cursor=cursor,
                                                     complete_list_size=total,
                                                     metadata_prefix=metadata_prefix)))
        cursor += len(batch)
    return out


class ReplayTransport:
    """Serves scripted responses keyed by URL and records every call.

    A URL may map to a single response (served every time) or to a list,
    consumed in order with the last entry repeating.
    """

    def __init__(self, responses: dict[str, HttpResponse | bytes | list] | None = None):
        self.responses: dict[str, list[HttpResponse]] = {}
        self.calls: list[str] = []
        for url, r in (responses or {}).items():
            self.add(url, r)

    def add(self, url: str, response) -> None:
        items = response if isinstance(response, list) else [response]
        self.responses[url] = [r if isinstance(r, HttpResponse) else HttpResponse(200, r) for r in items]

    def __call__(self, url: str, *, timeout=None) -> HttpResponse:
        self.calls.append(url)
        queue = self.responses.get(url)
        if not queue:
            return HttpResponse(404, b"not found")
        if len(queue) > 1:
            return queue.pop(0)
        return queue[0]

    @classmethod
    def for_chain(cls, base_url: str, pages: list[tuple[str | None, bytes]], *,
                  metadata_prefix: str | None = None, set_spec: str | None = None,
                  from_=None, until=None) -> "ReplayTransport":
        t = cls()
        first = HarvestRequest(base_url, "ListRecords", metadata_prefix=metadata_prefix,
                               set_spec=set_spec, from_=from_, until=until)
        for token, body in pages:
            req = first if token is None else first.continued(token)
            t.add(build_request_url(req), body)
        return t


class FakeClock:
    """Stand-in for ``time.sleep`` that only records requested delays."""

    def __init__(self):
        self.sleeps: list[float] = []
        self.now = 0.0

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += seconds


# ------------------------------------------------------------- synthetic

RESOURCE_TYPES = ["Dataset", "Text", "Image", "Collection", "Software", "Audiovisual", "Film",
                  "PhysicalObject", "Event", "Model", "InteractiveResource", "Sound", "Workflow",
                  "Service", "Other"]
_DATE_KINDS = ["Accepted", "Available", "Copyrighted", "Collected", "Created", "Issued",
               "Submitted", "Updated", "Valid"]


def synthetic_record(i: int, rng: random.Random, *, empty: bool = False, n_centers: int = 20,
                     relations: int = 0, doi_prefix: str = "10.5072") -> RecordSpec:
    """A plausible, fully deterministic record for corpus-scale tests."""
    center = f"ALLOC{rng.randrange(max(1, n_centers // 5))}.REPO{rng.randrange(n_centers)}"
    spec = RecordSpec(oai_identifier=f"oai:synthetic:{i:08d}", data_center=center,
                      datestamp=f"2016-0{1 + i % 4}-{1 + i % 28:02d}T00:00:00Z")
    if empty:
        spec.empty = True
        return spec
    year = rng.randrange(1950, 2017)
    spec.doi = f"{doi_prefix}/syn.{i}"
    spec.creators = [f"Author{rng.randrange(500)}, A."]
    spec.titles = [f"Synthetic record {i}"]
    spec.publisher = f"Publisher {rng.randrange(60)}"
    spec.publication_year = str(year)
    if rng.random() < 0.3:
        spec.dates = [(rng.choice(_DATE_KINDS), f"{rng.randrange(1, 29)}/{rng.randrange(1, 13)}/{year}")]
    if rng.random() < 0.6:
        spec.resource_type = (rng.choice(RESOURCE_TYPES), rng.choice([None, "data sheet", "report"]))
    if rng.random() < 0.5:
        spec.language = rng.choice(["en", "fr-en", "English", "deu"])
    spec.subjects = [(f"subject {rng.randrange(100)}", None)]
    spec.related = [f"{doi_prefix}/syn.{rng.randrange(max(i, 1))}" for _ in range(relations)]
    return spec
