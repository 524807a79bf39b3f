"""Streaming parser for OAI-PMH pages carrying DataCite metadata.

Two layers are handled here:

* the OAI-PMH envelope (``parse_page`` / ``read_page``), which turns a raw
  ``ListRecords`` or ``GetRecord`` response into :class:`RawRecord` objects
  without loading more than one record element at a time, and
* the record payload (``parse_record_metadata``), which captures the fourteen
  retrieved DataCite fields verbatim into a :class:`ParsedRecord`.

Both the ``oai_datacite`` (kernel-2/3 ``resource`` wrapped in an
``oai_datacite`` element) and ``oai_dc`` payload shapes are understood.
Elements are matched by local name, so namespace versions do not matter.
No normalization happens at this layer; see :mod:`metaharvest.cleaning`.
"""

from __future__ import annotations

import enum
import io
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterator

from .errors import MalformedMetadata, MalformedResponse

logger = logging.getLogger(__name__)


class FieldName(enum.Enum):
    """The fourteen fields retrieved from the metadata store, in bitmap order."""

    IDENTIFIER = "Identifier"
    CREATOR = "Creator"
    TITLE = "Title"
    PUBLISHER = "Publisher"
    DATE = "Date"
    SUBJECT = "Subject"
    CONTRIBUTOR = "Contributor"
    RESOURCE_TYPE = "ResourceType"
    DESCRIPTION = "Description"
    DATA_CENTER = "DataCenter"
    RELATION = "Relation"
    FORMAT = "Format"
    LANGUAGE = "Language"
    RIGHTS = "Rights"

    @property
    def bit(self) -> int:
        return 1 << _FIELD_ORDER.index(self)


_FIELD_ORDER = list(FieldName)
ALL_FIELDS_MASK = (1 << len(_FIELD_ORDER)) - 1
CONTENT_FIELDS_MASK = ALL_FIELDS_MASK & ~FieldName.DATA_CENTER.bit


def fields_in(presence: int) -> list[FieldName]:
    return [f for f in _FIELD_ORDER if presence & f.bit]


class RawRecord:
    """One record envelope as delivered by the repository.

    Records read from a page keep their parsed payload element, and
    ``metadata_payload`` is serialized from it only when asked for.
    """

    __slots__ = ("oai_identifier", "datestamp", "set_specs", "deleted", "_payload", "_element")

    def __init__(self, oai_identifier: str, datestamp: str, set_specs: list[str] | None = None,
                 deleted: bool = False, metadata_payload: bytes | None = None,
                 _element: ET.Element | None = None):
        if deleted and (metadata_payload or _element is not None):
            raise ValueError(f"deleted record {oai_identifier} carries a payload")
        self.oai_identifier = oai_identifier
        self.datestamp = datestamp
        self.set_specs = list(set_specs or [])
        self.deleted = deleted
        self._payload = metadata_payload
        self._element = _element

    @property
    def metadata_payload(self) -> bytes | None:
        if self._payload is None and self._element is not None:
            self._payload = ET.tostring(self._element)
        return self._payload

    def _key(self) -> tuple:
        return (self.oai_identifier, self.datestamp, self.set_specs, self.deleted, self.metadata_payload)

    def __eq__(self, other) -> bool:
        return isinstance(other, RawRecord) and self._key() == other._key()

    __hash__ = None

    def __repr__(self) -> str:
        return (f"RawRecord({self.oai_identifier!r}, {self.datestamp!r}, {self.set_specs!r}, "
                f"deleted={self.deleted!r})")


@dataclass
class ParsedRecord:
    """Verbatim capture of the DataCite fields of one record.

    ``presence`` is derived from the field values, so it can never disagree
    with them. Anything the parser does not model lands in ``extras`` as
    ``(path, text)`` pairs.
    """

    oai_identifier: str
    data_center_id: str = ""
    primary_identifier: str | None = None
    alternate_identifiers: list[tuple[str, str]] = field(default_factory=list)
    creators: list[str] = field(default_factory=list)
    titles: list[str] = field(default_factory=list)
    publisher_raw: str | None = None
    date_values: list[str] = field(default_factory=list)
    subjects: list[tuple[str, str | None]] = field(default_factory=list)
    contributors: list[tuple[str, str | None]] = field(default_factory=list)
    resource_type_raw: tuple[str, str | None] | None = None
    descriptions: list[tuple[str, str]] = field(default_factory=list)
    relations_raw: list[str] = field(default_factory=list)
    formats: list[str] = field(default_factory=list)
    languages_raw: list[str] = field(default_factory=list)
    rights: list[str] = field(default_factory=list)
    extras: list[tuple[str, str]] = field(default_factory=list)

    @property
    def presence(self) -> int:
        values = {
            FieldName.IDENTIFIER: self.primary_identifier or self.alternate_identifiers,
            FieldName.CREATOR: self.creators,
            FieldName.TITLE: self.titles,
            FieldName.PUBLISHER: self.publisher_raw,
            FieldName.DATE: self.date_values,
            FieldName.SUBJECT: self.subjects,
            FieldName.CONTRIBUTOR: self.contributors,
            FieldName.RESOURCE_TYPE: self.resource_type_raw,
            FieldName.DESCRIPTION: self.descriptions,
            FieldName.DATA_CENTER: self.data_center_id,
            FieldName.RELATION: self.relations_raw,
            FieldName.FORMAT: self.formats,
            FieldName.LANGUAGE: self.languages_raw,
            FieldName.RIGHTS: self.rights,
        }
        bits = 0
        for name, value in values.items():
            if value:
                bits |= name.bit
        return bits

    def has(self, name: FieldName) -> bool:
        return bool(self.presence & name.bit)

    def to_dict(self) -> dict:
        return {
            "oai_identifier": self.oai_identifier,
            "data_center_id": self.data_center_id,
            "primary_identifier": self.primary_identifier,
            "alternate_identifiers": [list(t) for t in self.alternate_identifiers],
            "creators": list(self.creators),
            "titles": list(self.titles),
            "publisher_raw": self.publisher_raw,
            "date_values": list(self.date_values),
            "subjects": [list(t) for t in self.subjects],
            "contributors": [list(t) for t in self.contributors],
            "resource_type_raw": list(self.resource_type_raw) if self.resource_type_raw else None,
            "descriptions": [list(t) for t in self.descriptions],
            "relations_raw": list(self.relations_raw),
            "formats": list(self.formats),
            "languages_raw": list(self.languages_raw),
            "rights": list(self.rights),
            "extras": [list(t) for t in self.extras],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedRecord":
        rt = d.get("resource_type_raw")
        return cls(
            oai_identifier=d["oai_identifier"],
            data_center_id=d.get("data_center_id", ""),
            primary_identifier=d.get("primary_identifier"),
            alternate_identifiers=[tuple(t) for t in d.get("alternate_identifiers", [])],
            creators=list(d.get("creators", [])),
            titles=list(d.get("titles", [])),
            publisher_raw=d.get("publisher_raw"),
            date_values=list(d.get("date_values", [])),
            subjects=[tuple(t) for t in d.get("subjects", [])],
            contributors=[tuple(t) for t in d.get("contributors", [])],
            resource_type_raw=tuple(rt) if rt else None,
            descriptions=[tuple(t) for t in d.get("descriptions", [])],
            relations_raw=list(d.get("relations_raw", [])),
            formats=list(d.get("formats", [])),
            languages_raw=list(d.get("languages_raw", [])),
            rights=list(d.get("rights", [])),
            extras=[tuple(t) for t in d.get("extras", [])],
        )


@dataclass
class PageContent:
    """Everything one response page carries besides its records."""

    records: list[RawRecord]
    response_date: str | None = None
    request_attrs: dict[str, str] = field(default_factory=dict)
    resumption_token: str | None = None
    complete_list_size: int | None = None
    cursor: int | None = None
    error_code: str | None = None
    error_message: str = ""


def _local(tag) -> str:
    if not isinstance(tag, str):
        return ""
    return tag.rsplit("}", 1)[-1]


def _text(el: ET.Element) -> str:
    return "".join(el.itertext()).strip()


def _byte_offset(data: bytes, position: tuple[int, int]) -> int:
    line, col = position
    offset = 0
    start = 0
    for _ in range(line - 1):
        nl = data.find(b"\n", start)
        if nl < 0:
            break
        start = nl + 1
    offset = start + col
    return min(offset, len(data))


def _to_int(value: str | None) -> int | None:
    if value is None or not value.strip():
        return None
    try:
        return int(value)
    except ValueError:
        return None


def _raw_from_element(rec: ET.Element) -> RawRecord:
    header = None
    metadata = None
    for child in rec:
        name = _local(child.tag)
        if name == "header":
            header = child
        elif name == "metadata":
            metadata = child
    if header is None:
        raise MalformedResponse("record without header")
    ident = ""
    datestamp = ""
    sets = []
    for h in header:
        name = _local(h.tag)
        if name == "identifier":
            ident = (h.text or "").strip()
        elif name == "datestamp":
            datestamp = (h.text or "").strip()
        elif name == "setSpec":
            sets.append((h.text or "").strip())
    deleted = header.get("status") == "deleted"
    payload = None
    element = None
    if not deleted and metadata is not None:
        element = next(iter(metadata), None)
        if element is None:
            payload = b""
    return RawRecord(ident, datestamp, sets, deleted, payload, element)


def iter_page(page_bytes: bytes, info: PageContent | None = None) -> Iterator[RawRecord]:
    """Yield records from a response page one at a time.

    Record elements are detached from the tree as soon as they are emitted,
    keeping memory bounded by the largest single record. Envelope details
    (token, cursor, error) are written into *info* when given.
    """
    stack: list[ET.Element] = []
    try:
        for event, el in ET.iterparse(io.BytesIO(page_bytes), events=("start", "end")):
            if event == "start":
                stack.append(el)
                continue
            stack.pop()
            name = _local(el.tag)
            if name == "record" and stack and _local(stack[-1].tag) in ("ListRecords", "GetRecord"):
                raw = _raw_from_element(el)
                stack[-1].remove(el)
                yield raw
            elif name == "header" and stack and _local(stack[-1].tag) == "ListIdentifiers":
                wrapper = ET.Element("record")
                wrapper.append(el)
                stack[-1].remove(el)
                yield _raw_from_element(wrapper)
            elif info is None:
                continue
            elif name == "responseDate":
                info.response_date = (el.text or "").strip()
            elif name == "request":
                info.request_attrs = dict(el.attrib)
            elif name == "resumptionToken":
                token = (el.text or "").strip()
                info.resumption_token = token or None
                info.complete_list_size = _to_int(el.get("completeListSize"))
                info.cursor = _to_int(el.get("cursor"))
            elif name == "error" and len(stack) == 1:
                info.error_code = el.get("code", "")
                info.error_message = (el.text or "").strip()
    except ET.ParseError as exc:
        raise MalformedResponse(f"response is not well-formed XML: {exc}",
                                _byte_offset(page_bytes, exc.position)) from None
    if info is not None and not page_bytes.strip():
        raise MalformedResponse("empty response body", 0)


def read_page(page_bytes: bytes) -> PageContent:
    info = PageContent(records=[])
    info.records = list(iter_page(page_bytes, info))
    return info


def parse_page(page_bytes: bytes) -> list[RawRecord]:
    """Return the records of a ListRecords/GetRecord page in document order."""
    if not page_bytes.strip():
        raise MalformedResponse("empty response body", 0)
    return list(iter_page(page_bytes))


# ---------------------------------------------------------------- payloads

_DOI_PREFIXES = ("doi:", "https://doi.org/", "http://doi.org/", "http://dx.doi.org/", "https://dx.doi.org/")


def _looks_like_doi(value: str) -> bool:
    v = value.strip().lower()
    for p in _DOI_PREFIXES:
        if v.startswith(p):
            v = v[len(p):]
            break
    return v.startswith("10.") and "/" in v


def _identifier_scheme(value: str) -> str:
    v = value.strip().lower()
    if _looks_like_doi(v):
        return "DOI"
    if v.startswith(("http://", "https://")):
        return "URL"
    if v.startswith("urn:"):
        return "URN"
    return "other"


def _parse_datacite(resource: ET.Element, rec: ParsedRecord) -> None:
    for child in resource:
        name = _local(child.tag)
        kids = list(child)
        if name == "identifier":
            value = _text(child)
            scheme = child.get("identifierType", "")
            if scheme.upper() == "DOI" and rec.primary_identifier is None:
                rec.primary_identifier = value
            elif value:
                rec.alternate_identifiers.append((scheme or _identifier_scheme(value), value))
        elif name == "alternateIdentifiers":
            for k in kids:
                if _text(k):
                    rec.alternate_identifiers.append((k.get("alternateIdentifierType", "other"), _text(k)))
        elif name == "creators":
            for k in kids:
                for part in k:
                    pname = _local(part.tag)
                    if pname == "creatorName" and _text(part):
                        rec.creators.append(_text(part))
                    elif _text(part):
                        rec.extras.append((f"creator/{pname}", _text(part)))
        elif name == "titles":
            rec.titles.extend(_text(k) for k in kids if _text(k))
        elif name == "publisher":
            if _text(child):
                rec.publisher_raw = _text(child)
        elif name == "publicationYear":
            if _text(child):
                rec.date_values.append(_text(child))
        elif name == "dates":
            for k in kids:
                if _text(k):
                    kind = k.get("dateType")
                    rec.date_values.append(f"{kind}:{_text(k)}" if kind else _text(k))
        elif name == "subjects":
            for k in kids:
                if _text(k):
                    rec.subjects.append((_text(k), k.get("subjectScheme")))
        elif name == "contributors":
            for k in kids:
                cname = next((_text(p) for p in k if _local(p.tag) == "contributorName"), "")
                if cname:
                    rec.contributors.append((cname, k.get("contributorType")))
        elif name == "resourceType":
            general = child.get("resourceTypeGeneral", "").strip()
            subtype = _text(child) or None
            if general or subtype:
                rec.resource_type_raw = (general, subtype)
        elif name == "descriptions":
            for k in kids:
                if _text(k):
                    rec.descriptions.append((k.get("descriptionType", ""), _text(k)))
        elif name == "relatedIdentifiers":
            for k in kids:
                if _text(k):
                    rec.relations_raw.append(_text(k))
                    if k.get("relationType"):
                        rec.extras.append(("relatedIdentifier@relationType", k.get("relationType")))
        elif name == "formats":
            rec.formats.extend(_text(k) for k in kids if _text(k))
        elif name == "language":
            if _text(child):
                rec.languages_raw.append(_text(child))
        elif name == "rightsList":
            for k in kids:
                value = _text(k) or k.get("rightsURI", "")
                if value:
                    rec.rights.append(value)
        else:
            value = _text(child)
            if value:
                rec.extras.append((name, value))


def _parse_dc(root: ET.Element, rec: ParsedRecord) -> None:
    types: list[str] = []
    for child in root:
        name = _local(child.tag)
        value = _text(child)
        if not value:
            continue
        if name == "identifier":
            if rec.primary_identifier is None and _looks_like_doi(value):
                rec.primary_identifier = value
            else:
                rec.alternate_identifiers.append((_identifier_scheme(value), value))
        elif name == "creator":
            rec.creators.append(value)
        elif name == "title":
            rec.titles.append(value)
        elif name == "publisher":
            if rec.publisher_raw is None:
                rec.publisher_raw = value
            else:
                rec.extras.append(("publisher", value))
        elif name == "date":
            rec.date_values.append(value)
        elif name == "subject":
            rec.subjects.append((value, None))
        elif name == "contributor":
            rec.contributors.append((value, None))
        elif name == "type":
            types.append(value)
        elif name == "description":
            rec.descriptions.append(("", value))
        elif name == "relation":
            rec.relations_raw.append(value)
        elif name == "format":
            rec.formats.append(value)
        elif name == "language":
            rec.languages_raw.append(value)
        elif name == "rights":
            rec.rights.append(value)
        else:
            rec.extras.append((name, value))
    if types:
        slashed = next((t for t in types if "/" in t), None)
        if slashed is not None:
            general, _, subtype = slashed.partition("/")
            rec.resource_type_raw = (general.strip(), subtype.strip() or None)
            rest = list(types)
            rest.remove(slashed)
        else:
            subtype = types[1] if len(types) > 1 and types[1] != types[0] else None
            rec.resource_type_raw = (types[0], subtype)
            rest = types[2:] if subtype else types[1:]
        rec.extras.extend(("type", t) for t in rest)


def _data_center_from_sets(set_specs: list[str]) -> str:
    dotted = [s for s in set_specs if "." in s]
    if dotted:
        return dotted[0]
    return set_specs[0] if set_specs else ""


def parse_record_metadata(raw: RawRecord) -> ParsedRecord:
    """Capture the DataCite fields of *raw* without normalizing them.

    Raises :class:`MalformedMetadata` when the payload is not well-formed;
    callers in the pipeline log and skip such records.
    """
    if raw.deleted:
        raise ValueError(f"{raw.oai_identifier} is a deleted record")
    rec = ParsedRecord(oai_identifier=raw.oai_identifier)
    root = raw._element
    if root is None and raw.metadata_payload and raw.metadata_payload.strip():
        try:
            root = ET.fromstring(raw.metadata_payload)
        except ET.ParseError as exc:
            raise MalformedMetadata(raw.oai_identifier, str(exc)) from None

    symbol = ""
    if root is not None:
        name = _local(root.tag)
        if name == "oai_datacite":
            for child in root:
                cname = _local(child.tag)
                if cname == "datacentreSymbol":
                    symbol = _text(child)
                elif cname == "payload":
                    resource = next(iter(child), None)
                    if resource is not None:
                        _parse_datacite(resource, rec)
                elif cname != "schemaVersion" and _text(child):
                    rec.extras.append((cname, _text(child)))
        elif name == "resource":
            _parse_datacite(root, rec)
        elif name == "dc":
            _parse_dc(root, rec)
        else:
            raise MalformedMetadata(raw.oai_identifier, f"unsupported metadata root <{name}>")
    rec.data_center_id = symbol or _data_center_from_sets(raw.set_specs)
    return rec


def detect_empty(p: ParsedRecord) -> bool:
    """True when nothing but the data center survives in the record."""
    return p.presence & CONTENT_FIELDS_MASK == 0
