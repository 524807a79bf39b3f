"""Normalization of parsed records into canonical records.

Every normalizer is a pure function. Problems never remove data: they add a
:class:`QualityFlag` and the raw value stays on the canonical record.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from datetime import date
from typing import NamedTuple

from .schema_parser import ParsedRecord, detect_empty


class DateKind(str, enum.Enum):
    ACCEPTED = "Accepted"
    AVAILABLE = "Available"
    COPYRIGHTED = "Copyrighted"
    COLLECTED = "Collected"
    CREATED = "Created"
    ISSUED = "Issued"
    SUBMITTED = "Submitted"
    UPDATED = "Updated"
    VALID = "Valid"


class ResourceType(str, enum.Enum):
    DATASET = "Dataset"
    TEXT = "Text"
    IMAGE = "Image"
    COLLECTION = "Collection"
    SOFTWARE = "Software"
    AUDIOVISUAL = "Audiovisual"
    FILM = "Film"
    PHYSICAL_OBJECT = "PhysicalObject"
    EVENT = "Event"
    MODEL = "Model"
    INTERACTIVE_RESOURCE = "InteractiveResource"
    SOUND = "Sound"
    WORKFLOW = "Workflow"
    SERVICE = "Service"
    OTHER = "Other"


class QualityFlag(str, enum.Enum):
    EMPTY_RECORD = "EmptyRecord"
    YEAR_OUT_OF_RANGE = "YearOutOfRange"
    MULTIPLE_PUBLICATION_YEARS = "MultiplePublicationYears"
    UNKNOWN_RESOURCE_TYPE = "UnknownResourceType"
    DATASET_LIKE_OTHER = "DatasetLikeOther"
    AMBIGUOUS_LANGUAGE = "AmbiguousLanguage"
    UNPARSEABLE_DATE = "UnparseableDate"


DEFAULT_ORGANIZATION_TOKENS = frozenset("""
    university universität universitat université universite universidad universita università
    institute institut instituto istituto college school center centre laboratory laboratories lab
    museum library bibliothek society department dept foundation council agency association
    consortium group project survey service ministry office inc ltd gmbh ag corporation company
    team network archive archives observatory program programme committee academy hospital
    repository data centre facility organization organisation
""".split())


@dataclass(frozen=True)
class CleaningConfig:
    year_window: tuple[int, int] = (1000, 2099)
    # used only by reports, never to drop values
    plausible_window: tuple[int, int] = (1850, date.today().year + 5)
    organization_tokens: frozenset[str] = DEFAULT_ORGANIZATION_TOKENS
    language_overrides: tuple[tuple[str, str], ...] = ()


DEFAULT_CONFIG = CleaningConfig()


@dataclass(frozen=True)
class DateEvent:
    kind: DateKind
    raw: str
    year: int | None = None
    full_date: date | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "raw": self.raw, "year": self.year,
                "full_date": self.full_date.isoformat() if self.full_date else None}

    @classmethod
    def from_dict(cls, d: dict) -> "DateEvent":
        fd = d.get("full_date")
        return cls(DateKind(d["kind"]), d["raw"], d.get("year"), date.fromisoformat(fd) if fd else None)


class DateNormalization(NamedTuple):
    publication_year: int | None
    events: list[DateEvent]
    flags: frozenset[QualityFlag]


_YEAR = re.compile(r"\d{4}", re.ASCII)
_DMY = re.compile(r"(\d{1,2})/(\d{1,2})/(\d{4})", re.ASCII)
_ISO_DAY = re.compile(r"(\d{4})-(\d{2})-(\d{2})", re.ASCII)
_ISO_MONTH = re.compile(r"(\d{4})-(\d{2})", re.ASCII)
_KINDS = {k.value.casefold(): k for k in DateKind}


def _calendar(y: int, m: int, d: int) -> date | None:
    try:
        return date(y, m, d)
    except ValueError:
        return None


def _parse_event_value(value: str) -> tuple[int | None, date | None, bool]:
    """Return (year, full_date, parsed_ok). Day-first for slash dates."""
    if _YEAR.fullmatch(value):
        return int(value), None, True
    m = _DMY.fullmatch(value)
    if m:
        d = _calendar(int(m[3]), int(m[2]), int(m[1]))
        return (d.year, d, True) if d else (None, None, False)
    m = _ISO_DAY.fullmatch(value)
    if m:
        d = _calendar(int(m[1]), int(m[2]), int(m[3]))
        return (d.year, d, True) if d else (None, None, False)
    m = _ISO_MONTH.fullmatch(value)
    if m and 1 <= int(m[2]) <= 12:
        return int(m[1]), None, True
    return None, None, False


def normalize_dates(date_values: list[str], config: CleaningConfig = DEFAULT_CONFIG) -> DateNormalization:
    """Split the merged date field into a publication year and typed events.

    Bare four-digit values are publication-year candidates; ``Kind:value``
    strings with one of the nine date kinds become events. Candidates outside
    the year window are rejected with ``YearOutOfRange``; if several distinct
    years survive, the earliest wins and ``MultiplePublicationYears`` is set.
    """
    lo, hi = config.year_window
    flags: set[QualityFlag] = set()
    candidates: list[int] = []
    events: list[DateEvent] = []
    for raw in date_values:
        v = raw.strip()
        if not v:
            continue
        if _YEAR.fullmatch(v):
            y = int(v)
            if lo <= y <= hi:
                candidates.append(y)
            else:
                flags.add(QualityFlag.YEAR_OUT_OF_RANGE)
            continue
        head, sep, rest = v.partition(":")
        kind = _KINDS.get(head.strip().casefold()) if sep else None
        if kind is None:
            flags.add(QualityFlag.UNPARSEABLE_DATE)
            continue
        year, full, ok = _parse_event_value(rest.strip())
        if not ok:
            flags.add(QualityFlag.UNPARSEABLE_DATE)
        elif not lo <= year <= hi:
            flags.add(QualityFlag.YEAR_OUT_OF_RANGE)
            year, full = None, None
        events.append(DateEvent(kind, raw, year, full))
    if len(set(candidates)) > 1:
        flags.add(QualityFlag.MULTIPLE_PUBLICATION_YEARS)
    return DateNormalization(min(candidates) if candidates else None, events, frozenset(flags))


def _type_key(s: str) -> str:
    return re.sub(r"[\s_\-]+", "", s).casefold()


_TYPE_KEYS = {_type_key(t.value): t for t in ResourceType}


class ResourceTypeNormalization(NamedTuple):
    resource_type: ResourceType | None
    subtype: str | None
    flags: frozenset[QualityFlag]


def normalize_subtype(subtype: str | None) -> str | None:
    if subtype is None:
        return None
    s = " ".join(subtype.split()).casefold()
    return s or None


def normalize_resource_type(raw: tuple[str, str | None] | None) -> ResourceTypeNormalization:
    if raw is None:
        return ResourceTypeNormalization(None, None, frozenset())
    general, subtype = raw
    key = _type_key(general or "")
    rtype = _TYPE_KEYS.get(key)
    if rtype is None and key.endswith("s"):
        rtype = _TYPE_KEYS.get(key[:-1])
    sub = normalize_subtype(subtype)
    flags = set()
    if rtype is None:
        flags.add(QualityFlag.UNKNOWN_RESOURCE_TYPE)
    elif rtype is ResourceType.OTHER and sub == "data sheet":
        flags.add(QualityFlag.DATASET_LIKE_OTHER)
    return ResourceTypeNormalization(rtype, sub, frozenset(flags))


def classify_data_record(rtype: ResourceType | None) -> bool | None:
    """Anything typed and not Text counts as a data record."""
    if rtype is None:
        return None
    return rtype is not ResourceType.TEXT


@functools.lru_cache(maxsize=1)
def _language_tables() -> tuple[dict[str, str], dict[str, str], dict[str, str]]:
    import pycountry

    two: dict[str, str] = {}
    three: dict[str, str] = {}
    names: dict[str, str] = {}
    for lang in pycountry.languages:
        a2 = getattr(lang, "alpha_2", None)
        if not a2:
            continue
        two[a2] = a2
        three[lang.alpha_3] = a2
        if getattr(lang, "bibliographic", None):
            three[lang.bibliographic] = a2
        for attr in ("name", "common_name", "inverted_name"):
            n = getattr(lang, attr, None)
            if n:
                names.setdefault(n.casefold(), a2)
    return two, three, names


_LANG_SPLIT = re.compile(r"[-,;/]")


def normalize_language(raw: str, config: CleaningConfig = DEFAULT_CONFIG) -> tuple[list[str], frozenset[QualityFlag]]:
    two, three, names = _language_tables()
    overrides = {k.casefold(): v for k, v in config.language_overrides}
    codes: list[str] = []
    flags: set[QualityFlag] = set()
    for token in _LANG_SPLIT.split(raw):
        t = token.strip().casefold()
        if not t:
            continue
        code = overrides.get(t)
        if code is None:
            if len(t) == 2:
                code = two.get(t)
            elif len(t) == 3:
                code = three.get(t)
            if code is None:
                code = names.get(t)
        if code is None:
            flags.add(QualityFlag.AMBIGUOUS_LANGUAGE)
        elif code not in codes:
            codes.append(code)
    return codes, frozenset(flags)


_NAME_TOKENS = re.compile(r"[^\W\d_]+|\d+", re.UNICODE)


def looks_like_organization(raw: str, tokens: frozenset[str] = DEFAULT_ORGANIZATION_TOKENS) -> bool:
    parts = _NAME_TOKENS.findall(raw.casefold())
    return any(p.isdigit() or p in tokens for p in parts)


def normalize_agent_name(raw: str, config: CleaningConfig = DEFAULT_CONFIG) -> tuple[str, str | None]:
    """Split a creator/contributor string into (family, given-or-initials).

    Organization-looking names and single tokens are returned unsplit.
    """
    name = " ".join(raw.split())
    if not name:
        raise ValueError("agent name must not be empty")
    if looks_like_organization(name, config.organization_tokens):
        return name, None
    if "," in name:
        family, _, given = name.partition(",")
        family, given = family.strip(), given.strip()
        if family:
            return family, given or None
        return name, None
    parts = name.split(" ")
    if len(parts) > 1:
        return parts[-1], " ".join(parts[:-1])
    return name, None


_DOI_RESOLVERS = ("https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:")


def normalize_doi(value: str | None) -> str | None:
    """Lowercase ``10.x/...`` form, or None when *value* is not a DOI."""
    if not value:
        return None
    v = value.strip()
    low = v.lower()
    for p in _DOI_RESOLVERS:
        if low.startswith(p):
            v = v[len(p):].strip()
            break
    v = v.lower()
    if v.startswith("10.") and "/" in v:
        return v
    return None


@dataclass
class CanonicalRecord:
    oai_identifier: str
    data_center_id: str = ""
    doi: str | None = None
    publication_year: int | None = None
    date_events: list[DateEvent] = field(default_factory=list)
    resource_type: ResourceType | None = None
    resource_subtype: str | None = None
    is_data_record: bool | None = None
    language_codes: list[str] = field(default_factory=list)
    creators_normalized: list[tuple[str, str | None]] = field(default_factory=list)
    flags: frozenset[QualityFlag] = frozenset()
    # raw inputs kept next to their normalized forms
    publisher_raw: str | None = None
    raw_dates: list[str] = field(default_factory=list)
    raw_resource_type: tuple[str, str | None] | None = None
    raw_languages: list[str] = field(default_factory=list)
    raw_creators: list[str] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return QualityFlag.EMPTY_RECORD in self.flags

    def to_dict(self) -> dict:
        return {
            "oai_identifier": self.oai_identifier,
            "data_center_id": self.data_center_id,
            "doi": self.doi,
            "publication_year": self.publication_year,
            "date_events": [e.to_dict() for e in self.date_events],
            "resource_type": self.resource_type.value if self.resource_type else None,
            "resource_subtype": self.resource_subtype,
            "is_data_record": self.is_data_record,
            "language_codes": list(self.language_codes),
            "creators_normalized": [list(c) for c in self.creators_normalized],
            "flags": sorted(f.value for f in self.flags),
            "publisher_raw": self.publisher_raw,
            "raw_dates": list(self.raw_dates),
            "raw_resource_type": list(self.raw_resource_type) if self.raw_resource_type else None,
            "raw_languages": list(self.raw_languages),
            "raw_creators": list(self.raw_creators),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CanonicalRecord":
        rt = d.get("resource_type")
        rrt = d.get("raw_resource_type")
        return cls(
            oai_identifier=d["oai_identifier"],
            data_center_id=d.get("data_center_id", ""),
            doi=d.get("doi"),
            publication_year=d.get("publication_year"),
            date_events=[DateEvent.from_dict(e) for e in d.get("date_events", [])],
            resource_type=ResourceType(rt) if rt else None,
            resource_subtype=d.get("resource_subtype"),
            is_data_record=d.get("is_data_record"),
            language_codes=list(d.get("language_codes", [])),
            creators_normalized=[tuple(c) for c in d.get("creators_normalized", [])],
            flags=frozenset(QualityFlag(f) for f in d.get("flags", [])),
            publisher_raw=d.get("publisher_raw"),
            raw_dates=list(d.get("raw_dates", [])),
            raw_resource_type=tuple(rrt) if rrt else None,
            raw_languages=list(d.get("raw_languages", [])),
            raw_creators=list(d.get("raw_creators", [])),
        )


def canonicalize(p: ParsedRecord, config: CleaningConfig = DEFAULT_CONFIG) -> CanonicalRecord:
    """Run every normalizer over *p*; deterministic and side-effect free."""
    rec = CanonicalRecord(p.oai_identifier, data_center_id=p.data_center_id)
    if detect_empty(p):
        rec.flags = frozenset({QualityFlag.EMPTY_RECORD})
        return rec
    flags: set[QualityFlag] = set()
    rec.doi = normalize_doi(p.primary_identifier)
    if rec.doi is None:
        rec.doi = next((normalize_doi(v) for s, v in p.alternate_identifiers
                        if s.upper() == "DOI" and normalize_doi(v)), None)
    dates = normalize_dates(p.date_values, config)
    rec.publication_year, rec.date_events = dates.publication_year, dates.events
    flags |= dates.flags
    rt = normalize_resource_type(p.resource_type_raw)
    rec.resource_type, rec.resource_subtype = rt.resource_type, rt.subtype
    rec.is_data_record = classify_data_record(rt.resource_type)
    flags |= rt.flags
    for lang in p.languages_raw:
        codes, lflags = normalize_language(lang, config)
        rec.language_codes.extend(c for c in codes if c not in rec.language_codes)
        flags |= lflags
    rec.creators_normalized = [normalize_agent_name(c, config) for c in p.creators if c.strip()]
    rec.flags = frozenset(flags)
    rec.publisher_raw = p.publisher_raw
    rec.raw_dates = list(p.date_values)
    rec.raw_resource_type = p.resource_type_raw
    rec.raw_languages = list(p.languages_raw)
    rec.raw_creators = list(p.creators)
    return rec
