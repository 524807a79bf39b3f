"""OAI-PMH 2.0 harvesting client.

Requests are plain HTTP GETs with the protocol's query parameters. The
client follows resumption tokens until the chain ends, retries transient
failures (honouring ``503 Retry-After``), and can persist every raw page to a
:class:`PageArchive` before the next page is fetched, so an interrupted
harvest resumes from the last stored token.

The HTTP layer is a callable ``transport(url, timeout=...) -> HttpResponse``;
:class:`RequestsTransport` is the default and tests substitute a replay
transport (see :mod:`metaharvest.testing`).
"""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, Protocol
from urllib.parse import quote, urlencode

from .errors import InvalidRequest, MalformedResponse, ProtocolError, TransportError
from .schema_parser import RawRecord, read_page

logger = logging.getLogger(__name__)

VERBS = ("Identify", "ListRecords", "ListIdentifiers", "GetRecord", "ListMetadataFormats", "ListSets")
OAI_ERROR_CODES = frozenset({
    "badArgument", "badResumptionToken", "badVerb", "cannotDisseminateFormat",
    "idDoesNotExist", "noMetadataFormats", "noRecordsMatch", "noSetHierarchy",
})
DEFAULT_METADATA_PREFIX = "oai_datacite"
FALLBACK_METADATA_PREFIX = "oai_dc"
DEFAULT_TIMEOUT = (30.0, 300.0)  # connect, read

# parameters each verb may carry besides resumptionToken
_ALLOWED = {
    "Identify": set(),
    "ListMetadataFormats": {"identifier"},
    "ListSets": set(),
    "GetRecord": {"identifier", "metadataPrefix"},
    "ListRecords": {"metadataPrefix", "set", "from", "until"},
    "ListIdentifiers": {"metadataPrefix", "set", "from", "until"},
}
_RESUMABLE = {"ListRecords", "ListIdentifiers", "ListSets"}


@dataclass(frozen=True)
class OaiError:
    code: str
    message: str = ""

    def __post_init__(self):
        if self.code not in OAI_ERROR_CODES:
            raise ValueError(f"not an OAI-PMH error code: {self.code!r}")


def _format_datestamp(value: date | datetime | str) -> str:
    if isinstance(value, datetime):
        if value.tzinfo is not None:
            value = value.astimezone(timezone.utc)
        return value.strftime("%Y-%m-%dT%H:%M:%SZ")
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def _datestamp_key(value: date | datetime | str) -> str:
    s = _format_datestamp(value)
    return s if "T" in s else s + "T00:00:00Z"


@dataclass(frozen=True)
class HarvestRequest:
    """One OAI-PMH request.

    ``metadata_prefix`` left as ``None`` means "use the default" on verbs that
    need one; it is never emitted alongside a resumption token.
    """

    base_url: str
    verb: str = "ListRecords"
    metadata_prefix: str | None = None
    set_spec: str | None = None
    from_: date | datetime | str | None = None
    until: date | datetime | str | None = None
    resumption_token: str | None = None
    identifier: str | None = None

    def validate(self) -> None:
        if self.verb not in VERBS:
            raise InvalidRequest(f"unknown verb {self.verb!r}")
        if self.resumption_token is not None:
            if self.verb not in _RESUMABLE:
                raise InvalidRequest(f"{self.verb} does not take a resumptionToken")
            clash = [n for n, v in (("metadataPrefix", self.metadata_prefix), ("set", self.set_spec),
                                    ("from", self.from_), ("until", self.until),
                                    ("identifier", self.identifier)) if v is not None]
            if clash:
                raise InvalidRequest("resumptionToken is exclusive; also got " + ", ".join(clash))
        if self.from_ is not None and self.until is not None:
            if _datestamp_key(self.from_) > _datestamp_key(self.until):
                raise InvalidRequest("from must not be later than until")
        allowed = _ALLOWED[self.verb]
        if self.set_spec is not None and "set" not in allowed:
            raise InvalidRequest(f"{self.verb} does not take set")
        if (self.from_ is not None or self.until is not None) and "from" not in allowed:
            raise InvalidRequest(f"{self.verb} does not take from/until")
        if self.metadata_prefix is not None and "metadataPrefix" not in allowed:
            raise InvalidRequest(f"{self.verb} does not take metadataPrefix")
        if self.verb == "GetRecord" and not self.identifier:
            raise InvalidRequest("GetRecord needs an identifier")
        if self.identifier is not None and "identifier" not in allowed:
            raise InvalidRequest(f"{self.verb} does not take identifier")

    def params(self) -> dict[str, str]:
        self.validate()
        if self.resumption_token is not None:
            return {"resumptionToken": self.resumption_token}
        p: dict[str, str] = {}
        if "metadataPrefix" in _ALLOWED[self.verb]:
            p["metadataPrefix"] = self.metadata_prefix or DEFAULT_METADATA_PREFIX
        if self.set_spec is not None:
            p["set"] = self.set_spec
        if self.from_ is not None:
            p["from"] = _format_datestamp(self.from_)
        if self.until is not None:
            p["until"] = _format_datestamp(self.until)
        if self.identifier is not None:
            p["identifier"] = self.identifier
        return p

    def continued(self, token: str) -> "HarvestRequest":
        return replace(self, metadata_prefix=None, set_spec=None, from_=None, until=None,
                       identifier=None, resumption_token=token)


def build_request_url(req: HarvestRequest) -> str:
    """Verb first, remaining parameters in alphabetical order."""
    params = req.params()
    query = [("verb", req.verb)] + sorted(params.items())
    sep = "&" if "?" in req.base_url else "?"
    return req.base_url + sep + urlencode(query, quote_via=quote, safe="")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff: float = 1.0
    honor_retry_after: bool = True
    max_backoff: float = 600.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.base_backoff <= 0:
            raise ValueError("base_backoff must be positive")

    def backoff(self, attempt: int) -> float:
        return min(self.base_backoff * 2 ** (attempt - 1), self.max_backoff)


@dataclass
class HttpResponse:
    status: int
    body: bytes
    headers: dict[str, str] = field(default_factory=dict)

    def header(self, name: str) -> str | None:
        for k, v in self.headers.items():
            if k.lower() == name.lower():
                return v
        return None


class Transport(Protocol):
    def __call__(self, url: str, *, timeout: tuple[float, float]) -> HttpResponse: ...


class RequestsTransport:
    """HTTP transport backed by a :class:`requests.Session`."""

    def __init__(self, session=None, user_agent: str = "metaharvest/0.1"):
        import requests

        self._requests = requests
        self.session = session or requests.Session()
        self.session.headers.setdefault("User-Agent", user_agent)

    def __call__(self, url: str, *, timeout: tuple[float, float] = DEFAULT_TIMEOUT) -> HttpResponse:
        try:
            resp = self.session.get(url, timeout=timeout)
        except self._requests.RequestException as exc:
            raise TransportError(f"GET {url} failed: {exc}") from exc
        return HttpResponse(resp.status_code, resp.content, dict(resp.headers))


def parse_oai_error(response_body: bytes) -> OaiError | None:
    """Return the in-band protocol error of a response, if it carries one."""
    if not response_body or not response_body.strip():
        raise MalformedResponse("empty response body", 0)
    try:
        root = ET.fromstring(response_body)
    except ET.ParseError as exc:
        from .schema_parser import _byte_offset

        raise MalformedResponse(f"response is not well-formed XML: {exc}",
                                _byte_offset(response_body, exc.position)) from None
    if root.tag.rsplit("}", 1)[-1] != "OAI-PMH":
        raise MalformedResponse(f"unexpected root element <{root.tag}>")
    for child in root:
        if child.tag.rsplit("}", 1)[-1] == "error":
            code = child.get("code", "")
            if code not in OAI_ERROR_CODES:
                raise MalformedResponse(f"unknown OAI-PMH error code {code!r}")
            return OaiError(code, (child.text or "").strip())
    return None


def _retry_after_seconds(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        seconds = float(value.strip())
    except ValueError:
        return None
    return max(seconds, 0.0)


def _get(url: str, policy: RetryPolicy, transport: Transport, sleep: Callable[[float], None],
         timeout: tuple[float, float]) -> HttpResponse:
    last = "no attempt made"
    for attempt in range(1, policy.max_attempts + 1):
        try:
            resp = transport(url, timeout=timeout)
        except (TransportError, OSError) as exc:
            last = str(exc)
            resp = None
        if resp is not None:
            if resp.status == 200:
                return resp
            last = f"HTTP {resp.status}"
            if resp.status not in (429, 500, 502, 503, 504):
                err = None
                try:
                    err = parse_oai_error(resp.body)
                except MalformedResponse:
                    pass
                if err is not None:
                    raise ProtocolError(err)
                raise TransportError(f"GET {url}: HTTP {resp.status}")
        if attempt == policy.max_attempts:
            break
        delay = None
        if resp is not None and resp.status == 503 and policy.honor_retry_after:
            delay = _retry_after_seconds(resp.header("Retry-After"))
        if delay is None:
            delay = policy.backoff(attempt)
        logger.info("retrying %s in %.1fs after %s (attempt %d/%d)", url, delay, last, attempt,
                    policy.max_attempts)
        sleep(delay)
    raise TransportError(f"GET {url} failed after {policy.max_attempts} attempts: {last}")


@dataclass
class OaiPage:
    response_date: str | None
    request_echo: HarvestRequest
    records: list[RawRecord]
    resumption_token: str | None = None
    complete_list_size: int | None = None
    cursor: int | None = None
    seq: int = 0
    raw: bytes = field(default=b"", repr=False)


class Termination(str, enum.Enum):
    END_OF_LIST = "end_of_list"
    ERROR = "error"
    CANCELLED = "cancelled"


@dataclass
class HarvestSummary:
    pages: int = 0
    records: int = 0
    terminated_by: Termination = Termination.END_OF_LIST
    last_token: str | None = None


class PageArchive:
    """Directory of raw pages for one harvest chain.

    Layout::

        <root>/<harvest_id>/page-000001.xml
        <root>/<harvest_id>/manifest.json

    The manifest records, per page, the token used to request it and the
    token it returned, which is all a restart needs.
    """

    MANIFEST = "manifest.json"

    def __init__(self, root: str | os.PathLike, harvest_id: str):
        self.harvest_id = harvest_id
        self.path = Path(root) / harvest_id
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest = self._load()

    def _load(self) -> dict:
        mpath = self.path / self.MANIFEST
        if mpath.exists():
            return json.loads(mpath.read_text(encoding="utf-8"))
        return {"harvest_id": self.harvest_id, "request": None, "complete": False, "pages": []}

    def _save(self) -> None:
        tmp = self.path / (self.MANIFEST + ".tmp")
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.path / self.MANIFEST)

    @property
    def complete(self) -> bool:
        return bool(self.manifest["complete"])

    @property
    def pages(self) -> list[dict]:
        return self.manifest["pages"]

    @property
    def last_token(self) -> str | None:
        return self.pages[-1]["resumption_token"] if self.pages else None

    def page_file(self, seq: int) -> Path:
        return self.path / f"page-{seq:06d}.xml"

    def start(self, req: HarvestRequest) -> None:
        if self.manifest["request"] is None:
            self.manifest["request"] = {
                "base_url": req.base_url, "verb": req.verb,
                "metadata_prefix": req.metadata_prefix or DEFAULT_METADATA_PREFIX,
                "set": req.set_spec,
                "from": _format_datestamp(req.from_) if req.from_ is not None else None,
                "until": _format_datestamp(req.until) if req.until is not None else None,
            }
            self._save()

    def record_page(self, page: OaiPage) -> None:
        fpath = self.page_file(page.seq)
        tmp = fpath.with_suffix(".xml.tmp")
        tmp.write_bytes(page.raw)
        os.replace(tmp, fpath)
        self.pages.append({
            "seq": page.seq,
            "file": fpath.name,
            "request_token": page.request_echo.resumption_token,
            "resumption_token": page.resumption_token,
            "response_date": page.response_date,
            "cursor": page.cursor,
            "complete_list_size": page.complete_list_size,
            "records": len(page.records),
        })
        if page.resumption_token is None:
            self.manifest["complete"] = True
        self._save()

    def mark_complete(self) -> None:
        self.manifest["complete"] = True
        self._save()

    def iter_page_bytes(self) -> Iterator[tuple[int, bytes]]:
        for entry in self.pages:
            yield entry["seq"], (self.path / entry["file"]).read_bytes()


def iterate_list_records(
    req: HarvestRequest,
    policy: RetryPolicy | None = None,
    sink: Callable[[OaiPage], None] | None = None,
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    archive: PageArchive | None = None,
    cancel: threading.Event | None = None,
    timeout: tuple[float, float] = DEFAULT_TIMEOUT,
) -> HarvestSummary:
    """Walk a ListRecords/ListIdentifiers chain, handing each page to *sink*.

    With an *archive*, each page is written to disk before the next request
    goes out, and a chain the archive already holds partially is continued
    from its last token instead of starting over. ``noRecordsMatch`` on the
    first page is an empty, successful harvest.
    """
    if req.verb not in ("ListRecords", "ListIdentifiers"):
        raise InvalidRequest(f"cannot page through {req.verb}")
    policy = policy or RetryPolicy()
    transport = transport or RequestsTransport()
    summary = HarvestSummary()
    seq = 1
    current = req
    if archive is not None:
        if archive.complete:
            logger.info("harvest %s already complete", archive.harvest_id)
            return summary
        archive.start(req)
        if archive.pages:
            seq = archive.pages[-1]["seq"] + 1
            current = req.continued(archive.last_token)
            logger.info("resuming harvest %s at page %d", archive.harvest_id, seq)
    prev_cursor = archive.pages[-1]["cursor"] if archive is not None and archive.pages else None

    while True:
        url = build_request_url(current)
        try:
            resp = _get(url, policy, transport, sleep, timeout)
            content = read_page(resp.body)
        except ProtocolError as exc:
            summary.terminated_by = Termination.ERROR
            exc.summary = summary
            raise
        except (TransportError, MalformedResponse) as exc:
            summary.terminated_by = Termination.ERROR
            exc.summary = summary
            raise
        if content.error_code:
            if content.error_code == "noRecordsMatch" and current.resumption_token is None:
                if archive is not None:
                    archive.mark_complete()
                return summary
            summary.terminated_by = Termination.ERROR
            try:
                err = OaiError(content.error_code, content.error_message)
            except ValueError:
                raise MalformedResponse(f"unknown OAI-PMH error code {content.error_code!r}") from None
            raise ProtocolError(err, summary)

        page = OaiPage(content.response_date, current, content.records, content.resumption_token,
                       content.complete_list_size, content.cursor, seq, resp.body)
        if page.cursor is not None and prev_cursor is not None and page.cursor < prev_cursor:
            logger.warning("cursor went backwards (%d -> %d) at page %d", prev_cursor, page.cursor, seq)
        prev_cursor = page.cursor if page.cursor is not None else prev_cursor
        if archive is not None:
            archive.record_page(page)
        if sink is not None:
            sink(page)
        summary.pages += 1
        summary.records += len(page.records)
        summary.last_token = page.resumption_token
        if page.resumption_token is None:
            summary.terminated_by = Termination.END_OF_LIST
            return summary
        if cancel is not None and cancel.is_set():
            summary.terminated_by = Termination.CANCELLED
            return summary
        current = current.continued(page.resumption_token)
        seq += 1


def _single(req: HarvestRequest, policy, transport, sleep, timeout):
    resp = _get(build_request_url(req), policy or RetryPolicy(), transport or RequestsTransport(),
                sleep, timeout)
    content = read_page(resp.body)
    if content.error_code:
        raise ProtocolError(OaiError(content.error_code, content.error_message))
    return resp, content


def fetch_record(base_url: str, oai_identifier: str, metadata_prefix: str = DEFAULT_METADATA_PREFIX, *,
                 transport: Transport | None = None, policy: RetryPolicy | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 timeout: tuple[float, float] = DEFAULT_TIMEOUT) -> RawRecord:
    if not oai_identifier:
        raise InvalidRequest("oai_identifier must not be empty")
    req = HarvestRequest(base_url, "GetRecord", metadata_prefix=metadata_prefix, identifier=oai_identifier)
    _, content = _single(req, policy, transport, sleep, timeout)
    if len(content.records) != 1:
        raise MalformedResponse(f"GetRecord returned {len(content.records)} records")
    return content.records[0]


def list_metadata_formats(base_url: str, *, transport: Transport | None = None,
                          policy: RetryPolicy | None = None,
                          sleep: Callable[[float], None] = time.sleep,
                          timeout: tuple[float, float] = DEFAULT_TIMEOUT) -> list[str]:
    req = HarvestRequest(base_url, "ListMetadataFormats")
    resp, _ = _single(req, policy, transport, sleep, timeout)
    root = ET.fromstring(resp.body)
    return [(el.text or "").strip() for el in root.iter() if el.tag.rsplit("}", 1)[-1] == "metadataPrefix"]


def negotiate_metadata_prefix(base_url: str, preferred: tuple[str, ...] = (DEFAULT_METADATA_PREFIX,
                                                                          FALLBACK_METADATA_PREFIX),
                              **kwargs) -> str:
    """Pick the first of *preferred* the repository disseminates."""
    available = list_metadata_formats(base_url, **kwargs)
    for prefix in preferred:
        if prefix in available:
            return prefix
    raise ProtocolError(OaiError("cannotDisseminateFormat",
                                 f"none of {', '.join(preferred)} offered (have {', '.join(available)})"))
