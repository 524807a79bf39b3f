"""Command-line pipeline: harvest -> parse -> clean -> resolve / link -> report.

Each subcommand is one stage. Stages record a marker in the store's meta
table so later stages can check their prerequisites, and every stage can be
rerun without changing anything when its inputs are unchanged.

Exit status: 0 success, 1 partial (some records skipped, see the log),
2 fatal. Logs are newline-delimited JSON on stderr or ``--log``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .cleaning import canonicalize
from .config import PipelineConfig, load_config, parse_year_range
from .entities import AliasTable, DataCenterRegistry, Registries, export_unresolved, rank_publishers_by_coverage
from .errors import (ConfigError, MalformedMetadata, MalformedResponse, MetaharvestError, ProtocolError,
                     StageDependencyError, TransportError)
from .oai_client import HarvestRequest, PageArchive, RetryPolicy, iterate_list_records
from .record_store import NON_EMPTY, RecordStore, UpsertResult
from .relations import (ExternalIndex, compute_relation_stats, extract_relation_edges, resolve_edges,
                        stored_edges, write_edges_csv)
from .reports import build_reports, render_json, write_report
from .schema_parser import iter_page, parse_record_metadata

log = logging.getLogger("metaharvest")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2
STAGES = ("harvest", "parse", "clean", "resolve", "link", "report", "export-unresolved")


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {
            "ts": datetime.fromtimestamp(record.created, timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
            "level": record.levelname.lower(),
            "event": record.getMessage(),
        }
        doc.update(getattr(record, "fields", {}))
        return json.dumps(doc, sort_keys=True, ensure_ascii=False, default=str)


def event(name: str, level: int = logging.INFO, **fields) -> None:
    log.log(level, name, extra={"fields": fields})


def _setup_logging(path: str | None, verbose: bool) -> logging.Handler:
    handler = logging.FileHandler(path, encoding="utf-8") if path else logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False
    return handler


# ------------------------------------------------------------------ helpers

def _mark_stage(store: RecordStore, stage: str, **info) -> None:
    store.set_meta(f"stage:{stage}", info)


def _require(store: RecordStore, stage: str, needed: str) -> dict:
    marker = store.get_meta(f"stage:{needed}")
    if marker is None:
        raise StageDependencyError(f"{stage} needs the {needed} stage to have run first")
    return marker


def _require_clean(store: RecordStore, stage: str) -> dict:
    marker = _require(store, stage, "clean")
    pending = store.uncleaned_count()
    if pending:
        raise StageDependencyError(f"{stage} needs a cleaned store; {pending} records are not cleaned")
    return marker


def _registries(cfg: PipelineConfig) -> Registries:
    return Registries(
        data_centers=DataCenterRegistry.from_csv(cfg.data_centers) if cfg.data_centers else None,
        publishers=AliasTable.from_csv(cfg.publishers) if cfg.publishers else None,
    )


def _generated_at(store: RecordStore) -> str | None:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return store.data_as_of()


def _harvest_ids(cfg: PipelineConfig, chosen: str | None) -> list[str]:
    if chosen:
        return [chosen]
    root = cfg.pages_dir
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if (p / PageArchive.MANIFEST).is_file())


def _default_harvest_id(set_spec: str | None) -> str:
    if not set_spec:
        return "all"
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in set_spec)


# ------------------------------------------------------------------- stages

def cmd_harvest(args, cfg: PipelineConfig, transport=None, sleep=time.sleep) -> int:
    if not cfg.base_url:
        raise ConfigError("harvest needs --base-url or base_url in the config")
    req = HarvestRequest(cfg.base_url, metadata_prefix=cfg.metadata_prefix, set_spec=args.set,
                         from_=args.from_, until=args.until)
    req.validate()
    harvest_id = args.harvest_id or _default_harvest_id(args.set)
    archive = PageArchive(cfg.pages_dir, harvest_id)
    policy = RetryPolicy(max_attempts=args.max_attempts)

    def sink(page):
        event("page_fetched", harvest_id=harvest_id, seq=page.seq, records=len(page.records),
              resumption_token=page.resumption_token, cursor=page.cursor,
              complete_list_size=page.complete_list_size)

    event("harvest_start", harvest_id=harvest_id, base_url=cfg.base_url, set=args.set,
          resumed_pages=len(archive.pages), complete=archive.complete)
    try:
        summary = iterate_list_records(req, policy, sink, transport=transport, sleep=sleep, archive=archive)
    except (ProtocolError, TransportError, MalformedResponse) as exc:
        summary = getattr(exc, "summary", None)
        event("harvest_failed", logging.ERROR, harvest_id=harvest_id, error=type(exc).__name__,
              code=getattr(exc, "code", None), message=str(exc),
              pages=getattr(summary, "pages", 0), pages_archived=len(archive.pages))
        return EXIT_FATAL
    event("harvest_done", harvest_id=harvest_id, pages=summary.pages, records=summary.records,
          terminated_by=summary.terminated_by.value, pages_archived=len(archive.pages),
          complete=archive.complete)
    return EXIT_OK


def cmd_parse(args, cfg: PipelineConfig, **_) -> int:
    ids = _harvest_ids(cfg, args.harvest_id)
    if not ids:
        raise StageDependencyError(f"parse needs harvested pages under {cfg.pages_dir}")
    seen = skipped = tombstones = 0
    outcomes = {r.value: 0 for r in UpsertResult}
    with RecordStore(cfg.store_path) as store:
        for harvest_id in ids:
            archive = PageArchive(cfg.pages_dir, harvest_id)
            for seq, body in archive.iter_page_bytes():
                with store.batch():
                    for raw in iter_page(body):
                        seen += 1
                        if raw.deleted:
                            tombstones += 1
                            event("record_tombstone", logging.DEBUG, oai_id=raw.oai_identifier,
                                  harvest_id=harvest_id, page=seq)
                            continue
                        try:
                            parsed = parse_record_metadata(raw)
                        except MalformedMetadata as exc:
                            skipped += 1
                            event("record_skipped", logging.WARNING, stage="parse", oai_id=raw.oai_identifier,
                                  reason=f"malformed metadata: {exc}", harvest_id=harvest_id, page=seq)
                            continue
                        outcomes[store.upsert_record(parsed, raw.datestamp).value] += 1
        processed = seen - skipped
        _mark_stage(store, "parse", harvests=ids)
        event("parse_done", input=seen, processed=processed, skipped=skipped, tombstones=tombstones,
              **{k.lower(): v for k, v in outcomes.items()}, stored=len(store))
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_clean(args, cfg: PipelineConfig, **_) -> int:
    with RecordStore(cfg.store_path) as store:
        _require(store, "clean", "parse")
        seen = modified = skipped = 0
        with store.batch():
            for rec in store.scan():
                seen += 1
                try:
                    canonical = canonicalize(rec.parsed, cfg.cleaning)
                except ValueError as exc:
                    skipped += 1
                    event("record_skipped", logging.WARNING, stage="clean", oai_id=rec.oai_identifier,
                          reason=str(exc))
                    continue
                if store.set_canonical(rec.oai_identifier, canonical):
                    modified += 1
        generation = store.get_meta("clean_generation", 0) + (1 if modified else 0)
        store.set_meta("clean_generation", generation)
        _mark_stage(store, "clean", generation=generation)
        event("clean_done", input=seen, processed=seen - skipped, skipped=skipped, modified=modified,
              generation=generation)
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_resolve(args, cfg: PipelineConfig, **_) -> int:
    regs = _registries(cfg)
    if regs.publishers is None and regs.data_centers is None:
        raise ConfigError("resolve needs a publisher alias table and/or a data-center registry")
    with RecordStore(cfg.store_path) as store:
        _require_clean(store, "resolve")
        seen = modified = resolved = 0
        with store.batch():
            for oai_id, center, publisher in list(store.iter_columns(["data_center", "publisher_raw"])):
                seen += 1
                entity = regs.publishers.lookup(publisher) if regs.publishers and publisher else None
                countries: dict[str, list[str]] = {}
                if regs.data_centers is not None:
                    countries["data_center"] = list(regs.data_centers.countries_for(center))
                if regs.publishers is not None:
                    countries["publisher"] = list(entity.countries) if entity else ["Unknown"]
                resolved += entity is not None
                if store.set_resolution(oai_id, entity.entity_id if entity else None, countries):
                    modified += 1
        _mark_stage(store, "resolve")
        event("resolve_done", input=seen, processed=seen, skipped=0, modified=modified,
              publishers_resolved=resolved)
    return EXIT_OK


def cmd_link(args, cfg: PipelineConfig, **_) -> int:
    index = ExternalIndex.from_file(cfg.external_index) if cfg.external_index else ExternalIndex()
    with RecordStore(cfg.store_path) as store:
        marker = _require_clean(store, "link")
        edges = [e for rec in store.scan(NON_EMPTY) for e in extract_relation_edges(rec)]
        edges = resolve_edges(edges, store, index)
        store.replace_edges(edges)
        _mark_stage(store, "link", generation=marker.get("generation", 0), external_index=len(index))
        stats = compute_relation_stats(store, edges)
        if args.out:
            out = Path(args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            if args.format == "json":
                rows = [{"source_doi": e.source_doi, "target_raw": e.target_raw, "scheme": e.scheme.value,
                         "resolution": e.resolution.value,
                         "target_type": e.target_resource_type.value if e.target_resource_type else None}
                        for e in edges]
                out.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            else:
                write_edges_csv(edges, out)
        event("link_done", edges=len(edges), **stats.resolution_counts,
              records_with_relations=stats.records_with_relations)
    return EXIT_OK


def cmd_report(args, cfg: PipelineConfig, **_) -> int:
    out_dir = Path(args.out) if args.out else cfg.report_dir
    with RecordStore(cfg.store_path) as store:
        marker = _require_clean(store, "report")
        regs = _registries(cfg)
        stats = None
        link = store.get_meta("stage:link")
        if link is not None and link.get("generation") == marker.get("generation"):
            stats = compute_relation_stats(store, stored_edges(store))
        elif link is not None:
            event("relations_stale", logging.WARNING, message="store was re-cleaned after link; rerun link")
        reports = build_reports(store, regs, year_range=cfg.year_range,
                                plausible_window=cfg.cleaning.plausible_window,
                                top_k=args.top_k, threshold=args.threshold, relation_stats=stats)
        generated_at = _generated_at(store)
        written = []
        for report in reports:
            if args.format == "json":
                out_dir.mkdir(parents=True, exist_ok=True)
                path = out_dir / f"{report.name}.json"
                path.write_text(render_json(report, generated_at), encoding="utf-8")
                written.append(path)
            else:
                written.extend(write_report(report, out_dir, generated_at))
        _mark_stage(store, "report", reports=[r.name for r in reports])
        event("report_done", reports=len(reports), files=[str(p) for p in written])
    return EXIT_OK


def cmd_export_unresolved(args, cfg: PipelineConfig, **_) -> int:
    if cfg.publishers is None:
        raise ConfigError("export-unresolved needs a publisher alias table")
    table = AliasTable.from_csv(cfg.publishers)
    with RecordStore(cfg.store_path) as store:
        _require(store, "export-unresolved", "parse")
        counts = {k: v for k, v in store.count_by("publisher_raw", NON_EMPTY).items()
                  if k != "missing" and k.strip()}
    rows = export_unresolved(counts, table, args.limit)
    cut = None
    if counts:
        _, cut = rank_publishers_by_coverage(counts, args.threshold)
    out = Path(args.out) if args.out else cfg.report_dir / f"unresolved_publishers.{args.format}"
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        doc = {"coverage_target": args.threshold, "publishers_for_target": cut,
               "rows": [{"raw_name": n, "record_count": c} for n, c in rows]}
        out.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            # blank curation columns ready to be filled in and appended to the alias table
            w.writerow(["raw_name", "record_count", "entity_id", "canonical_name", "entity_type", "countries"])
            for name, c in rows:
                w.writerow([name, c, "", "", "", ""])
    event("export_unresolved_done", unresolved=len(rows), publishers_for_target=cut, out=str(out))
    return EXIT_OK


COMMANDS = {
    "harvest": cmd_harvest,
    "parse": cmd_parse,
    "clean": cmd_clean,
    "resolve": cmd_resolve,
    "link": cmd_link,
    "report": cmd_report,
    "export-unresolved": cmd_export_unresolved,
}


# ------------------------------------------------------------------ parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (default: $METAHARVEST_CONFIG)")
    common.add_argument("--store", help="record store directory")
    common.add_argument("--pages", help="directory of archived harvest pages")
    common.add_argument("--publishers", help="publisher alias table CSV")
    common.add_argument("--data-centers", help="data-center registry CSV")
    common.add_argument("--external-index", help="file of known DOIs, one per line")
    common.add_argument("--log", help="write NDJSON log here instead of stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="metaharvest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("harvest", parents=[common], help="page through ListRecords into the archive")
    p.add_argument("--base-url")
    p.add_argument("--metadata-prefix")
    p.add_argument("--set")
    p.add_argument("--from", dest="from_")
    p.add_argument("--until")
    p.add_argument("--harvest-id", help="archive subdirectory (default: derived from --set)")
    p.add_argument("--max-attempts", type=int, default=5)

    p = sub.add_parser("parse", parents=[common], help="parse archived pages into the store")
    p.add_argument("--harvest-id", help="only this harvest (default: all)")

    sub.add_parser("clean", parents=[common], help="normalize stored records")
    sub.add_parser("resolve", parents=[common], help="attach publisher entities and countries")

    p = sub.add_parser("link", parents=[common], help="extract and resolve relation edges")
    p.add_argument("--out", help="also write the edge list here")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("report", parents=[common], help="write aggregate reports")
    p.add_argument("--out", help="report directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="csv writes .csv, .json and .plot.csv; json writes only the JSON envelopes")
    p.add_argument("--threshold", type=float, default=0.8, help="concentration threshold")
    p.add_argument("--top-k", type=int, default=3, help="subtypes listed per resource type")
    p.add_argument("--year-range", help="e.g. 1950-2020")

    p = sub.add_parser("export-unresolved", parents=[common], help="list publishers missing from the alias table")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--limit", type=int, help="keep only the N most frequent")
    p.add_argument("--threshold", type=float, default=0.8, help="coverage target for the curation cut")
    return parser


def resolve_config(args) -> PipelineConfig:
    """Config file first, then flags on top."""
    cfg = load_config(args.config)
    for flag, attr in (("store", "store_path"), ("pages", "archive_dir"), ("publishers", "publishers"),
                       ("data_centers", "data_centers"), ("external_index", "external_index")):
        value = getattr(args, flag, None)
        if value:
            setattr(cfg, attr, Path(value))
    if getattr(args, "base_url", None):
        cfg.base_url = args.base_url
    if getattr(args, "metadata_prefix", None):
        cfg.metadata_prefix = args.metadata_prefix
    if getattr(args, "year_range", None):
        cfg.year_range = parse_year_range(args.year_range)
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None, *, transport=None, sleep=time.sleep) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _setup_logging(args.log, args.verbose)
    started = time.monotonic()
    try:
        cfg = resolve_config(args)
        event("run_start", command=args.command, version=__version__,
              config=str(cfg.source) if cfg.source else None, store=str(cfg.store_path))
        code = COMMANDS[args.command](args, cfg, transport=transport, sleep=sleep)
    except MetaharvestError as exc:
        event("fatal", logging.ERROR, command=args.command, error=type(exc).__name__, message=str(exc))
        code = EXIT_FATAL
    except (OSError, ValueError) as exc:
        event("fatal", logging.ERROR, command=args.command, error=type(exc).__name__, message=str(exc))
        code = EXIT_FATAL
    event("run_end", command=args.command, exit=code, seconds=round(time.monotonic() - started, 3))
    log.removeHandler(handler)
    handler.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
