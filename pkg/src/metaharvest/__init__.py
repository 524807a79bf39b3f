"""Harvest, clean and analyse DataCite-style metadata exposed over OAI-PMH.

The package is a set of pipeline stages that can be used as a library or
through the ``metaharvest`` command:

    oai_client      paging ListRecords chains, retries, page archive
    schema_parser   streaming page parsing, DataCite/DC field capture
    record_store    SQLite-backed store with indexed scans and counts
    cleaning        dates, resource types, languages, agent names
    entities        publisher alias table, data-center registry
    relations       relation edges and their resolution
    reports         aggregate tables and their CSV/JSON output
"""

from __future__ import annotations

__version__ = "0.1.0"

from .cleaning import (CanonicalRecord, CleaningConfig, DateEvent, DateKind, QualityFlag, ResourceType,
                       canonicalize, classify_data_record, normalize_agent_name, normalize_dates,
                       normalize_language, normalize_resource_type)
from .entities import (AliasTable, DataCenter, DataCenterRegistry, PublisherEntity, PublisherType, Registries,
                       Unresolved, attribute_countries, export_unresolved, parse_data_center_symbol,
                       rank_publishers_by_coverage, resolve_publisher)
from .errors import (ConfigError, EmptyInput, InvalidRange, InvalidRequest, MalformedMetadata, MalformedResponse,
                     MalformedSymbol, MetaharvestError, MissingRegistry, ProtocolError, RegistryError,
                     StageDependencyError, StorageFailure, TransportError)
from .oai_client import (HarvestRequest, HarvestSummary, OaiError, PageArchive, RetryPolicy, build_request_url,
                         fetch_record, iterate_list_records)
from .record_store import RecordStore, ScanFilter, StoredRecord, UpsertResult
from .relations import (ExternalIndex, RelationEdge, RelationStats, Resolution, Scheme, classify_scheme,
                        compute_relation_stats, extract_relation_edges, resolve_edges)
from .reports import (completeness_matrix, concentration_stats, country_table, date_subtype_distribution,
                      publisher_type_table, resource_type_table, resource_type_table_from_counts,
                      year_histogram)
from .schema_parser import FieldName, ParsedRecord, RawRecord, detect_empty, parse_page, parse_record_metadata
