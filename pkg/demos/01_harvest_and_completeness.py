"""
Harvesting a repository and measuring field completeness
========================================================

An offline walk through the library layer: a replayed OAI-PMH endpoint is
paged through with resumption tokens, every page is archived to disk, and
the archived pages are parsed into a record store. The store then answers
how often each metadata field is present.

Run with ``python demos/01_harvest_and_completeness.py``.
"""

from __future__ import annotations

import random
import tempfile
from pathlib import Path

from metaharvest.cleaning import canonicalize
from metaharvest.oai_client import HarvestRequest, PageArchive, iterate_list_records
from metaharvest.record_store import RecordStore
from metaharvest.reports import completeness_matrix, percent
from metaharvest.schema_parser import detect_empty, iter_page, parse_record_metadata
from metaharvest.testing import ReplayTransport, chain_pages, synthetic_record

BASE_URL = "http://oai.example/oai"
work = Path(tempfile.mkdtemp(prefix="metaharvest-demo-"))

# A fake endpoint serving 2,000 records over 8 pages; roughly one in seven
# records carries no descriptive metadata at all.
rng = random.Random(1)
specs = [synthetic_record(i, rng, empty=rng.random() < 0.15) for i in range(2_000)]
pages = chain_pages([specs[i:i + 250] for i in range(0, len(specs), 250)])
transport = ReplayTransport.for_chain(BASE_URL, pages)

# Harvest. The archive keeps raw pages so parsing can be redone offline.
archive = PageArchive(work / "archive", "demo")
summary = iterate_list_records(HarvestRequest(BASE_URL), transport=transport, archive=archive)
print(f"harvested {summary.records} records in {summary.pages} pages ({summary.terminated_by.value})")
print("requests issued:")
for url in transport.calls[:3]:
    print("   ", url)

# Parse from the archive into the store, canonicalizing as we go.
with RecordStore(work / "store") as store:
    empty = 0
    with store.batch():
        for _, body in archive.iter_page_bytes():
            for raw in iter_page(body):
                if raw.deleted:
                    continue
                parsed = parse_record_metadata(raw)
                empty += detect_empty(parsed)
                store.upsert_record(parsed, raw.datestamp)
                store.set_canonical(parsed.oai_identifier, canonicalize(parsed))

    m = completeness_matrix(store)
    print(f"\n{m.total} records stored, {m.empty} empty ({percent(m.empty_share)}% of all)")
    assert m.empty == empty

    # Each share is reported over two denominators: all records, and only
    # records that carry some descriptive metadata.
    print(f"\n{'field':<18}{'present':>9}{'% all':>9}{'% non-empty':>13}")
    for row in m.rows:
        print(f"{row.field.value:<18}{row.count_present:>9}{percent(row.share_over_all_records):>9}"
              f"{percent(row.share_over_nonempty_records):>13}")

print(f"\nworking files left in {work}")
