"""
Re-deriving published table percentages
=======================================

Published resource-type counts from the April 2016 DataCite snapshot are
pushed through the same report arithmetic the pipeline uses, and compared
with the percentages printed next to them. One row does not match, and the
counts themselves do not add up to the stated total.

Run with ``python demos/02_published_table_arithmetic.py``.
"""

from __future__ import annotations

from metaharvest.reports import compare_with_printed, concentration_stats, percent, resource_type_table_from_counts

TYPED_TOTAL = 4_480_077
counts = {
    "Dataset": 1_867_627, "Text": 786_882, "Image": 641_404, "Collection": 303_638, "Software": 12_340,
    "Audiovisual": 4_470, "Film": 960, "PhysicalObject": 587, "Event": 508, "Model": 470,
    "InteractiveResource": 287, "Sound": 234, "Workflow": 209, "Service": 18, "Other": 871_549,
}
printed = {
    "Dataset": 41.69, "Text": 17.56, "Image": 14.32, "Collection": 6.78, "Software": 0.03,
    "Audiovisual": 0.10, "Film": 0.02, "PhysicalObject": 0.01, "Event": 0.01, "Model": 0.01,
    "InteractiveResource": 0.01, "Sound": 0.01, "Workflow": "<0.01", "Service": "<0.01", "Other": 19.45,
}

table = resource_type_table_from_counts(counts, total=TYPED_TOTAL)
print(f"{'type':<22}{'count':>11}{'computed %':>12}{'printed %':>11}")
for row in table.rows:
    shown = printed[row.resource_type]
    shown = shown if isinstance(shown, str) else f"{shown:.2f}"
    print(f"{row.resource_type:<22}{row.count:>11,}{percent(row.share):>12}{shown:>11}")

print(f"\ncounts sum to {table.counts_sum:,}; stated total is {table.denominator:,}")
for d in compare_with_printed(table.percentages(), printed, tol=0.01):
    print(f"mismatch: {d.key} computed {d.computed:.2f}% vs printed {d.printed}%")

# A Software count of 1,234 would give both the printed share and the
# stated total, so the printed count is most likely a transcription slip.
fixed = dict(counts, Software=1_234)
alt = resource_type_table_from_counts(fixed, total=TYPED_TOTAL)
print(f"with Software = 1,234: sum {alt.counts_sum:,}, share {percent(alt.row('Software').share)}%")

# Concentration: how few types cover 80% of typed records?
c = concentration_stats(counts, 0.8)
print(f"\n{c.k_for_threshold} of {c.keys} types hold {percent(c.top_share)}% of typed records: "
      f"{', '.join(c.top_keys)}")
