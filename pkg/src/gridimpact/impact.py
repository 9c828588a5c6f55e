"""Before/after comparison: percent change, five-way categorization, histograms.

Percent change is the magnitude of relative change, |after - before| / before
as a percentage. Lines whose baseline is effectively zero (below 1e-6 kW) but
carry new flow are assigned an infinite sentinel and land in the top (red)
category; the system summary keeps the signed convention instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .netmodel import NetworkModel
from .powerflow import PowerFlowSolution

__all__ = [
    "Category",
    "Metric",
    "ImpactRecord",
    "Histogram",
    "SystemSummary",
    "ZERO_BASELINE_KW",
    "DEFAULT_EDGES",
    "pct_change",
    "categorize",
    "build_records",
    "build_histogram",
    "summarize",
    "filter_by_ampacity",
    "records_to_json_dict",
    "histogram_to_csv",
]

ZERO_BASELINE_KW = 1e-6


class Category(Enum):
    """Change bucket with half-open percent bounds and its map color."""

    GRAY = ("Gray", 0.0, 0.05, "#808080")
    GREEN = ("Green", 0.05, 10.0, "#00FF00")
    BLUE = ("Blue", 10.0, 50.0, "#0000FF")
    PINK = ("Pink", 50.0, 80.0, "#FF00FF")
    RED = ("Red", 80.0, math.inf, "#e31a1c")

    def __init__(self, label: str, lower_pct: float, upper_pct: float, color_hex: str):
        self.label = label
        self.lower_pct = lower_pct
        self.upper_pct = upper_pct
        self.color_hex = color_hex


DEFAULT_EDGES = tuple(c.lower_pct for c in Category)


class Metric(Enum):
    FLOW = "flow"
    LOSS = "loss"


@dataclass(frozen=True)
class ImpactRecord:
    line_id: str
    metric: Metric
    before_kw: float
    after_kw: float
    pct_change: float
    category: Category


@dataclass(frozen=True)
class Histogram:
    """Counts over half-open bins; the last bin is open-ended upward and
    values below the first edge are clamped into the first bin."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class SystemSummary:
    demand_before_kw: float
    demand_after_kw: float
    demand_pct: float
    loss_before_kw: float
    loss_after_kw: float
    loss_pct: float


def pct_change(before: float, after: float) -> float:
    """Magnitude of relative change in percent; inf when flow appears on a
    zero baseline; 0 when both sides are effectively zero."""
    if before < 0 or after < 0:
        raise ValueError("pct_change expects magnitudes (>= 0)")
    if before > ZERO_BASELINE_KW:
        return abs(after - before) / before * 100.0
    if after > ZERO_BASELINE_KW:
        return math.inf
    return 0.0


def categorize(pct: float) -> Category:
    if math.isinf(pct):
        return Category.RED
    if pct < 0 or math.isnan(pct):
        raise ValueError(f"percent change must be >= 0, got {pct}")
    for category in Category:
        if category.lower_pct <= pct < category.upper_pct:
            return category
    return Category.RED


def build_records(
    before: PowerFlowSolution,
    after: PowerFlowSolution,
    metric: Metric = Metric.FLOW,
) -> list[ImpactRecord]:
    """One record per line of the baseline solution.

    The after solution may cover extra lines (they are ignored) but must
    contain every baseline line. The flow metric compares sending-end real
    power magnitudes, the loss metric per-line I^2 R.
    """
    missing = set(before.line_ids) - set(after.line_ids)
    if missing:
        raise ValueError(f"line-set mismatch: after solution lacks {sorted(missing)}")

    if metric is Metric.FLOW:
        before_values = np.abs(before.line_flow_kw)
        after_map = dict(zip(after.line_ids, np.abs(after.line_flow_kw)))
    else:
        before_values = before.line_loss_kw
        after_map = dict(zip(after.line_ids, after.line_loss_kw))

    records = []
    for j, line_id in enumerate(before.line_ids):
        b = float(before_values[j])
        a = float(after_map[line_id])
        pct = pct_change(b, a)
        records.append(ImpactRecord(line_id=line_id, metric=metric, before_kw=b,
                                    after_kw=a, pct_change=pct, category=categorize(pct)))
    return records


def build_histogram(
    records: Iterable[ImpactRecord],
    edges: Sequence[float] = DEFAULT_EDGES,
) -> Histogram:
    edges = tuple(float(e) for e in edges)
    if len(edges) < 1 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin edges must be strictly ascending, got {edges}")
    values = [r.pct_change for r in records]
    counts = [0] * len(edges)
    finite_edges = np.asarray(edges)
    for value in values:
        if math.isinf(value):
            counts[-1] += 1
            continue
        position = int(np.searchsorted(finite_edges, value, side="right")) - 1
        counts[max(0, min(position, len(edges) - 1))] += 1
    return Histogram(bin_edges=edges, counts=tuple(counts))


def summarize(
    before_demand_kw: float,
    after_demand_kw: float,
    before_loss_kw: float,
    after_loss_kw: float,
) -> SystemSummary:
    """System-level deltas with signed percent change on positive baselines."""
    if not before_demand_kw > 0 or not before_loss_kw > 0:
        raise ValueError("baseline demand and loss must be > 0")
    return SystemSummary(
        demand_before_kw=before_demand_kw,
        demand_after_kw=after_demand_kw,
        demand_pct=(after_demand_kw - before_demand_kw) / before_demand_kw * 100.0,
        loss_before_kw=before_loss_kw,
        loss_after_kw=after_loss_kw,
        loss_pct=(after_loss_kw - before_loss_kw) / before_loss_kw * 100.0,
    )


def filter_by_ampacity(net: NetworkModel, threshold_a: float) -> list[str]:
    """Ids of lines rated strictly above the threshold, in catalog (id) order."""
    if threshold_a < 0:
        raise ValueError("threshold_a must be >= 0")
    return [line.id for line in net.lines if line.ampacity_a > threshold_a]


def records_to_json_dict(summary: SystemSummary, records: Iterable[ImpactRecord]) -> dict:
    """Impact report document. Infinite percent changes serialize as null
    (JSON has no inf); the category field still carries the classification."""
    return {
        "summary": {
            "demand_before_kw": summary.demand_before_kw,
            "demand_after_kw": summary.demand_after_kw,
            "demand_pct": summary.demand_pct,
            "loss_before_kw": summary.loss_before_kw,
            "loss_after_kw": summary.loss_after_kw,
            "loss_pct": summary.loss_pct,
        },
        "records": [
            {
                "line_id": r.line_id,
                "metric": r.metric.value,
                "before_kw": r.before_kw,
                "after_kw": r.after_kw,
                "pct_change": None if math.isinf(r.pct_change) else r.pct_change,
                "category": r.category.label,
                "color": r.category.color_hex,
            }
            for r in records
        ],
    }


def histogram_to_csv(hist: Histogram) -> str:
    """CSV export: ``bin_lo,bin_hi,count`` with ``inf`` as the last upper edge."""
    rows = ["bin_lo,bin_hi,count"]
    uppers = list(hist.bin_edges[1:]) + [math.inf]
    for lo, hi, count in zip(hist.bin_edges, uppers, hist.counts):
        rows.append(f"{lo!r},{hi!r},{count}")
    return "\n".join(rows) + "\n"
