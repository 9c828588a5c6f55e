"""Styled GeoJSON export of the network with per-line impact colors.

Each line becomes one LineString feature (straight bus-to-bus segment,
RFC 7946 lon/lat order). Styling properties: ``line_color`` from the impact
category, ``line_width`` from a clamped linear map of current utilization,
``line_opacity``. Lines without an impact record carry the default style
(gray, opacity 0.6). Output is byte-stable: fixed key order, coordinates at
6 decimals, percents at 3.
"""

from __future__ import annotations

import json
import math
from typing import Iterable

from .impact import Category, ImpactRecord
from .netmodel import NetworkModel

__all__ = ["style_width", "export_geojson", "geojson_dumps"]

DEFAULT_COLOR = Category.GRAY.color_hex
DEFAULT_OPACITY = 0.6
DEFAULT_WIDTH = 1.0
STYLED_OPACITY = 1.0


def style_width(flow_kw: float, ampacity_a: float, base_kv: float) -> float:
    """Line width in points from current utilization: 1 + 4u clamped to [1, 5].

    Current is estimated from real power at unity power factor,
    I = kW / (sqrt(3) * kV).
    """
    if not ampacity_a > 0:
        raise ValueError("ampacity_a must be > 0")
    if not base_kv > 0:
        raise ValueError("base_kv must be > 0")
    current_a = abs(flow_kw) / (math.sqrt(3.0) * base_kv)
    utilization = current_a / ampacity_a
    return min(5.0, max(1.0, 1.0 + 4.0 * utilization))


def export_geojson(net: NetworkModel, records: Iterable[ImpactRecord]) -> dict:
    """FeatureCollection with one styled feature per line, in line-id order."""
    by_line: dict[str, ImpactRecord] = {}
    line_ids = {line.id for line in net.lines}
    for record in records:
        if record.line_id not in line_ids:
            raise ValueError(f"record references unknown line: {record.line_id}")
        if record.line_id in by_line:
            raise ValueError(f"duplicate record for line: {record.line_id}")
        by_line[record.line_id] = record

    features = []
    for line in net.lines:
        from_bus = net.bus(line.from_bus)
        to_bus = net.bus(line.to_bus)
        record = by_line.get(line.id)
        if record is None:
            color, width, opacity, pct = DEFAULT_COLOR, DEFAULT_WIDTH, DEFAULT_OPACITY, 0.0
        else:
            color = record.category.color_hex
            width = round(style_width(record.after_kw, line.ampacity_a, from_bus.base_kv), 3)
            opacity = STYLED_OPACITY
            pct = None if math.isinf(record.pct_change) else round(record.pct_change, 3)
        features.append({
            "type": "Feature",
            "id": line.id,
            "geometry": {
                "type": "LineString",
                "coordinates": [
                    [round(from_bus.lon, 6), round(from_bus.lat, 6)],
                    [round(to_bus.lon, 6), round(to_bus.lat, 6)],
                ],
            },
            "properties": {
                "line_id": line.id,
                "line_color": color,
                "line_width": width,
                "line_opacity": opacity,
                "pct_change": pct,
                "ampacity_a": line.ampacity_a,
            },
        })
    return {"type": "FeatureCollection", "features": features}


def geojson_dumps(document: dict) -> str:
    """Stable serialization (insertion key order, no NaN/Infinity literals)."""
    return json.dumps(document, indent=2, allow_nan=False) + "\n"
