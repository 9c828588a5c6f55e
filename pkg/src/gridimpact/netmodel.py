"""Geo-referenced radial feeder model: domain types, JSON parsing, topology checks.

The native network document is a single JSON object with arrays ``buses``,
``lines``, ``loads`` and an object ``source``. Field names are lower_snake_case
and carry their unit in the name (``resistance_ohm``, ``base_kv`` ...). The
schema is strict: unknown fields are rejected so that unit mistakes surface
at parse time instead of producing silently wrong physics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import SchemaError

__all__ = [
    "Bus",
    "Line",
    "LoadPoint",
    "Source",
    "NetworkModel",
    "TopologyReport",
    "parse_network",
    "load_network",
    "serialize_network",
    "validate_radial",
    "bus_catalog",
]


def _id_key(identifier: str) -> bytes:
    # byte-wise ordering keeps downstream tie-breaking reproducible across locales
    return identifier.encode("utf-8")


@dataclass(frozen=True)
class Bus:
    """A network node with WGS84 coordinates and a line-to-line voltage base."""

    id: str
    lat: float
    lon: float
    base_kv: float

    def __post_init__(self):
        if not self.id:
            raise SchemaError("bus with empty id")
        if not -90.0 <= self.lat <= 90.0:
            raise SchemaError(f"bus {self.id}: lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise SchemaError(f"bus {self.id}: lon {self.lon} outside [-180, 180]")
        if not self.base_kv > 0:
            raise SchemaError(f"bus {self.id}: base_kv must be > 0")


@dataclass(frozen=True)
class Line:
    """A series branch between two buses. Transformers are represented as lines
    with equivalent impedance; there is no separate transformer type."""

    id: str
    from_bus: str
    to_bus: str
    resistance_ohm: float
    reactance_ohm: float
    ampacity_a: float

    def __post_init__(self):
        if not self.id:
            raise SchemaError("line with empty id")
        if self.from_bus == self.to_bus:
            raise SchemaError(f"line {self.id}: from_bus equals to_bus ({self.from_bus})")
        if not self.ampacity_a > 0:
            raise SchemaError(f"line {self.id}: ampacity_a must be > 0")
        if self.resistance_ohm < 0 or self.reactance_ohm < 0:
            raise SchemaError(f"line {self.id}: impedance components must be >= 0")
        if self.resistance_ohm == 0 and self.reactance_ohm == 0:
            raise SchemaError(f"line {self.id}: resistance and reactance are both zero")


@dataclass(frozen=True)
class LoadPoint:
    """Constant-power (PQ) load attached to a bus."""

    id: str
    bus_id: str
    kw: float
    kvar: float

    def __post_init__(self):
        if not self.id:
            raise SchemaError("load with empty id")
        if self.kw < 0:
            raise SchemaError(f"load {self.id}: kw must be >= 0")


@dataclass(frozen=True)
class Source:
    """The single slack point holding a fixed voltage at the feeder head."""

    bus_id: str
    voltage_pu: float

    def __post_init__(self):
        if not 0.8 <= self.voltage_pu <= 1.2:
            raise SchemaError(f"source voltage_pu {self.voltage_pu} outside [0.8, 1.2]")


@dataclass(frozen=True)
class NetworkModel:
    """Immutable container for one feeder. Collections are normalized to
    ascending-id order on construction so every downstream ordering contract
    (catalogs, exports, tie-breaks) is reproducible.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: tuple[LoadPoint, ...]
    source: Source
    _bus_index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: _id_key(b.id))))
        object.__setattr__(self, "lines", tuple(sorted(self.lines, key=lambda l: _id_key(l.id))))
        object.__setattr__(self, "loads", tuple(sorted(self.loads, key=lambda l: _id_key(l.id))))

        bus_index = {}
        for bus in self.buses:
            if bus.id in bus_index:
                raise SchemaError(f"duplicate id: bus {bus.id}")
            bus_index[bus.id] = bus
        object.__setattr__(self, "_bus_index", bus_index)

        seen_lines = set()
        for line in self.lines:
            if line.id in seen_lines:
                raise SchemaError(f"duplicate id: line {line.id}")
            seen_lines.add(line.id)
            for endpoint in (line.from_bus, line.to_bus):
                if endpoint not in bus_index:
                    raise SchemaError(f"dangling bus reference: {endpoint} (line {line.id})")

        seen_loads = set()
        for load in self.loads:
            if load.id in seen_loads:
                raise SchemaError(f"duplicate id: load {load.id}")
            seen_loads.add(load.id)
            if load.bus_id not in bus_index:
                raise SchemaError(f"dangling bus reference: {load.bus_id} (load {load.id})")

        if self.source.bus_id not in bus_index:
            raise SchemaError(f"dangling bus reference: {self.source.bus_id} (source)")

    def bus(self, bus_id: str) -> Bus:
        return self._bus_index[bus_id]

    def total_load_kw(self) -> float:
        """Total constant-power demand of the model, exactly-rounded sum."""
        import math

        return math.fsum(load.kw for load in self.loads)


@dataclass(frozen=True)
class TopologyReport:
    connected: bool
    radial: bool
    orphan_buses: tuple[str, ...]


# --- parsing -----------------------------------------------------------------

_BUS_FIELDS = {"id": str, "lat": (int, float), "lon": (int, float), "base_kv": (int, float)}
_LINE_FIELDS = {
    "id": str,
    "from_bus": str,
    "to_bus": str,
    "resistance_ohm": (int, float),
    "reactance_ohm": (int, float),
    "ampacity_a": (int, float),
}
_LOAD_FIELDS = {"id": str, "bus_id": str, "kw": (int, float), "kvar": (int, float)}
_SOURCE_FIELDS = {"bus_id": str, "voltage_pu": (int, float)}


def _check_fields(obj: dict, schema: dict, what: str) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{what}: expected an object, got {type(obj).__name__}")
    label = obj.get("id", obj.get("bus_id", "?"))
    out = {}
    for name, types in schema.items():
        if name not in obj:
            raise SchemaError(f"{what} {label}: missing field '{name}'")
        value = obj[name]
        if isinstance(value, bool) or not isinstance(value, types):
            raise SchemaError(f"{what} {label}: field '{name}' has wrong type")
        out[name] = value if types is str else float(value)
    for name in obj:
        if name not in schema:
            raise SchemaError(f"{what} {label}: unexpected field '{name}'")
    return out


def parse_network(document: Union[str, bytes, dict]) -> NetworkModel:
    """Parse the native JSON network document and validate all invariants.

    Accepts the JSON text itself or an already-decoded dict.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"network document is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError("network document must be a JSON object")

    for key in ("buses", "lines", "loads", "source"):
        if key not in document:
            raise SchemaError(f"network document: missing top-level key '{key}'")
    for key in document:
        if key not in ("buses", "lines", "loads", "source"):
            raise SchemaError(f"network document: unexpected top-level key '{key}'")

    buses = tuple(Bus(**_check_fields(b, _BUS_FIELDS, "bus")) for b in document["buses"])
    lines = tuple(Line(**_check_fields(l, _LINE_FIELDS, "line")) for l in document["lines"])
    loads = tuple(LoadPoint(**_check_fields(l, _LOAD_FIELDS, "load")) for l in document["loads"])
    source = Source(**_check_fields(document["source"], _SOURCE_FIELDS, "source"))
    return NetworkModel(buses=buses, lines=lines, loads=loads, source=source)


def load_network(path) -> NetworkModel:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_network(handle.read())


def serialize_network(net: NetworkModel) -> str:
    """Emit the native JSON document: fixed key order, coordinates at 6 decimals.

    ``parse_network(serialize_network(net)) == net`` holds field-for-field for
    any model whose coordinates are already quantized to 6 decimals.
    """
    doc = {
        "buses": [
            {"id": b.id, "lat": round(b.lat, 6), "lon": round(b.lon, 6), "base_kv": b.base_kv}
            for b in net.buses
        ],
        "lines": [
            {
                "id": l.id,
                "from_bus": l.from_bus,
                "to_bus": l.to_bus,
                "resistance_ohm": l.resistance_ohm,
                "reactance_ohm": l.reactance_ohm,
                "ampacity_a": l.ampacity_a,
            }
            for l in net.lines
        ],
        "loads": [
            {"id": l.id, "bus_id": l.bus_id, "kw": l.kw, "kvar": l.kvar} for l in net.loads
        ],
        "source": {"bus_id": net.source.bus_id, "voltage_pu": net.source.voltage_pu},
    }
    return json.dumps(doc, indent=2)


# --- topology ----------------------------------------------------------------


def validate_radial(net: NetworkModel) -> TopologyReport:
    """Diagnostic check: is every bus reachable from the source, and is the
    edge count that of a tree. Never raises."""
    adjacency: dict[str, list[str]] = {bus.id: [] for bus in net.buses}
    for line in net.lines:
        adjacency[line.from_bus].append(line.to_bus)
        adjacency[line.to_bus].append(line.from_bus)

    seen = {net.source.bus_id}
    frontier = [net.source.bus_id]
    while frontier:
        nxt = []
        for node in frontier:
            for neighbor in adjacency[node]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    nxt.append(neighbor)
        frontier = nxt

    orphans = tuple(sorted((b.id for b in net.buses if b.id not in seen), key=_id_key))
    connected = not orphans
    radial = connected and len(net.lines) == len(net.buses) - 1
    return TopologyReport(connected=connected, radial=radial, orphan_buses=orphans)


def bus_catalog(
    net: Union[NetworkModel, Iterable[Bus]],
    *,
    only: Iterable[str] | None = None,
    load_buses_only: bool = False,
) -> list[tuple[str, float, float]]:
    """Ordered (bus id, lat, lon) catalog, ascending id byte-wise.

    ``only`` restricts the catalog to an explicit id subset (for runs that
    target a tagged group of buses, e.g. transformer secondaries);
    ``load_buses_only`` restricts to buses that carry at least one LoadPoint.
    """
    if isinstance(net, NetworkModel):
        buses = net.buses
        if load_buses_only:
            load_bus_ids = {load.bus_id for load in net.loads}
            buses = tuple(b for b in buses if b.id in load_bus_ids)
    else:
        if load_buses_only:
            raise ValueError("load_buses_only requires a NetworkModel")
        buses = tuple(net)
    if only is not None:
        wanted = set(only)
        buses = tuple(b for b in buses if b.id in wanted)
    return [(b.id, b.lat, b.lon) for b in sorted(buses, key=lambda b: _id_key(b.id))]
