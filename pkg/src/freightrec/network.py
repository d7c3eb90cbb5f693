"""Transport network model: terminals, carrier arcs, quality levels, itineraries.

Money is kept in EUR with cent precision and durations in hours with one
decimal place, both as :class:`decimal.Decimal`, so itinerary totals are exact
sums rather than float approximations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DisconnectedPath, RepeatedTerminal, UnknownOrdinal, UnknownTerminal

MONEY_QUANTUM = Decimal("0.01")
HOURS_QUANTUM = Decimal("0.1")

NETWORK_CSV_COLUMNS = (
    "arc_id",
    "origin",
    "destination",
    "carrier_id",
    "cost_eur",
    "duration_h",
    "safety",
    "dependability",
)


class OrdinalLevel(IntEnum):
    """Five-point quality scale used for safety and dependability."""

    VERY_LOW = 1
    LOW = 2
    AVERAGE = 3
    HIGH = 4
    VERY_HIGH = 5

    @property
    def label(self) -> str:
        return _LEVEL_LABELS[self]


_LEVEL_LABELS = {
    OrdinalLevel.VERY_LOW: "very low",
    OrdinalLevel.LOW: "low",
    OrdinalLevel.AVERAGE: "average",
    OrdinalLevel.HIGH: "high",
    OrdinalLevel.VERY_HIGH: "very high",
}

_LABEL_TO_LEVEL = {label: level for level, label in _LEVEL_LABELS.items()}
# display alias: some interfaces show "Medium" for the middle level
_LABEL_TO_LEVEL["medium"] = OrdinalLevel.AVERAGE


def parse_ordinal(label: str) -> OrdinalLevel:
    """Map a quality label ("very low" .. "very high", alias "medium") to its level."""
    key = " ".join(str(label).strip().lower().split())
    try:
        return _LABEL_TO_LEVEL[key]
    except KeyError:
        raise UnknownOrdinal(f"unknown quality label: {label!r}") from None


def parse_money(value: str | int | float | Decimal) -> Decimal:
    """Parse a non-negative EUR amount with at most cent precision."""
    return _parse_fixed(value, MONEY_QUANTUM, "money amount")


def parse_hours(value: str | int | float | Decimal) -> Decimal:
    """Parse a duration in hours with at most one decimal place."""
    return _parse_fixed(value, HOURS_QUANTUM, "duration")


def _parse_fixed(value, quantum: Decimal, what: str) -> Decimal:
    try:
        dec = Decimal(str(value))
    except InvalidOperation:
        raise ValueError(f"invalid {what}: {value!r}") from None
    quantized = dec.quantize(quantum)
    if quantized != dec:
        raise ValueError(f"{what} {value!r} exceeds fixed-point precision ({quantum})")
    return quantized


@dataclass(frozen=True)
class Terminal:
    """A loading/delivery point, identified by an uppercase token."""

    id: str
    display_name: str = ""

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise ValueError("terminal id must be non-empty")
        object.__setattr__(self, "id", self.id.strip().upper())
        if not self.display_name:
            object.__setattr__(self, "display_name", self.id)


@dataclass(frozen=True)
class CarrierArc:
    """One carrier's offering on a directed origin-destination leg.

    ``arc_id`` is the identity; the same (origin, destination, carrier) may
    appear several times with different prices or durations.
    """

    arc_id: str
    origin: str
    destination: str
    carrier_id: str
    cost: Decimal
    duration: Decimal
    safety: OrdinalLevel
    dependability: OrdinalLevel

    def __post_init__(self):
        for name in ("arc_id", "origin", "destination", "carrier_id"):
            if not getattr(self, name) or not str(getattr(self, name)).strip():
                raise ValueError(f"arc field {name} must be non-empty")
        object.__setattr__(self, "origin", self.origin.strip().upper())
        object.__setattr__(self, "destination", self.destination.strip().upper())
        if self.origin == self.destination:
            raise ValueError(f"arc {self.arc_id}: origin equals destination")
        object.__setattr__(self, "cost", parse_money(self.cost))
        object.__setattr__(self, "duration", parse_hours(self.duration))
        if self.cost < 0:
            raise ValueError(f"arc {self.arc_id}: cost must be non-negative")
        if self.duration <= 0:
            raise ValueError(f"arc {self.arc_id}: duration must be positive")


@dataclass(frozen=True)
class TransportNetwork:
    """Immutable snapshot of the carrier network.

    All searches reference one snapshot; mutations produce a new snapshot with
    a higher ``snapshot_id``.
    """

    terminals: Mapping[str, Terminal]
    arcs: Mapping[str, CarrierArc]
    snapshot_id: int = 1
    _outgoing: Mapping[str, tuple[CarrierArc, ...]] = field(
        init=False, repr=False, compare=False, default=None
    )

    def __post_init__(self):
        for arc in self.arcs.values():
            for endpoint in (arc.origin, arc.destination):
                if endpoint not in self.terminals:
                    raise ValueError(
                        f"arc {arc.arc_id} references unknown terminal {endpoint}"
                    )
        outgoing: dict[str, list[CarrierArc]] = {tid: [] for tid in self.terminals}
        for arc in self.arcs.values():
            outgoing[arc.origin].append(arc)
        object.__setattr__(
            self,
            "_outgoing",
            {
                tid: tuple(sorted(arcs, key=lambda a: a.arc_id))
                for tid, arcs in outgoing.items()
            },
        )

    def outgoing(self, terminal_id: str) -> tuple[CarrierArc, ...]:
        """Arcs leaving a terminal, in arc_id order (deterministic expansion)."""
        try:
            return self._outgoing[terminal_id]
        except KeyError:
            raise UnknownTerminal(f"unknown terminal: {terminal_id}") from None

    def require_terminal(self, terminal_id: str) -> None:
        if terminal_id not in self.terminals:
            raise UnknownTerminal(f"unknown terminal: {terminal_id}")

    def arcs_on_leg(self, origin: str, destination: str) -> tuple[CarrierArc, ...]:
        return tuple(
            arc for arc in self.outgoing(origin) if arc.destination == destination
        )


def build_network(
    arcs: Iterable[CarrierArc],
    terminals: Iterable[Terminal] | None = None,
    snapshot_id: int = 1,
) -> TransportNetwork:
    """Assemble a snapshot; terminals default to the arc endpoints."""
    arc_map: dict[str, CarrierArc] = {}
    for arc in arcs:
        if arc.arc_id in arc_map:
            raise ValueError(f"duplicate arc_id: {arc.arc_id}")
        arc_map[arc.arc_id] = arc
    term_map: dict[str, Terminal] = {}
    for term in terminals or ():
        if term.id in term_map:
            raise ValueError(f"duplicate terminal id: {term.id}")
        term_map[term.id] = term
    for arc in arc_map.values():
        for endpoint in (arc.origin, arc.destination):
            term_map.setdefault(endpoint, Terminal(endpoint))
    return TransportNetwork(terminals=term_map, arcs=arc_map, snapshot_id=snapshot_id)


def load_network_csv(path: str | Path, snapshot_id: int = 1) -> TransportNetwork:
    """Load a snapshot from the ingestion CSV (one arc per row, exact header)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return read_network_csv(fh, snapshot_id=snapshot_id)


def read_network_csv(lines: Iterable[str], snapshot_id: int = 1) -> TransportNetwork:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("network CSV is empty (header required)") from None
    if tuple(h.strip() for h in header) != NETWORK_CSV_COLUMNS:
        raise ValueError(
            "network CSV header must be exactly: " + ",".join(NETWORK_CSV_COLUMNS)
        )
    arcs = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(NETWORK_CSV_COLUMNS):
            raise ValueError(f"network CSV row {row_no}: expected 8 columns")
        arc_id, origin, destination, carrier_id, cost, duration, safety, dep = (
            cell.strip() for cell in row
        )
        arcs.append(
            CarrierArc(
                arc_id=arc_id,
                origin=origin,
                destination=destination,
                carrier_id=carrier_id,
                cost=parse_money(cost),
                duration=parse_hours(duration),
                safety=parse_ordinal(safety),
                dependability=parse_ordinal(dep),
            )
        )
    return build_network(arcs, snapshot_id=snapshot_id)


@dataclass(frozen=True)
class Itinerary:
    """A connected, cycle-free sequence of legs with aggregate attributes.

    Totals are exact decimal sums; safety and dependability are the weakest
    leg level (an itinerary is only as safe as its least safe leg).
    """

    legs: tuple[CarrierArc, ...]
    total_cost: Decimal
    total_duration: Decimal
    safety: OrdinalLevel
    dependability: OrdinalLevel

    @property
    def n_legs(self) -> int:
        return len(self.legs)

    @property
    def arc_ids(self) -> tuple[str, ...]:
        return tuple(leg.arc_id for leg in self.legs)

    @property
    def origin(self) -> str:
        return self.legs[0].origin

    @property
    def destination(self) -> str:
        return self.legs[-1].destination


def aggregate_itinerary(legs: Sequence[CarrierArc]) -> Itinerary:
    """Validate a leg sequence and compute its aggregate attributes."""
    if not legs:
        raise ValueError("itinerary needs at least one leg")
    for prev, nxt in zip(legs, legs[1:]):
        if prev.destination != nxt.origin:
            raise DisconnectedPath(
                f"leg {nxt.arc_id} departs {nxt.origin}, expected {prev.destination}"
            )
    visited = [legs[0].origin] + [leg.destination for leg in legs]
    if len(set(visited)) != len(visited):
        raise RepeatedTerminal(f"path visits a terminal twice: {'->'.join(visited)}")
    total_cost = sum((leg.cost for leg in legs), Decimal("0.00"))
    total_duration = sum((leg.duration for leg in legs), Decimal("0.0"))
    return Itinerary(
        legs=tuple(legs),
        total_cost=total_cost,
        total_duration=total_duration,
        safety=OrdinalLevel(min(leg.safety for leg in legs)),
        dependability=OrdinalLevel(min(leg.dependability for leg in legs)),
    )
