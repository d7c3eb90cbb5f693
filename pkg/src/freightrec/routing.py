"""Route search: weight normalization, coefficient sweep, plan filter, ranking.

The two arc criteria (cost in EUR, duration in hours) are made commensurable
by dividing each by the network-wide maximum, then blended into a single arc
weight with a (cost_coef, duration_coef) pair. Sweeping the pair over the 11
steps 0.0, 0.1, ..., 1.0 and running a shortest-path search at each step
surfaces the optimal route plus sub-optimal alternatives worth offering.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from heapq import heappop, heappush
from typing import Iterable, Mapping, Sequence

from .errors import (
    EmptyNetwork,
    MissingScores,
    NoSolution,
    UnknownArc,
)
from .network import (
    CarrierArc,
    Itinerary,
    OrdinalLevel,
    TransportNetwork,
    aggregate_itinerary,
)

COEF_SUM_TOLERANCE = 1e-12


class TransportPlan(str, Enum):
    """Named preference profile chosen with the request."""

    EXPRESS = "express"
    ECONOMIC = "economic"
    SAFE = "safe"
    DEPENDABLE = "dependable"
    USER_DEFINED = "user_defined"

    @classmethod
    def parse(cls, text: str) -> "TransportPlan":
        key = str(text).strip().lower().replace("-", "_").replace(" ", "_")
        for plan in cls:
            if plan.value == key:
                return plan
        raise ValueError(f"unknown transportation plan: {text!r}")


@dataclass(frozen=True)
class WeightCoefficients:
    """One (cost_coef, duration_coef) point of the sweep; the pair sums to 1."""

    cost_coef: float
    duration_coef: float

    def __post_init__(self):
        for name, value in (("cost_coef", self.cost_coef), ("duration_coef", self.duration_coef)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if abs(self.cost_coef + self.duration_coef - 1.0) > COEF_SUM_TOLERANCE:
            raise ValueError("cost_coef + duration_coef must equal 1")


# 11 exact steps; (k/10) + ((10-k)/10) is exactly 1.0 in binary floating point
SWEEP_STEPS: tuple[WeightCoefficients, ...] = tuple(
    WeightCoefficients(cost_coef=k / 10, duration_coef=(10 - k) / 10) for k in range(11)
)


@dataclass(frozen=True)
class NormalizedWeights:
    """Per-arc (w_cost, w_duration) in [0, 1], from division by the snapshot maxima."""

    weights: Mapping[str, tuple[float, float]]
    max_cost: Decimal
    max_duration: Decimal
    snapshot_id: int


def normalize(network: TransportNetwork) -> NormalizedWeights:
    """Divide each arc's cost and duration by the snapshot-wide maxima.

    Maxima are taken over all arcs of the snapshot so that arc weights are
    path-independent. If every cost is zero the cost weight degenerates to 0
    for all arcs and the sweep effectively ranks by duration alone.
    """
    if not network.arcs:
        raise EmptyNetwork("cannot normalize a network with no arcs")
    max_cost = max(arc.cost for arc in network.arcs.values())
    max_duration = max(arc.duration for arc in network.arcs.values())
    max_cost_f = float(max_cost)
    max_duration_f = float(max_duration)
    weights = {}
    for arc_id, arc in network.arcs.items():
        w_cost = float(arc.cost) / max_cost_f if max_cost_f > 0 else 0.0
        w_duration = float(arc.duration) / max_duration_f
        weights[arc_id] = (w_cost, w_duration)
    return NormalizedWeights(
        weights=weights,
        max_cost=max_cost,
        max_duration=max_duration,
        snapshot_id=network.snapshot_id,
    )


def combined_weight(arc_id: str, nw: NormalizedWeights, k: WeightCoefficients) -> float:
    """Blend the two normalized criteria into one arc weight in [0, 1]."""
    try:
        w_cost, w_duration = nw.weights[arc_id]
    except KeyError:
        raise UnknownArc(f"arc {arc_id} not in weight table") from None
    return k.cost_coef * w_cost + k.duration_coef * w_duration


@dataclass(frozen=True)
class UserConstraints:
    """Criteria thresholds for the user-defined plan."""

    max_cost: Decimal | None = None
    max_duration: Decimal | None = None
    min_safety: OrdinalLevel | None = None
    min_dependability: OrdinalLevel | None = None


@dataclass(frozen=True)
class TransportRequest:
    """A customer's transportation request.

    ``quantity`` is recorded with the request but plays no part in routing.
    ``coefficients`` are the (a, b, c) preference weights for time, safety and
    dependability used later by the scoring engine.
    """

    origin: str
    destination: str
    plan: TransportPlan
    quantity: Decimal = Decimal("0")
    max_cost: Decimal | None = None
    max_duration: Decimal | None = None
    user_constraints: UserConstraints | None = None
    coefficients: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "origin", self.origin.strip().upper())
        object.__setattr__(self, "destination", self.destination.strip().upper())
        if self.origin == self.destination:
            raise ValueError("origin and destination must differ")
        if self.quantity < 0:
            raise ValueError("quantity must be non-negative")
        for limit in (self.max_cost, self.max_duration):
            if limit is not None and limit <= 0:
                raise ValueError("cost/duration limits must be positive")
        if self.user_constraints is not None and self.plan is not TransportPlan.USER_DEFINED:
            raise ValueError("user_constraints are only valid for the user-defined plan")
        a, b, c = self.coefficients
        for name, value in (("a", a), ("b", b), ("c", c)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"preference coefficient {name} must be in [0, 1]")
        if a + b + c <= 0:
            raise ValueError("at least one preference coefficient must be positive")


@dataclass(frozen=True)
class SolutionSet:
    """Distinct itineraries surfaced by the sweep, with the coefficient pairs
    that produced each one."""

    request_id: str
    itineraries: tuple[Itinerary, ...]
    generated_by: tuple[tuple[WeightCoefficients, ...], ...]

    def __post_init__(self):
        if len(self.itineraries) != len(self.generated_by):
            raise ValueError("generated_by must align with itineraries")
        seqs = [it.arc_ids for it in self.itineraries]
        if len(set(seqs)) != len(seqs):
            raise ValueError("itineraries must be pairwise distinct by arc sequence")


def compute_request_id(request: TransportRequest, snapshot_id: int) -> str:
    """Content-addressed request id: identical requests against the same
    snapshot share an id, so retries do not duplicate proposals."""
    payload = {
        "origin": request.origin,
        "destination": request.destination,
        "plan": request.plan.value,
        "quantity": str(request.quantity),
        "max_cost": str(request.max_cost) if request.max_cost is not None else None,
        "max_duration": str(request.max_duration) if request.max_duration is not None else None,
        "user_constraints": None
        if request.user_constraints is None
        else {
            "max_cost": str(request.user_constraints.max_cost)
            if request.user_constraints.max_cost is not None
            else None,
            "max_duration": str(request.user_constraints.max_duration)
            if request.user_constraints.max_duration is not None
            else None,
            "min_safety": int(request.user_constraints.min_safety)
            if request.user_constraints.min_safety is not None
            else None,
            "min_dependability": int(request.user_constraints.min_dependability)
            if request.user_constraints.min_dependability is not None
            else None,
        },
        "coefficients": list(request.coefficients),
        "snapshot_id": snapshot_id,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    return f"req-{digest[:12]}"


def shortest_path(
    network: TransportNetwork,
    nw: NormalizedWeights,
    k: WeightCoefficients,
    origin: str,
    destination: str,
) -> Itinerary | None:
    """Dijkstra over the combined arc weights.

    Returns the minimum-weight simple path as an itinerary, or None when the
    destination is unreachable. Ties are broken deterministically: fewer legs
    first, then the lexicographically smallest arc_id sequence. The composite
    (weight, legs, arc_ids) key grows strictly along every arc, so the first
    pop of the destination is optimal and never contains a cycle.
    """
    network.require_terminal(origin)
    network.require_terminal(destination)
    if origin == destination:
        raise ValueError("origin and destination must differ")

    heap: list[tuple[float, int, tuple[str, ...], str]] = [(0.0, 0, (), origin)]
    settled: set[str] = set()
    while heap:
        weight, n_legs, arc_ids, node = heappop(heap)
        if node == destination:
            return aggregate_itinerary([network.arcs[a] for a in arc_ids])
        if node in settled:
            continue
        settled.add(node)
        for arc in network.outgoing(node):
            if arc.destination in settled:
                continue
            heappush(
                heap,
                (
                    weight + combined_weight(arc.arc_id, nw, k),
                    n_legs + 1,
                    arc_ids + (arc.arc_id,),
                    arc.destination,
                ),
            )
    return None


def active_limits(request: TransportRequest) -> tuple[Decimal | None, Decimal | None]:
    """Effective (max_cost, max_duration): the request limits, tightened by the
    user-defined criteria when that plan is selected."""
    max_cost = request.max_cost
    max_duration = request.max_duration
    if request.plan is TransportPlan.USER_DEFINED and request.user_constraints:
        uc = request.user_constraints
        if uc.max_cost is not None and (max_cost is None or uc.max_cost < max_cost):
            max_cost = uc.max_cost
        if uc.max_duration is not None and (max_duration is None or uc.max_duration < max_duration):
            max_duration = uc.max_duration
    return max_cost, max_duration


def violated_constraints(itinerary: Itinerary, request: TransportRequest) -> list[str]:
    """Names of the active constraints this itinerary fails (empty = keep)."""
    violations = []
    max_cost, max_duration = active_limits(request)
    if max_cost is not None and itinerary.total_cost > max_cost:
        violations.append("max_cost")
    if max_duration is not None and itinerary.total_duration > max_duration:
        violations.append("max_duration")
    if request.plan is TransportPlan.SAFE:
        if itinerary.safety < OrdinalLevel.HIGH:
            violations.append("min_safety")
        if itinerary.dependability < OrdinalLevel.LOW:
            violations.append("min_dependability")
    elif request.plan is TransportPlan.DEPENDABLE:
        if itinerary.dependability < OrdinalLevel.HIGH:
            violations.append("min_dependability")
        if itinerary.safety < OrdinalLevel.LOW:
            violations.append("min_safety")
    elif request.plan is TransportPlan.USER_DEFINED and request.user_constraints:
        uc = request.user_constraints
        if uc.min_safety is not None and itinerary.safety < uc.min_safety:
            violations.append("min_safety")
        if uc.min_dependability is not None and itinerary.dependability < uc.min_dependability:
            violations.append("min_dependability")
    return violations


def filter_by_plan(
    candidates: Sequence[Itinerary], request: TransportRequest
) -> list[Itinerary]:
    """Discard candidates that break the request limits or the plan's criteria.

    Safe demands safety above average and at least low dependability;
    Dependable is the mirror image. Express and Economic impose no level
    constraints (their cost/duration "minimum" is a ranking objective, not a
    filter). The user-defined plan applies the thresholds the user set.
    """
    return [it for it in candidates if not violated_constraints(it, request)]


def default_sort_key(plan: TransportPlan) -> str:
    return "duration" if plan is TransportPlan.EXPRESS else "cost"


def rank_solutions(
    solutions: Sequence[Itinerary],
    key: str,
    scores: Mapping[tuple[str, ...], object] | None = None,
) -> list[Itinerary]:
    """Order itineraries by a column key.

    cost/duration sort ascending; safety/dependability/final_score descending.
    Ties break by total cost, then by arc_id sequence, so rankings are stable
    and reproducible. Sorting by final_score requires the scores computed by
    the scoring engine, keyed by arc_id sequence.
    """
    if key == "cost":
        sort_key = lambda it: (it.total_cost, it.arc_ids)
    elif key == "duration":
        sort_key = lambda it: (it.total_duration, it.total_cost, it.arc_ids)
    elif key == "safety":
        sort_key = lambda it: (-int(it.safety), it.total_cost, it.arc_ids)
    elif key == "dependability":
        sort_key = lambda it: (-int(it.dependability), it.total_cost, it.arc_ids)
    elif key == "final_score":
        if scores is None:
            raise MissingScores("final_score ranking requires computed scores")
        missing = [it.arc_ids for it in solutions if it.arc_ids not in scores]
        if missing:
            raise MissingScores(f"no score for itineraries: {missing}")
        sort_key = lambda it: (-scores[it.arc_ids].ranking_key, it.total_cost, it.arc_ids)
    else:
        raise ValueError(f"unknown ranking key: {key!r}")
    return sorted(solutions, key=sort_key)


def sweep_solutions(
    network: TransportNetwork,
    request: TransportRequest,
    request_id: str | None = None,
) -> SolutionSet:
    """Run the 11-step coefficient sweep and return the surviving solutions.

    Each step runs a shortest-path search with (cost_coef, duration_coef) =
    (step, 1 - step); distinct itineraries are collected together with every
    coefficient pair that produced them, then filtered by plan and ranked by
    the plan's default key. Raises NoSolution with a diagnostic when nothing
    survives - the caller reports why instead of silently returning nothing.
    """
    if request_id is None:
        request_id = compute_request_id(request, network.snapshot_id)
    nw = normalize(network)

    found: dict[tuple[str, ...], Itinerary] = {}
    produced_by: dict[tuple[str, ...], list[WeightCoefficients]] = {}
    for step in SWEEP_STEPS:
        itinerary = shortest_path(network, nw, step, request.origin, request.destination)
        if itinerary is None:
            continue
        seq = itinerary.arc_ids
        if seq not in found:
            found[seq] = itinerary
            produced_by[seq] = []
        produced_by[seq].append(step)

    if not found:
        raise NoSolution(
            reason="unreachable",
            message=(
                f"no path from {request.origin} to {request.destination} "
                f"in snapshot {network.snapshot_id}"
            ),
            details={"origin": request.origin, "destination": request.destination},
        )

    survivors = filter_by_plan(list(found.values()), request)
    if not survivors:
        tally: dict[str, int] = {}
        for itinerary in found.values():
            for name in violated_constraints(itinerary, request):
                tally[name] = tally.get(name, 0) + 1
        detail = ", ".join(f"{name} removed {count}" for name, count in sorted(tally.items()))
        raise NoSolution(
            reason="all_filtered",
            message=(
                f"all {len(found)} candidate itineraries were eliminated by the "
                f"request constraints ({detail})"
            ),
            details={"candidates": len(found), "eliminated_by": tally},
        )

    ranked = rank_solutions(survivors, default_sort_key(request.plan))
    return SolutionSet(
        request_id=request_id,
        itineraries=tuple(ranked),
        generated_by=tuple(tuple(produced_by[it.arc_ids]) for it in ranked),
    )
