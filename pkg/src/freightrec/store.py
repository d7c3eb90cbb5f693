"""Persistent ratings store.

One line-delimited JSON file per logical table (transactions,
transaction_subroutes, transactions_rating, carriers_rating,
users_reliability, temp_transactions, temp_transactions_subroutes), all
append-only and replayed into memory at startup. Aggregates are computed by
scanning the raw rows, never from running totals, so every number the engine
reports can be reproduced from the files alone.

Mutations are serialized through a single writer lock; reads see a consistent
in-memory snapshot.
"""

from __future__ import annotations

import csv
import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    DuplicateRating,
    IllegalTransition,
    NotCompleted,
    ScoreOutOfRange,
    UnknownTransaction,
)
from .network import (
    CarrierArc,
    Itinerary,
    TransportNetwork,
    aggregate_itinerary,
    parse_ordinal,
)

TABLE_TRANSACTIONS = "transactions"
TABLE_TRANSACTION_SUBROUTES = "transaction_subroutes"
TABLE_TRANSACTIONS_RATING = "transactions_rating"
TABLE_CARRIERS_RATING = "carriers_rating"
TABLE_USERS_RELIABILITY = "users_reliability"
TABLE_TEMP_TRANSACTIONS = "temp_transactions"
TABLE_TEMP_TRANSACTION_SUBROUTES = "temp_transactions_subroutes"

TABLES = (
    TABLE_TRANSACTIONS,
    TABLE_TRANSACTION_SUBROUTES,
    TABLE_TRANSACTIONS_RATING,
    TABLE_CARRIERS_RATING,
    TABLE_USERS_RELIABILITY,
    TABLE_TEMP_TRANSACTIONS,
    TABLE_TEMP_TRANSACTION_SUBROUTES,
)

RATING_DIMENSIONS = ("time", "safety", "dependability")
NEUTRAL_SCORE = 3.0  # scale midpoint, used when no ratings exist yet

RATINGS_CSV_COLUMNS = (
    "user_id",
    "transaction_id",
    "carrier_id",
    "origin",
    "destination",
    "score_time",
    "score_safety",
    "score_dependability",
)

STATUS_PROPOSED = "proposed"
STATUS_SELECTED = "selected"
STATUS_COMPLETED = "completed"


def reliability_coefficient(ratings_count: int) -> float:
    """Map a user's rating activity to the ur multiplier in [0.5, 1.5]."""
    return 0.5 + min(ratings_count, 10) / 10


@dataclass(frozen=True)
class UserReliability:
    user_id: str
    ratings_count: int
    ur: float


@dataclass(frozen=True)
class CarrierRating:
    """A user's per-leg evaluation of the carrier that served it."""

    rating_id: str
    transaction_id: str
    user_id: str
    carrier_id: str
    origin: str
    destination: str
    score_time: int
    score_safety: int
    score_dependability: int

    def score(self, dimension: str) -> int:
        return getattr(self, f"score_{dimension}")


@dataclass(frozen=True)
class TransactionRating:
    """A user's evaluation of a completed transaction as a whole."""

    rating_id: str
    transaction_id: str
    user_id: str
    score_time: int
    score_safety: int
    score_dependability: int

    def score(self, dimension: str) -> int:
        return getattr(self, f"score_{dimension}")


@dataclass
class TransactionRecord:
    transaction_id: str
    request_id: str
    user_id: str
    plan: str
    status: str
    created_at: str
    itinerary: Itinerary
    selected_at: str | None = None
    completed_at: str | None = None


@dataclass(frozen=True)
class TopCarrier:
    """One row of the top-carriers table for a leg."""

    carrier_id: str
    rating: float
    cost: Decimal
    duration: Decimal
    arc_id: str


def transaction_id_for(request_id: str, arc_ids: Sequence[str]) -> str:
    digest = hashlib.sha256(f"{request_id}|{','.join(arc_ids)}".encode()).hexdigest()
    return f"txn-{digest[:12]}"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _leg_row(transaction_id: str, seq: int, leg: CarrierArc) -> dict:
    return {
        "transaction_id": transaction_id,
        "seq": seq,
        "arc_id": leg.arc_id,
        "origin": leg.origin,
        "destination": leg.destination,
        "carrier_id": leg.carrier_id,
        "cost_eur": str(leg.cost),
        "duration_h": str(leg.duration),
        "safety": leg.safety.label,
        "dependability": leg.dependability.label,
    }


def _leg_from_row(row: dict) -> CarrierArc:
    return CarrierArc(
        arc_id=row["arc_id"],
        origin=row["origin"],
        destination=row["destination"],
        carrier_id=row["carrier_id"],
        cost=Decimal(row["cost_eur"]),
        duration=Decimal(row["duration_h"]),
        safety=parse_ordinal(row["safety"]),
        dependability=parse_ordinal(row["dependability"]),
    )


def _check_score(value) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
        raise ScoreOutOfRange(f"scores must be integers in [1, 5], got {value!r}")
    return value


class RatingStore:
    """Append-only store over a data directory, with the aggregate queries the
    scoring engine and rule miner need."""

    def __init__(self, data_dir: str | Path, clock: Callable[[], str] = _utc_now):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._clock = clock
        self._write_lock = threading.Lock()

        self._txns: dict[str, TransactionRecord] = {}
        self._by_request: dict[str, list[str]] = {}
        self._carrier_ratings: list[CarrierRating] = []
        self._transaction_ratings: list[TransactionRating] = []
        self._rated_pairs: set[tuple[str, str]] = set()
        self._ratings_count: dict[str, int] = {}
        self._replay()

    # -- persistence ------------------------------------------------------

    def _table_path(self, table: str) -> Path:
        return self.data_dir / table

    def _append(self, table: str, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with open(self._table_path(table), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def _read_table(self, table: str) -> list[dict]:
        path = self._table_path(table)
        if not path.exists():
            return []
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        return rows

    def _replay(self) -> None:
        temp_legs: dict[str, list[dict]] = {}
        for row in self._read_table(TABLE_TEMP_TRANSACTION_SUBROUTES):
            temp_legs.setdefault(row["transaction_id"], []).append(row)

        for row in self._read_table(TABLE_TEMP_TRANSACTIONS):
            tid = row["transaction_id"]
            legs = sorted(temp_legs.get(tid, []), key=lambda r: r["seq"])
            itinerary = aggregate_itinerary([_leg_from_row(r) for r in legs])
            record = TransactionRecord(
                transaction_id=tid,
                request_id=row["request_id"],
                user_id=row.get("user_id", ""),
                plan=row["plan"],
                status=STATUS_PROPOSED,
                created_at=row["created_at"],
                itinerary=itinerary,
            )
            self._txns[tid] = record
            self._by_request.setdefault(row["request_id"], []).append(tid)

        for row in self._read_table(TABLE_TRANSACTIONS):
            tid = row["transaction_id"]
            record = self._txns.get(tid)
            if record is None:
                continue
            record.status = row["status"]
            if row["status"] == STATUS_SELECTED:
                record.selected_at = row.get("selected_at")
                if row.get("user_id"):
                    record.user_id = row["user_id"]
            elif row["status"] == STATUS_COMPLETED:
                record.completed_at = row.get("completed_at")

        for row in self._read_table(TABLE_CARRIERS_RATING):
            self._carrier_ratings.append(
                CarrierRating(
                    rating_id=row["rating_id"],
                    transaction_id=row["transaction_id"],
                    user_id=row["user_id"],
                    carrier_id=row["carrier_id"],
                    origin=row["origin"],
                    destination=row["destination"],
                    score_time=row["score_time"],
                    score_safety=row["score_safety"],
                    score_dependability=row["score_dependability"],
                )
            )

        for row in self._read_table(TABLE_TRANSACTIONS_RATING):
            rating = TransactionRating(
                rating_id=row["rating_id"],
                transaction_id=row["transaction_id"],
                user_id=row["user_id"],
                score_time=row["score_time"],
                score_safety=row["score_safety"],
                score_dependability=row["score_dependability"],
            )
            self._transaction_ratings.append(rating)
            self._rated_pairs.add((rating.user_id, rating.transaction_id))

        for row in self._read_table(TABLE_USERS_RELIABILITY):
            self._ratings_count[row["user_id"]] = row["ratings_count"]

    # -- transactions -----------------------------------------------------

    def record_proposed(
        self,
        request_id: str,
        itineraries: Sequence[Itinerary],
        plan: str,
        user_id: str = "",
    ) -> list[str]:
        """Persist each proposed itinerary with its sub-routes.

        Idempotent per (request_id, arc sequence): re-recording an itinerary
        returns its existing transaction id without duplicating rows.
        """
        ids = []
        with self._write_lock:
            for itinerary in itineraries:
                tid = transaction_id_for(request_id, itinerary.arc_ids)
                ids.append(tid)
                if tid in self._txns:
                    continue
                created_at = self._clock()
                self._append(
                    TABLE_TEMP_TRANSACTIONS,
                    {
                        "transaction_id": tid,
                        "request_id": request_id,
                        "user_id": user_id,
                        "plan": plan,
                        "status": STATUS_PROPOSED,
                        "created_at": created_at,
                        "total_cost": str(itinerary.total_cost),
                        "total_duration": str(itinerary.total_duration),
                    },
                )
                for seq, leg in enumerate(itinerary.legs, start=1):
                    self._append(
                        TABLE_TEMP_TRANSACTION_SUBROUTES, _leg_row(tid, seq, leg)
                    )
                self._txns[tid] = TransactionRecord(
                    transaction_id=tid,
                    request_id=request_id,
                    user_id=user_id,
                    plan=plan,
                    status=STATUS_PROPOSED,
                    created_at=created_at,
                    itinerary=itinerary,
                )
                self._by_request.setdefault(request_id, []).append(tid)
        return ids

    def get_transaction(self, transaction_id: str) -> TransactionRecord:
        try:
            return self._txns[transaction_id]
        except KeyError:
            raise UnknownTransaction(f"unknown transaction: {transaction_id}") from None

    def transactions_for_request(self, request_id: str) -> list[TransactionRecord]:
        return [self._txns[tid] for tid in self._by_request.get(request_id, [])]

    def advance(
        self, transaction_id: str, phase: str, user_id: str | None = None
    ) -> TransactionRecord:
        """Advance a transaction along proposed -> selected -> completed."""
        if phase not in (STATUS_SELECTED, STATUS_COMPLETED):
            raise ValueError(f"phase must be 'selected' or 'completed', got {phase!r}")
        with self._write_lock:
            record = self.get_transaction(transaction_id)
            if phase == STATUS_SELECTED:
                if record.status != STATUS_PROPOSED:
                    raise IllegalTransition(
                        f"cannot select a {record.status} transaction"
                    )
                now = self._clock()
                if user_id:
                    record.user_id = user_id
                self._append(
                    TABLE_TRANSACTIONS,
                    {
                        "transaction_id": transaction_id,
                        "request_id": record.request_id,
                        "user_id": record.user_id,
                        "plan": record.plan,
                        "status": STATUS_SELECTED,
                        "created_at": record.created_at,
                        "selected_at": now,
                    },
                )
                for seq, leg in enumerate(record.itinerary.legs, start=1):
                    self._append(
                        TABLE_TRANSACTION_SUBROUTES, _leg_row(transaction_id, seq, leg)
                    )
                record.status = STATUS_SELECTED
                record.selected_at = now
            else:
                if record.status != STATUS_SELECTED:
                    raise IllegalTransition(
                        f"cannot complete a {record.status} transaction"
                    )
                now = self._clock()
                self._append(
                    TABLE_TRANSACTIONS,
                    {
                        "transaction_id": transaction_id,
                        "status": STATUS_COMPLETED,
                        "completed_at": now,
                    },
                )
                record.status = STATUS_COMPLETED
                record.completed_at = now
            return record

    def completed_transactions(self) -> list[TransactionRecord]:
        return [t for t in self._txns.values() if t.status == STATUS_COMPLETED]

    # -- ratings ----------------------------------------------------------

    def record_rating(
        self,
        user_id: str,
        transaction_id: str,
        carrier_scores: Sequence[tuple[int, int, int]],
        transaction_scores: tuple[int, int, int],
    ) -> UserReliability:
        """Store one carrier rating per leg plus the transaction rating.

        The user's rating count advances once per rated transaction and their
        reliability coefficient is recomputed from it.
        """
        with self._write_lock:
            record = self.get_transaction(transaction_id)
            if record.status != STATUS_COMPLETED:
                raise NotCompleted(
                    f"transaction {transaction_id} is {record.status}, not completed"
                )
            if (user_id, transaction_id) in self._rated_pairs:
                raise DuplicateRating(
                    f"user {user_id} already rated transaction {transaction_id}"
                )
            legs = record.itinerary.legs
            if len(carrier_scores) != len(legs):
                raise ValueError(
                    f"expected one carrier score triple per leg "
                    f"({len(legs)}), got {len(carrier_scores)}"
                )
            carrier_scores = [
                tuple(_check_score(s) for s in triple) for triple in carrier_scores
            ]
            transaction_scores = tuple(_check_score(s) for s in transaction_scores)
            now = self._clock()

            for index, (leg, (s_time, s_safety, s_dep)) in enumerate(
                zip(legs, carrier_scores), start=1
            ):
                rating = CarrierRating(
                    rating_id=f"cr-{transaction_id[4:]}-{user_id}-{index}",
                    transaction_id=transaction_id,
                    user_id=user_id,
                    carrier_id=leg.carrier_id,
                    origin=leg.origin,
                    destination=leg.destination,
                    score_time=s_time,
                    score_safety=s_safety,
                    score_dependability=s_dep,
                )
                self._append(
                    TABLE_CARRIERS_RATING,
                    {
                        "rating_id": rating.rating_id,
                        "transaction_id": rating.transaction_id,
                        "user_id": rating.user_id,
                        "carrier_id": rating.carrier_id,
                        "origin": rating.origin,
                        "destination": rating.destination,
                        "score_time": rating.score_time,
                        "score_safety": rating.score_safety,
                        "score_dependability": rating.score_dependability,
                        "created_at": now,
                    },
                )
                self._carrier_ratings.append(rating)

            t_rating = TransactionRating(
                rating_id=f"tr-{transaction_id[4:]}-{user_id}",
                transaction_id=transaction_id,
                user_id=user_id,
                score_time=transaction_scores[0],
                score_safety=transaction_scores[1],
                score_dependability=transaction_scores[2],
            )
            self._append(
                TABLE_TRANSACTIONS_RATING,
                {
                    "rating_id": t_rating.rating_id,
                    "transaction_id": t_rating.transaction_id,
                    "user_id": t_rating.user_id,
                    "score_time": t_rating.score_time,
                    "score_safety": t_rating.score_safety,
                    "score_dependability": t_rating.score_dependability,
                    "created_at": now,
                },
            )
            self._transaction_ratings.append(t_rating)
            self._rated_pairs.add((user_id, transaction_id))
            return self._bump_ratings_count(user_id, now)

    def _bump_ratings_count(self, user_id: str, now: str) -> UserReliability:
        count = self._ratings_count.get(user_id, 0) + 1
        self._ratings_count[user_id] = count
        ur = reliability_coefficient(count)
        self._append(
            TABLE_USERS_RELIABILITY,
            {"user_id": user_id, "ratings_count": count, "ur": ur, "updated_at": now},
        )
        return UserReliability(user_id=user_id, ratings_count=count, ur=ur)

    def import_ratings_csv(self, path: str | Path) -> int:
        """Seed carrier ratings in bulk from the import CSV.

        Rows are appended as-is (no completed-transaction requirement); each
        user's rating count advances once per transaction id new to them.
        """
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError("ratings CSV is empty (header required)") from None
            if tuple(h.strip() for h in header) != RATINGS_CSV_COLUMNS:
                raise ValueError(
                    "ratings CSV header must be exactly: " + ",".join(RATINGS_CSV_COLUMNS)
                )
            rows = [row for row in reader if row and any(cell.strip() for cell in row)]

        imported = 0
        with self._write_lock:
            now = self._clock()
            for row in rows:
                if len(row) != len(RATINGS_CSV_COLUMNS):
                    raise ValueError("ratings CSV row must have 8 columns")
                user_id, tid, carrier_id, origin, destination = (
                    cell.strip() for cell in row[:5]
                )
                scores = []
                for cell in row[5:]:
                    try:
                        scores.append(_check_score(int(cell)))
                    except ValueError:
                        raise ScoreOutOfRange(f"invalid score: {cell!r}") from None
                rating = CarrierRating(
                    rating_id=f"cr-import-{len(self._carrier_ratings) + 1}",
                    transaction_id=tid,
                    user_id=user_id,
                    carrier_id=carrier_id,
                    origin=origin.upper(),
                    destination=destination.upper(),
                    score_time=scores[0],
                    score_safety=scores[1],
                    score_dependability=scores[2],
                )
                self._append(
                    TABLE_CARRIERS_RATING,
                    {
                        "rating_id": rating.rating_id,
                        "transaction_id": rating.transaction_id,
                        "user_id": rating.user_id,
                        "carrier_id": rating.carrier_id,
                        "origin": rating.origin,
                        "destination": rating.destination,
                        "score_time": rating.score_time,
                        "score_safety": rating.score_safety,
                        "score_dependability": rating.score_dependability,
                        "created_at": now,
                    },
                )
                self._carrier_ratings.append(rating)
                if (user_id, tid) not in self._rated_pairs:
                    self._rated_pairs.add((user_id, tid))
                    self._bump_ratings_count(user_id, now)
                imported += 1
        return imported

    # -- aggregate queries ------------------------------------------------

    def reliability(self, user_id: str) -> UserReliability:
        count = self._ratings_count.get(user_id, 0)
        return UserReliability(
            user_id=user_id, ratings_count=count, ur=reliability_coefficient(count)
        )

    def carrier_avg(
        self, carrier_id: str, origin: str, destination: str, dimension: str
    ) -> float:
        """Reliability-weighted mean carrier score on a leg; 3.0 when unrated."""
        if dimension not in RATING_DIMENSIONS:
            raise ValueError(f"unknown rating dimension: {dimension!r}")
        values = [
            rating.score(dimension) * self.reliability(rating.user_id).ur
            for rating in self._carrier_ratings
            if rating.carrier_id == carrier_id
            and rating.origin == origin
            and rating.destination == destination
        ]
        if not values:
            return NEUTRAL_SCORE
        return sum(values) / len(values)

    def transaction_avg(self, origin: str, destination: str, dimension: str) -> float:
        """Reliability-weighted mean transaction score over transactions whose
        itinerary contains the (origin, destination) leg; 3.0 when empty."""
        if dimension not in RATING_DIMENSIONS:
            raise ValueError(f"unknown rating dimension: {dimension!r}")
        values = []
        for rating in self._transaction_ratings:
            record = self._txns.get(rating.transaction_id)
            if record is None:
                continue
            if any(
                leg.origin == origin and leg.destination == destination
                for leg in record.itinerary.legs
            ):
                values.append(rating.score(dimension) * self.reliability(rating.user_id).ur)
        if not values:
            return NEUTRAL_SCORE
        return sum(values) / len(values)

    def route_popularity(self, arc_ids: Sequence[str]) -> int:
        """How many completed transactions used exactly this arc sequence.

        Shown to the user after the ranking, never fed into any score.
        """
        sequence = tuple(arc_ids)
        return sum(
            1
            for record in self._txns.values()
            if record.status == STATUS_COMPLETED
            and record.itinerary.arc_ids == sequence
        )

    def carrier_composite(self, carrier_id: str, origin: str, destination: str) -> float:
        """Unweighted mean of the three carrier rating dimensions."""
        return (
            sum(
                self.carrier_avg(carrier_id, origin, destination, dim)
                for dim in RATING_DIMENSIONS
            )
            / 3
        )

    def top_carriers(
        self, network: TransportNetwork, origin: str, destination: str, n: int = 10
    ) -> list[TopCarrier]:
        """Carriers serving the leg, best composite rating first.

        Each carrier is represented by its cheapest arc on the leg; ties in
        rating break by carrier id.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        by_carrier: dict[str, CarrierArc] = {}
        for arc in network.arcs_on_leg(origin, destination):
            best = by_carrier.get(arc.carrier_id)
            if best is None or (arc.cost, arc.duration, arc.arc_id) < (
                best.cost,
                best.duration,
                best.arc_id,
            ):
                by_carrier[arc.carrier_id] = arc
        rows = [
            TopCarrier(
                carrier_id=carrier_id,
                rating=self.carrier_composite(carrier_id, origin, destination),
                cost=arc.cost,
                duration=arc.duration,
                arc_id=arc.arc_id,
            )
            for carrier_id, arc in by_carrier.items()
        ]
        rows.sort(key=lambda row: (-row.rating, row.carrier_id))
        return rows[:n]

    def carrier_ratings_for_leg(
        self, transaction_id: str, carrier_id: str, origin: str, destination: str
    ) -> list[CarrierRating]:
        return [
            rating
            for rating in self._carrier_ratings
            if rating.transaction_id == transaction_id
            and rating.carrier_id == carrier_id
            and rating.origin == origin
            and rating.destination == destination
        ]
