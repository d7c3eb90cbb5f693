"""Exception types shared across the engine."""


class FreightRecError(Exception):
    """Base class for every error raised by this package."""


class UnknownOrdinal(FreightRecError):
    """A quality label is not one of the five levels (or a known alias)."""


class DisconnectedPath(FreightRecError):
    """Leg sequence does not form a connected path."""


class RepeatedTerminal(FreightRecError):
    """Leg sequence visits a terminal more than once."""


class EmptyNetwork(FreightRecError):
    """Operation requires a network with at least one arc."""


class UnknownTerminal(FreightRecError):
    """Terminal id not present in the network snapshot."""


class UnknownArc(FreightRecError):
    """Arc id not present in the network snapshot / weight table."""


class NoSolution(FreightRecError):
    """The search produced no itinerary satisfying the request.

    Reportable outcome, not a crash: ``reason`` is a stable code
    ("unreachable" or "all_filtered") and ``details`` explains which
    constraint eliminated the candidates.
    """

    def __init__(self, reason: str, message: str, details: dict | None = None):
        super().__init__(message)
        self.reason = reason
        self.details = details or {}


class MissingScores(FreightRecError):
    """final_score ranking requested before scores were computed."""


class UnknownRequest(FreightRecError):
    """Request id has no session (or no solutions to act on)."""


class UnknownTransaction(FreightRecError):
    """Transaction id not present in the store."""


class IllegalTransition(FreightRecError):
    """Transaction status change violates proposed -> selected -> completed."""


class NotCompleted(FreightRecError):
    """Ratings are only accepted for completed transactions."""


class ScoreOutOfRange(FreightRecError):
    """Rating score outside the 1..5 scale."""


class DuplicateRating(FreightRecError):
    """A user may rate a transaction once."""


class InvalidLegCount(FreightRecError):
    """Itinerary leg count must be >= 1."""


class ZeroMinCost(FreightRecError):
    """Cost score is undefined when every candidate is free."""


class CarrierNotOnLeg(FreightRecError):
    """Comparison carrier does not serve the leg's origin-destination pair."""
