"""Exception hierarchy shared by all modules.

The CLI maps these onto its exit-code table, so each class carries a short
machine-readable ``category``.
"""


class AepError(Exception):
    category = "error"


class DomainError(AepError, ValueError):
    """An argument lies outside the domain of the operation."""

    category = "domain"


class CapacityError(AepError):
    """The requested enumeration or table would exceed a size guard."""

    category = "capacity"


class RateInfeasibleError(AepError, ValueError):
    """The typical set does not fit in the codeword width for the given rate."""

    category = "rate-infeasible"

    def __init__(self, message, min_rate=None):
        super().__init__(message)
        self.min_rate = min_rate


class MalformedCodewordError(AepError, ValueError):
    category = "malformed-codeword"


class DegenerateDistributionError(DomainError):
    """Zero variance where a normal approximation needs a positive one."""

    category = "degenerate"


class StepSizeError(DomainError):
    category = "step-size"
