"""Exception hierarchy shared across the toolkit.

Every failure mode raised by the library is a subclass of :class:`WscError`,
so callers (including the CLI) can distinguish "bad input" from genuine bugs
with a single except clause. Estimator-level failures additionally derive
from :class:`EstimatorError`, which the bootstrap machinery treats as a
discardable replicate rather than a fatal condition.
"""

from __future__ import annotations


class WscError(Exception):
    """Base class for all toolkit errors."""


# --- dataset construction / loading ---------------------------------------

class EmptyDataset(WscError):
    """No records supplied."""


class ShapeMismatch(WscError):
    """Covariate length, array width, or value domain does not match the schema."""


class ComplianceViolation(WscError):
    """A control-group record is marked exposed (z=0, w=1)."""


class NonBinaryIndicator(WscError):
    """Assignment or exposure indicator outside {0, 1}."""


class SchemaError(WscError):
    """Covariate schema invariants violated (duplicate names, bad matching subset)."""


class NonBinaryCovariate(WscError):
    """A covariate required to be binary (e.g. for exact matching) is not."""


# --- scenario generator ----------------------------------------------------

class InvalidSpec(WscError):
    """Scenario specification violates its invariants.

    Carries the offending field name so the CLI can surface it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class CalibrationFailure(WscError):
    """Opt-out rate calibration did not converge within the bisection budget."""


class DegenerateScenario(WscError):
    """Monte-Carlo oracle produced no exposed users."""


# --- numeric core ----------------------------------------------------------

class DegenerateDesign(WscError):
    """Normal equations unsolvable even with the ridge fallback."""


class AllOneClass(WscError):
    """Logistic regression labels are constant."""


class EmptyInput(WscError):
    """Empty vector where at least one value is required."""


class ZeroWeightSum(WscError):
    """Weighted mean requested with zero total weight."""


# --- estimators ------------------------------------------------------------

class EstimatorError(WscError):
    """Base class for estimator precondition failures.

    The bootstrap discards (and counts) replicates that raise these.
    """


class NoControlGroup(EstimatorError):
    pass


class NoTreatmentGroup(EstimatorError):
    pass


class NoCompliers(EstimatorError):
    pass


class NoExposed(EstimatorError):
    pass


class NoUnexposed(EstimatorError):
    pass


class NoMatches(EstimatorError):
    """Exact matching found no treatment-unexposed counterpart for any exposed user."""


class InsufficientUnexposed(EstimatorError):
    pass


# --- diagnostics -----------------------------------------------------------

class EmptyGroup(WscError):
    """Balance diagnostic invoked on an empty group."""


class TooManyFailedReplicates(WscError):
    """More than the allowed fraction of bootstrap replicates failed."""
