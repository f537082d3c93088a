"""Exception types shared across the package.

Every failure mode that callers are expected to handle has its own class so
that backtests can record failures by tag instead of string-matching messages.
"""


class DivportError(Exception):
    """Base class for all package errors."""

    #: short machine-readable tag, used in backtest failure records
    tag = "error"


# --- panel / ingestion ------------------------------------------------------

class MalformedFile(DivportError):
    tag = "malformed_file"


class MisalignedDates(DivportError):
    tag = "misaligned_dates"


class NonFiniteValue(DivportError):
    tag = "non_finite_value"


class ShortPanel(DivportError):
    tag = "short_panel"


class OutOfRange(DivportError):
    tag = "out_of_range"


class EmptyUniverse(DivportError):
    tag = "empty_universe"


# --- estimation -------------------------------------------------------------

class DegenerateMarket(DivportError):
    tag = "degenerate_market"


class NonPositiveVariance(DivportError):
    tag = "non_positive_variance"


class DegenerateAsset(DivportError):
    tag = "degenerate_asset"


class CorrelationOutOfPSDRange(DivportError):
    tag = "correlation_out_of_psd_range"


# --- solvers ----------------------------------------------------------------

class NotPSD(DivportError):
    tag = "not_psd"


class NotPositiveDefinite(DivportError):
    tag = "not_positive_definite"


class Infeasible(DivportError):
    tag = "infeasible"


class MaxIterations(DivportError):
    tag = "max_iterations"


# --- strategies -------------------------------------------------------------

class InfeasibleBounds(DivportError):
    tag = "infeasible_bounds"


class DegenerateVols(DivportError):
    tag = "degenerate_vols"


class NonPositiveCap(DivportError):
    tag = "non_positive_cap"


# --- analytics --------------------------------------------------------------

class EmptySeries(DivportError):
    tag = "empty_series"


class UndefinedSharpe(DivportError):
    tag = "undefined_sharpe"


class EmptyHistory(DivportError):
    tag = "empty_history"


# --- synthetic data ---------------------------------------------------------

class InvalidSpec(DivportError):
    tag = "invalid_spec"
