"""Exception hierarchy shared by all weathervane modules.

Every domain error carries a stable machine-readable ``code`` so that the
HTTP node and the CLI can surface errors as ``{"error": code, "detail": text}``
without string-matching exception messages.
"""


class WeathervaneError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "error"


# --- ledger ---------------------------------------------------------------

class LedgerError(WeathervaneError):
    code = "ledger-error"


class InvalidParams(LedgerError):
    code = "invalid-params"


class Unauthorized(LedgerError):
    code = "unauthorized"


class DuplicateAccount(LedgerError):
    code = "duplicate-account"


class DuplicateCid(LedgerError):
    code = "duplicate-cid"


class UnknownModel(LedgerError):
    code = "unknown-model"


class SelfVote(LedgerError):
    code = "self-vote"


class AlreadyVoted(LedgerError):
    code = "already-voted"


class VotingClosed(LedgerError):
    code = "voting-closed"


class InvalidScore(LedgerError):
    code = "invalid-score"


class EmptyVoteSet(LedgerError):
    code = "empty-vote-set"


class ZeroTotalReputation(LedgerError):
    code = "zero-total-reputation"


class MalformedState(LedgerError):
    """Persisted ledger bytes do not parse."""

    code = "malformed-state"


# --- content-addressed store ----------------------------------------------

class CasError(WeathervaneError):
    code = "cas-error"


class NotFound(CasError):
    code = "not-found"


class IntegrityViolation(CasError):
    """Stored bytes no longer hash to their content identifier."""

    code = "integrity-violation"


class StorageFailure(CasError):
    code = "storage-failure"


# --- forecasting ----------------------------------------------------------

class ForecastError(WeathervaneError):
    code = "forecast-error"


class CsvSchemaError(ForecastError):
    code = "csv-schema-error"


class AllMissingColumn(ForecastError):
    code = "all-missing-column"


class EmptyTrainingSet(ForecastError):
    code = "empty-training-set"


class ArityMismatch(ForecastError):
    code = "arity-mismatch"


class TooFewRows(ForecastError):
    code = "too-few-rows"


class InsufficientHistory(ForecastError):
    code = "insufficient-history"


class SingularSystem(ForecastError):
    """Normal equations unsolvable even after ridge regularization."""

    code = "singular-system"


class InsufficientContext(ForecastError):
    code = "insufficient-context"


class LengthMismatch(ForecastError):
    code = "length-mismatch"


class EmptyInput(ForecastError):
    code = "empty-input"


class MapeUndefined(ForecastError):
    """Every target is below the zero guard, so MAPE has no value."""

    code = "mape-undefined"


class MissingMetric(ForecastError):
    code = "missing-metric"


class MalformedBytes(ForecastError):
    code = "malformed-bytes"


class UnsupportedVersion(ForecastError):
    code = "unsupported-version"


# --- simulator --------------------------------------------------------------

class SimError(WeathervaneError):
    code = "sim-error"


class SeriesTooShort(SimError):
    code = "series-too-short"


class InvalidConfig(SimError):
    code = "invalid-config"


# --- node -------------------------------------------------------------------

class NodeError(WeathervaneError):
    code = "node-error"


class UnknownToken(NodeError):
    code = "unknown-token"


class BindFailure(NodeError):
    code = "bind-failure"
