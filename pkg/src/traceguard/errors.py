"""Shared exception types.

Every error raised by this package derives from TraceGuardError so callers
(and the CLI) can map failures onto exit codes without matching on strings.
Exceptions are grouped by pipeline stage; each carries a short machine
readable ``code`` used in CLI error lines.
"""

from __future__ import annotations


class TraceGuardError(Exception):
    """Base class for all package errors."""

    code = "internal"


class ConfigError(TraceGuardError):
    """Bad flags, malformed config files, out-of-range parameters."""

    code = "config"


class DataError(TraceGuardError):
    """Unusable input data (traces, matrices, logs)."""

    code = "data"


# --- ingest ---------------------------------------------------------------

class MalformedLine(DataError):
    code = "malformed_line"


class DepthUnderflow(DataError):
    code = "depth_underflow"


class MissingColumn(DataError):
    code = "missing_column"


class NonMonotonicCounter(DataError):
    code = "non_monotonic_counter"


class UnparsableKeyFile(DataError):
    code = "unparsable_key_file"


class EmptySymbolList(ConfigError):
    code = "empty_symbol_list"


class NoUserspaceActivity(DataError):
    code = "no_userspace_activity"


class EmptySession(DataError):
    code = "empty_session"


# --- graph / features -----------------------------------------------------

class EmptyWindow(DataError):
    code = "empty_window"


class SchemaMismatch(DataError):
    code = "schema_mismatch"


class EmptyMatrix(DataError):
    code = "empty_matrix"


class TooFewRows(DataError):
    code = "too_few_rows"


class InsufficientSessions(DataError):
    code = "insufficient_sessions"


class NotFitted(TraceGuardError):
    code = "not_fitted"


# --- selection ------------------------------------------------------------

class CurveTooShort(ConfigError):
    code = "curve_too_short"


class NoOOBSamples(DataError):
    code = "no_oob_samples"


class InvalidRange(ConfigError):
    code = "invalid_range"


# --- models ---------------------------------------------------------------

class ModelFormatError(DataError):
    code = "model_format"


class InvalidProbability(ConfigError):
    code = "invalid_probability"


# --- policy / enforcement -------------------------------------------------

class PolicyFormatError(ConfigError):
    code = "policy_format"


class UnknownType(ConfigError):
    code = "unknown_type"


class UnknownOperation(ConfigError):
    code = "unknown_operation"


# --- simulation / evaluation ----------------------------------------------

class InvalidProfile(ConfigError):
    code = "invalid_profile"


class ManifestError(ConfigError):
    code = "manifest"


class NoRunData(DataError):
    code = "no_run_data"


class DivisionByZero(DataError):
    code = "division_by_zero"


class UnknownCommand(ConfigError):
    code = "unknown_command"
