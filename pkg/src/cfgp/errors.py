"""Exception types shared across the package."""


class CfgpError(Exception):
    """Base class for all package errors."""


class ParseError(CfgpError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TraceValidationError(CfgpError):
    """A trace violates a structural invariant; names the trace id."""

    def __init__(self, message, trace_id=None):
        if trace_id is not None:
            message = f"trace {trace_id!r}: {message}"
        super().__init__(message)
        self.trace_id = trace_id


class DomainError(CfgpError, ValueError):
    """Argument outside the documented domain of an operation."""


class ConfigurationError(CfgpError):
    """Model and data disagree (e.g. unknown action type)."""


class NumericalError(CfgpError):
    """Linear-algebra failure that survived jitter escalation."""


class OptimizationError(CfgpError):
    """All optimizer restarts diverged; carries per-restart diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class InitializationError(CfgpError):
    """Parameter initialization cannot proceed (e.g. too few traces)."""


class DegenerateDataError(CfgpError):
    """Statistic undefined for this input (all ties, zero events, ...)."""
