"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all safegen errors."""


class SpecSyntaxError(PipelineError):
    """Input document is not well-formed JSON/YAML."""


class SchemaError(PipelineError):
    """Document shape violates the (closed) schema.

    ``path`` points at the offending field, e.g. ``$.inputs[2].range``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class InvariantError(PipelineError):
    """A structurally valid value violates a domain invariant."""


class ContextOverflow(PipelineError):
    """Assembled prompt exceeds the configured character budget."""


class TransportError(PipelineError):
    """HTTP backend failed after exhausting retries."""


class BackendExhausted(PipelineError):
    """Replay backend ran out of scripted responses."""


class DeadlineExceeded(PipelineError):
    """A blocking call did not complete within its deadline."""


class NoCodeFound(PipelineError):
    """Response contained no extractable code block."""


class IllegalTransition(PipelineError):
    """State machine received an event not legal in the current state."""


class StorageError(PipelineError):
    """Ledger persistence failed."""


class ToolError(PipelineError):
    """External tool failed for infrastructure reasons (not candidate fault).

    Distinguished from a check Fail so that broken tooling never burns
    refinement iterations or pollutes per-check statistics.
    """


class ControllerCrashed(PipelineError):
    """Controller process died or closed its pipes mid-episode."""


class ProtocolViolation(PipelineError):
    """Controller emitted a malformed or out-of-range wire message."""


class ConfigError(PipelineError):
    """Pipeline configuration is missing, malformed, or inconsistent."""


class BudgetExhausted(PipelineError):
    """Static refinement budget ran out before a candidate verified.

    Carries a short summary of the best prior candidate so callers can
    report how close the run got.
    """

    def __init__(self, message: str, best_prior_summary: str | None = None, report=None):
        self.best_prior_summary = best_prior_summary
        self.report = report
        super().__init__(message)
