"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class S2SGError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(S2SGError, ValueError):
    """A value violates a structural invariant."""

    def __init__(self, message: str, offenders: list[str] | None = None):
        super().__init__(message)
        self.offenders = list(offenders or [])


class ConfigError(S2SGError):
    """Configuration is missing, unknown, or out of range."""


class IngestError(S2SGError):
    """A deck archive is unreadable or missing a required part."""


class FormatError(IngestError):
    """The file is a zip archive but not a presentation deck."""


class ParseError(S2SGError):
    """Text could not be parsed into the requested structure."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class GroundingError(S2SGError):
    """A grounder failed on one or more slides."""


class RepairExhausted(GroundingError):
    """Every reply for a slide was malformed; ``fallback`` holds the all-empty result."""

    def __init__(self, message: str, fallback=None):
        super().__init__(message)
        self.fallback = fallback


class AllSlidesFailed(GroundingError):
    def __init__(self, message: str, failures):
        super().__init__(message)
        self.failures = failures


class CredentialError(S2SGError):
    """The LLM endpoint rejected or lacks credentials."""


class TransportError(S2SGError):
    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class FixtureMiss(S2SGError):
    """A scripted responder has no reply recorded for a prompt."""

    def __init__(self, prompt_hash: str):
        super().__init__(f"no scripted reply for prompt hash {prompt_hash}")
        self.prompt_hash = prompt_hash


class RenderError(S2SGError):
    pass
