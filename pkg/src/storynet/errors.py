"""Exception hierarchy shared across the package.

Every error raised on a documented contract boundary derives from
StorynetError so callers (CLI, service) can map failures to exit codes
and rejection reasons uniformly.
"""
from __future__ import annotations


class StorynetError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(StorynetError):
    """A configuration value is out of its documented domain."""


class DomainError(StorynetError):
    """An argument refers to something that does not exist (e.g. unknown node)."""


class SequencingError(StorynetError):
    """An operation ran before its prerequisite iteration completed."""


class ConflictError(StorynetError):
    """A (node, iteration) slot already holds a record."""


class ProtocolViolationError(StorynetError):
    """A submission broke the transmission protocol (bad parent, bad iteration)."""


class ReplayIntegrityError(StorynetError):
    """The event log cannot be replayed; ``index`` is the offending line."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (line {index})")
        self.index = index


class TemplateError(StorynetError):
    """A prompt template is missing a required placeholder."""


class ParseError(StorynetError):
    """A model response did not follow the wire format."""


class AgentFailureError(StorynetError):
    """An agent could not produce a submission (retries exhausted or fatal)."""


class RunAbortedError(StorynetError):
    """The run stopped under the abort failure policy; the log is resumable."""

    def __init__(self, message: str, completed_iteration: int):
        super().__init__(message)
        self.completed_iteration = completed_iteration


class ConfigMismatchError(StorynetError):
    """Resume refused: the config hash does not match the log header."""


class ClaimRejectedError(StorynetError):
    """A task claim was refused; ``reason`` is a stable machine-readable code."""

    def __init__(self, reason: str, message: str | None = None):
        super().__init__(message or reason)
        self.reason = reason


class SubmissionRejectedError(StorynetError):
    """A task submission was refused; ``reason`` is a stable machine-readable code."""

    def __init__(self, reason: str, message: str | None = None):
        super().__init__(message or reason)
        self.reason = reason


class InsufficientDataError(StorynetError):
    """Too few observations for the requested statistic."""


class RatingValidationError(StorynetError):
    """A ratings table row is invalid; ``row`` is the 1-based data row number."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row
