"""
Exception hierarchy shared by all jobmon packages.
"""

from typing import Optional


class JobmonError(Exception):
    """Base class for every error raised by jobmon."""


class ConfigError(JobmonError):
    """A configuration file or section failed validation."""


# Wire format

class MalformedLine(JobmonError):
    """A line-protocol line was rejected by the parser."""

    def __init__(self, reason: str, line: Optional[str] = None):
        self.reason = reason
        self.line = line
        super().__init__(reason)


class InvalidMetric(JobmonError):
    """A Metric violates its invariants and cannot be serialized."""


# Job tagging

class InvalidJob(JobmonError):
    """A job record or signal document is not acceptable."""


class DuplicateJob(JobmonError):
    """A start signal arrived for a job that is already active."""


class UnknownJob(JobmonError):
    """An end signal (or lookup) named a job that is not active."""


# Storage

class StorageError(JobmonError):
    """A batch could not be persisted; the retry buffer keeps it."""


class Unreachable(StorageError):
    """The forward target did not answer or answered with a server error."""


class RemoteRejected(StorageError):
    """The forward target refused the batch as malformed; retrying cannot help."""

    def __init__(self, message: str, status: int = 400):
        self.status = status
        super().__init__(message)


class IOFailure(StorageError):
    """Writing to the local segment files failed."""


class StorageFull(StorageError):
    """The embedded store refused the write because a size limit was reached."""


class UnknownDatabase(JobmonError):
    """A query named a database that was never written."""


# Analysis

class TypeMismatch(JobmonError):
    """A numeric operation was applied to string values."""


class NoData(JobmonError):
    """A required metric has no samples in the requested window."""


class MissingStatistic(JobmonError):
    """The decision tree referenced a statistic absent from the input."""


# Dashboards

class UnresolvedPlaceholder(JobmonError):
    """A template referenced a placeholder outside the fixed vocabulary."""


# Clients

class EndpointUnreachable(JobmonError):
    """The router endpoint could not be reached by a client."""
