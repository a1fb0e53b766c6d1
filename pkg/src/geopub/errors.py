"""Exception hierarchy shared across the package.

Plain I/O failures (unreadable files, missing directories) are reported with
the builtin ``OSError`` family; everything domain-specific derives from
:class:`GeopubError`.
"""

from __future__ import annotations


class GeopubError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GeopubError):
    """Project file is not well-formed XML or has an unrecognized root."""


class MissingFileError(GeopubError):
    """One or more referenced files do not exist on disk."""

    def __init__(self, paths):
        self.paths = [str(p) for p in paths]
        listed = ", ".join(self.paths)
        super().__init__(f"missing {len(self.paths)} referenced file(s): {listed}")


class AuthorsFormatError(GeopubError):
    """A line in an AUTHORS file does not match the accepted grammar."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"AUTHORS line {line_number}: {message}")


class ConfigError(GeopubError):
    """Configuration file or value is invalid."""


class CacheCorruptError(GeopubError):
    """The DOI cache file exists but cannot be parsed."""


class CacheLockError(GeopubError):
    """Another process holds the DOI cache lock."""


class BindError(GeopubError):
    """The mock service could not bind its listen address."""


class ProtocolError(GeopubError):
    """Base class for repository service errors.

    ``status`` carries the HTTP status code when the error originated from a
    wire response, else 0.
    """

    status = 0

    def __init__(self, message: str, status: int | None = None):
        if status is not None:
            self.status = status
        super().__init__(message)


class AuthError(ProtocolError):
    status = 401


class ValidationError(ProtocolError):
    status = 400


class NotFoundError(ProtocolError):
    status = 404


class QuotaError(ProtocolError):
    status = 413


class ChecksumMismatchError(ProtocolError):
    status = 422


class CapabilityNotSupportedError(ProtocolError):
    status = 501


class NetworkError(ProtocolError):
    """Connection failure, or a server-side failure that persisted through
    the retry policy."""
