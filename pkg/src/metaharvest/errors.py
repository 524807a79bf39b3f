"""Exception hierarchy shared by every stage of the toolkit."""

from __future__ import annotations


class MetaharvestError(Exception):
    """Base class for all toolkit errors."""


class InvalidRequest(MetaharvestError, ValueError):
    """An OAI-PMH request violates the protocol's argument rules."""


class MalformedResponse(MetaharvestError):
    """A response body could not be parsed as an OAI-PMH envelope."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class ProtocolError(MetaharvestError):
    """The repository answered with an in-band OAI-PMH error."""

    def __init__(self, error, summary=None):
        super().__init__(f"{error.code}: {error.message}" if error.message else error.code)
        self.error = error
        self.summary = summary

    @property
    def code(self) -> str:
        return self.error.code


class TransportError(MetaharvestError):
    """HTTP transport failed and retries are exhausted."""

    def __init__(self, message: str, summary=None):
        super().__init__(message)
        self.summary = summary


class MalformedMetadata(MetaharvestError):
    """A record's metadata payload is not well-formed XML."""

    def __init__(self, oai_identifier: str, message: str):
        super().__init__(f"{oai_identifier}: {message}")
        self.oai_identifier = oai_identifier


class StorageFailure(MetaharvestError):
    pass


class MalformedSymbol(MetaharvestError, ValueError):
    pass


class EmptyInput(MetaharvestError, ValueError):
    pass


class MissingRegistry(MetaharvestError):
    pass


class InvalidRange(MetaharvestError, ValueError):
    pass


class RegistryError(MetaharvestError, ValueError):
    """A curation CSV row is invalid (unknown type, conflicting alias...)."""


class ConfigError(MetaharvestError):
    pass


class StageDependencyError(MetaharvestError):
    """A pipeline stage was run before the stage it depends on."""
