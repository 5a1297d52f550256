"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto
its documented status codes (1 configuration, 2 data/schema, 3 network).
"""

from __future__ import annotations


class PmevalError(Exception):
    exit_code = 2


class ConfigError(PmevalError):
    exit_code = 1


class DataError(PmevalError, ValueError):
    exit_code = 2


class NetworkError(PmevalError):
    exit_code = 3


# core
class EmptyEdges(DataError):
    pass


class NonMonotonicEdges(DataError):
    pass


class BelowPartition(DataError):
    pass


class NegativeWeight(DataError):
    pass


class DegenerateMass(DataError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


# ingest
class SchemaError(DataError):
    def __init__(self, message: str, *, source: str | None = None, line: int | None = None,
                 field: str | None = None):
        self.source = source
        self.line = line
        self.field = field
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class HttpError(NetworkError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        self.body = body[:200]
        super().__init__(f"HTTP {status}: {self.body}")


class RateLimited(HttpError):
    pass


class DecodeError(NetworkError):
    pass


class CacheMiss(DataError):
    pass


# contracts
class NoNumber(DataError):
    pass


class AmbiguousNumber(DataError):
    pass


class DuplicateThreshold(DataError):
    pass


class ContractBinMismatch(DataError):
    pass


# surveillance
class DuplicatePublication(DataError):
    pass


class Unresolved(DataError):
    pass


# baselines
class TooShort(DataError):
    pass


class NonFinite(DataError):
    pass


class FitFailure(DataError):
    pass


# evaluation
class EmptySnapshots(DataError):
    pass


class EmptyHub(DataError):
    pass


class EmptyEvents(DataError):
    pass


# cli
class MissingArtifacts(DataError):
    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__("missing artifacts: " + ", ".join(self.missing))
