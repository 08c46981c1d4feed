"""Exception hierarchy.

Data problems (bad CSV, bad model JSON, schema mismatches) derive from
:class:`DataError`; the CLI maps them to exit code 2. Exceeding the exact
enumeration cap raises :class:`ExactCapError` (exit code 3).
"""


class StaylorError(Exception):
    """Base class for all package errors."""


class DataError(StaylorError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class EmptyColumnError(DataError):
    pass


class DimensionError(DataError):
    pass


class StructureError(DataError):
    pass


class DomainError(StaylorError, ValueError):
    pass


class ExactCapError(StaylorError):
    pass
