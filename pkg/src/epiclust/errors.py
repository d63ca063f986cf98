"""Exception types shared across the package."""


class EpiclustError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EpiclustError, ValueError):
    """Input data violates a precondition (non-finite coordinate, empty set...)."""


class InvalidParameterError(EpiclustError, ValueError):
    """An algorithm or query parameter is out of range."""


class SchemaError(EpiclustError, ValueError):
    """A case file is missing a required column or property."""


class RowError(EpiclustError, ValueError):
    """A single row of a case file could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateIdError(EpiclustError, ValueError):
    """Two case records share an id."""


class UnsupportedGeometryError(EpiclustError, ValueError):
    """A GeoJSON feature is not a Point."""
