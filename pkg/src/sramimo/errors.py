"""Exception hierarchy shared across the package."""


class SramimoError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SramimoError, ValueError):
    pass


class NonCoprimeError(InvalidParameterError):
    pass


class UnsupportedGeometryError(InvalidParameterError):
    pass


class InvalidAngleError(InvalidParameterError):
    pass


class DimensionError(SramimoError, ValueError):
    pass


class GeometryInconsistencyError(SramimoError):
    """Closed-form and enumerated co-array quantities disagree."""


class PlacementError(SramimoError):
    """User angles could not be placed with the requested separation."""


class SingularSystemError(SramimoError):
    pass


class InvalidFilterError(SramimoError, ValueError):
    pass


class ConfigError(SramimoError, ValueError):
    """Configuration failed validation; ``errors`` lists field-level messages."""

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)
