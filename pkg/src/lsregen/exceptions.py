"""Error kinds raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class NoMatchingLayoutError(LookupError):
    """No mixture component matches the requested layout."""


class ReferenceGapError(KeyError):
    """A reference trajectory lacks a timestep the sampler needs."""

    def __str__(self):
        return str(self.args[0]) if self.args else "reference gap"


class UndefinedCorrelationError(ArithmeticError):
    """Pearson correlation requested for a zero-variance input."""


class LayoutError(ValueError):
    """Base class for layout document problems."""


class LayoutJSONError(LayoutError):
    """The layout document is not valid JSON."""


class LayoutSchemaError(LayoutError):
    """The layout document does not follow the schema.

    Attributes:
        path: JSON path of the offending field, e.g. ``boxes[2].label``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class LayoutInvariantError(LayoutError):
    """A parsed layout violates a geometric invariant."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class FormatError(ValueError):
    """A binary file (PPM, tensor dump) is malformed."""


class ConfigError(ValueError):
    """A run config file is malformed or has invalid values."""
