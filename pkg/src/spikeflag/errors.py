"""Exception hierarchy shared across the package."""


class SpikeflagError(Exception):
    """Base class for all package errors."""


class ConfigError(SpikeflagError, ValueError):
    pass


class FormatError(SpikeflagError, ValueError):
    """An input file is missing a required dataset or attribute."""


class SchemaError(SpikeflagError, ValueError):
    """Datasets are present but their shapes/dtypes disagree."""


class DataError(SpikeflagError, ValueError):
    """Values violate a data invariant (e.g. NaN/Inf)."""


class ShapeError(SpikeflagError, ValueError):
    pass


class DomainError(SpikeflagError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class AssemblyError(SpikeflagError, ValueError):
    """Patches cannot be reassembled (overlap or gap)."""


class UndefinedMetricError(SpikeflagError, ValueError):
    """A metric is undefined for the supplied labels (e.g. single class)."""
