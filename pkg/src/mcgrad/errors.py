"""Exception hierarchy shared by all mcgrad modules."""


class McgradError(Exception):
    """Base class for library errors."""


class UnsupportedCapability(McgradError):
    """The distribution (or flow) does not provide the requested operation."""


class DomainError(McgradError, ValueError):
    """A point lies where the requested quantity is undefined."""


class ZeroDensityError(DomainError):
    """Density (or sampling density) is zero where a ratio needs it."""


class DimensionMismatch(McgradError, ValueError):
    pass


class CrossCheckError(McgradError):
    """An internal consistency check between two routes failed."""


class ConfigError(McgradError, ValueError):
    """Invalid run configuration, unknown registry name or bad CLI input."""
