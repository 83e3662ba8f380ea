"""Exception types shared across the package."""


class CgksError(Exception):
    """Base class for all package errors."""


class MeshError(CgksError):
    """Invalid mesh input: degenerate cells, non-conforming faces, bad tags."""


class InvalidStateError(CgksError):
    """A state with non-positive density or internal energy was produced."""


class ConfigError(CgksError):
    """Bad configuration file or command-line value."""


class NumericalError(CgksError):
    """The run failed numerically (positivity guard exhausted, NaN update)."""
