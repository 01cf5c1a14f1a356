"""Exception hierarchy shared across the package."""


class OcdgrError(Exception):
    """Base class for all package errors."""


class DimensionError(OcdgrError):
    """Array shapes are inconsistent with the model dimensions."""


class DomainError(OcdgrError):
    """A value lies outside its admissible domain (e.g. a probability > 1)."""


class EmptyBatchError(OcdgrError):
    """An operation that requires data received an empty batch."""


class FormatError(OcdgrError):
    """An input file does not conform to its declared format."""


class ConfigError(OcdgrError):
    """An experiment configuration is invalid or incomplete."""


class InfeasibleSizeError(OcdgrError):
    """An exact computation was requested at a size where it cannot run."""


class ScheduleError(OcdgrError):
    """An annealing schedule violates its monotonicity/endpoint contract."""
